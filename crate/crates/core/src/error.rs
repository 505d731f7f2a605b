//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("gaussian kernel size must be odd and positive, got {0}")]
    EvenKernel(usize),

    #[error(
        "image {got_h}x{got_w} too small for {scales} scales with kernel {kernel}: \
         min spatial dim is {required}"
    )]
    ImageTooSmall {
        got_h: usize,
        got_w: usize,
        scales: usize,
        kernel: usize,
        required: usize,
    },

    #[error("{op}: spatial dims must be even, got {h}x{w}")]
    OddDims { op: &'static str, h: usize, w: usize },

    #[error("{op}: negative input {value} at flat index {index} (checked mode)")]
    NegativeInput {
        op: &'static str,
        value: f32,
        index: usize,
    },

    #[error("{op}: non-finite value {value} at flat index {index}")]
    NonFinite {
        op: &'static str,
        value: f32,
        index: usize,
    },

    #[error("config mismatch on load: field `{field}` is {found} in file, expected {expected}")]
    ConfigMismatch {
        field: &'static str,
        found: String,
        expected: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad tensor file: {reason}")]
    BadTensorFile { path: PathBuf, reason: String },

    #[error("training aborted: non-finite loss in {branch} at epoch {epoch}, batch {batch}")]
    NanLoss {
        branch: String,
        epoch: usize,
        batch: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
