//! Reverse-ISP toolkit: reconstructing RAW Bayer data from RGB images.
//!
//! The pipeline trains two small encoder–decoder networks — one specialized
//! for overexposed pixels, one for the rest — against a demosaiced-RAW
//! target, fuses their outputs with a binary overexposure mask, and mosaics
//! the result back to a packed RGGB Bayer image. An optional refinement
//! stage fine-tunes both branches with a YUV-space loss between Bayer
//! images. Everything runs on the CPU on top of a minimal reverse-mode
//! autodiff engine and is exercised end-to-end on a synthetic forward-ISP
//! dataset generator.

pub mod bayer;
pub mod color;
pub mod error;
pub mod losses;
// pub mod metrics;
pub mod model;
// pub mod pipeline;
// pub mod render;
// pub mod synth;
pub mod tensor;

pub use bayer::BayerImage;
pub use color::{MaskMode, OverexposureMask};
pub use error::{Error, Result};
pub use tensor::{no_grad, Adam, AdamParams, AdamState, Tensor};

/// An sRGB-domain image stored as a (3,H,W) tensor with values in [0,1].
pub type RgbImage = Tensor;

/// A linear RAW-domain image at RGB resolution, stored as (3,H,W).
pub type DemosaicedRaw = Tensor;
