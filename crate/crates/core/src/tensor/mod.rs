//! Dense f32 tensors with reverse-mode automatic differentiation.
//!
//! Tensors are row-major flat buffers plus a shape. Every operation that is
//! built from at least one tracked input records its parents, so calling
//! [`Tensor::backward`] on a scalar walks the graph in reverse topological
//! order and accumulates `d(loss)/d(tensor)` into each tensor that has
//! `requires_grad` set. Graphs are single-threaded by construction (`Tensor`
//! is `!Send`); distinct graphs may live on distinct threads.

mod adam;
mod backward;
mod io;
pub(crate) mod kernels;
mod ops;

pub use adam::{adam_step, Adam, AdamParams, AdamState};
pub use io::{load_tensor, read_tensor, save_tensor, write_tensor, RTN1_MAGIC};

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static NO_GRAD_DEPTH: Cell<u32> = const { Cell::new(0) };
}

/// Re-enables graph recording for the current thread when dropped.
pub struct NoGradGuard {
    _private: (),
}

/// Disables graph recording on this thread until the returned guard drops.
///
/// Forward results are bit-identical with and without recording; only the
/// bookkeeping is skipped.
pub fn no_grad() -> NoGradGuard {
    NO_GRAD_DEPTH.with(|d| d.set(d.get() + 1));
    NoGradGuard { _private: () }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        NO_GRAD_DEPTH.with(|d| d.set(d.get() - 1));
    }
}

pub(crate) fn grad_enabled() -> bool {
    NO_GRAD_DEPTH.with(|d| d.get() == 0)
}

/// Graph edge: which operation produced a tensor, holding its parents alive.
pub(crate) enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Div(Tensor, Tensor),
    AddScalar(Tensor),
    MulScalar(Tensor, f32),
    /// Elementwise signed power `sign(x)·|x|^p`; the local derivative
    /// `p·|x|^(p-1)` is capped at [`POW_GRAD_CAP`] so exact zeros (common in
    /// masked images) do not produce infinite gradients for p < 1.
    PowScalar(Tensor, f32),
    Abs(Tensor),
    Clamp(Tensor, f32, f32),
    LeakyRelu(Tensor, f32),
    ReduceMean(Tensor),
    Reshape(Tensor),
    Conv2d {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    AvgPool2x2(Tensor),
    UpsampleNearest2x(Tensor),
    ConcatChannels(Tensor, Tensor),
    /// Separable blur along one spatial axis with reflect padding.
    BlurAxis {
        input: Tensor,
        kernel: Rc<[f32]>,
        axis: SpatialAxis,
    },
    /// Per-pixel 3x3 color matrix over the channel dimension.
    ChannelMatrix3 {
        input: Tensor,
        m: [[f32; 3]; 3],
    },
    /// (..,4,H,W) RGGB planes -> (..,3,H,W) with the two greens averaged.
    GreenAverage(Tensor),
    /// (..,3,2H,2W) RGB -> (..,4,H,W) packed RGGB sampling.
    Mosaic(Tensor),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum SpatialAxis {
    H,
    W,
}

/// Cap applied to the local derivative of `PowScalar` (see the op docs).
pub const POW_GRAD_CAP: f32 = 1e4;

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f32>>,
    grad: RefCell<Option<Vec<f32>>>,
    requires_grad: Cell<bool>,
    op: Op,
}

/// A dense f32 tensor. Cloning is cheap (shared buffer).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl Tensor {
    fn new_inner(data: Vec<f32>, shape: Vec<usize>, op: Op) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(false),
                op,
            }),
        }
    }

    pub fn from_vec(data: Vec<f32>, shape: &[usize]) -> Tensor {
        Tensor::new_inner(data, shape.to_vec(), Op::Leaf)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(vec![value; numel], shape)
    }

    pub fn scalar(value: f32) -> Tensor {
        Tensor::from_vec(vec![value], &[1])
    }

    /// Uniform random tensor in `[lo, hi)` drawn from `rng`.
    pub fn rand_uniform(shape: &[usize], lo: f32, hi: f32, rng: &mut impl Rng) -> Tensor {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor::from_vec(data, shape)
    }

    /// Result of an op: records the graph edge only while grad mode is on and
    /// at least one parent is tracked, otherwise degrades to a leaf.
    pub(crate) fn from_op(data: Vec<f32>, shape: Vec<usize>, op: Op) -> Tensor {
        let record = grad_enabled() && op.parents().iter().any(|p| p.is_tracked());
        let op = if record { op } else { Op::Leaf };
        Tensor::new_inner(data, shape, op)
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, v: bool) {
        self.inner.requires_grad.set(v);
    }

    pub fn with_requires_grad(self) -> Tensor {
        self.set_requires_grad(true);
        self
    }

    /// True when this tensor participates in a recorded graph.
    pub fn is_tracked(&self) -> bool {
        self.requires_grad() || !matches!(self.inner.op, Op::Leaf)
    }

    pub fn data(&self) -> Ref<'_, Vec<f32>> {
        self.inner.data.borrow()
    }

    /// Mutable access to the raw buffer (optimizer steps).
    pub fn data_mut(&self) -> RefMut<'_, Vec<f32>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.data.borrow().clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f32 {
        assert_eq!(
            self.numel(),
            1,
            "item() on non-scalar tensor of shape {:?}",
            self.shape()
        );
        self.inner.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        if let Some(g) = self.inner.grad.borrow_mut().as_mut() {
            g.fill(0.0);
        }
    }

    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f32]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a += b;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    /// Copy of this tensor detached from any graph.
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(self.to_vec(), self.shape())
    }

    /// Errors on the first NaN/Inf entry (checked mode).
    pub fn check_finite(&self, op: &'static str) -> Result<()> {
        for (i, &v) in self.inner.data.borrow().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { op, value: v, index: i });
            }
        }
        Ok(())
    }

    pub(crate) fn op(&self) -> &Op {
        &self.inner.op
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("tracked", &self.is_tracked())
            .finish()
    }
}

impl Op {
    fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::ConcatChannels(a, b) => vec![a, b],
            Op::AddScalar(a)
            | Op::MulScalar(a, _)
            | Op::PowScalar(a, _)
            | Op::Abs(a)
            | Op::Clamp(a, _, _)
            | Op::LeakyRelu(a, _)
            | Op::ReduceMean(a)
            | Op::Reshape(a)
            | Op::AvgPool2x2(a)
            | Op::UpsampleNearest2x(a)
            | Op::GreenAverage(a)
            | Op::Mosaic(a) => vec![a],
            Op::Conv2d { input, weight, bias, .. } => vec![input, weight, bias],
            Op::BlurAxis { input, .. } => vec![input],
            Op::ChannelMatrix3 { input, .. } => vec![input],
        }
    }

    pub(crate) fn parent_tensors(&self) -> Vec<Tensor> {
        self.parents().into_iter().cloned().collect()
    }
}
