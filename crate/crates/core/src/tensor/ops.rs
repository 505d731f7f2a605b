//! Forward tensor operations. Each returns a new tensor and records the
//! graph edge when gradients are being tracked.

use std::rc::Rc;

use crate::error::{Error, Result};

use super::kernels;
use super::{Op, SpatialAxis, Tensor};

fn assert_same_shape(op: &'static str, a: &Tensor, b: &Tensor) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: shape mismatch between {:?} and {:?}",
        a.shape(),
        b.shape()
    );
}

/// Splits a shape into (leading batch product, trailing dims) for ops that
/// accept an optional batch dimension in front of a fixed-rank layout.
fn split_batch<'a>(shape: &'a [usize], rank: usize, op: &'static str) -> Result<(usize, &'a [usize])> {
    if shape.len() == rank {
        Ok((1, shape))
    } else if shape.len() == rank + 1 {
        Ok((shape[0], &shape[1..]))
    } else {
        Err(Error::BadShape {
            op,
            expected: format!("rank {rank} or {} tensor", rank + 1),
            got: shape.to_vec(),
        })
    }
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_same_shape("add", self, other);
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Add(self.clone(), other.clone()))
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_same_shape("sub", self, other);
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Sub(self.clone(), other.clone()))
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        assert_same_shape("mul", self, other);
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Mul(self.clone(), other.clone()))
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        assert_same_shape("div", self, other);
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a / b)
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Div(self.clone(), other.clone()))
    }

    pub fn add_scalar(&self, c: f32) -> Tensor {
        let data = self.data().iter().map(|a| a + c).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::AddScalar(self.clone()))
    }

    pub fn mul_scalar(&self, c: f32) -> Tensor {
        let data = self.data().iter().map(|a| a * c).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::MulScalar(self.clone(), c))
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    /// Elementwise signed power `sign(x)·|x|^p`.
    ///
    /// For non-negative inputs this is the plain power `x^p`. Negative inputs
    /// (which appear on unclamped network outputs) are mapped through the odd
    /// extension so the result stays finite and monotone.
    pub fn powf(&self, p: f32) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&x| {
                if x >= 0.0 {
                    x.powf(p)
                } else {
                    -(-x).powf(p)
                }
            })
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::PowScalar(self.clone(), p))
    }

    pub fn abs(&self) -> Tensor {
        let data = self.data().iter().map(|a| a.abs()).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Abs(self.clone()))
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        let data = self.data().iter().map(|a| a.clamp(lo, hi)).collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::Clamp(self.clone(), lo, hi))
    }

    pub fn clamp01(&self) -> Tensor {
        self.clamp(0.0, 1.0)
    }

    pub fn leaky_relu(&self, slope: f32) -> Tensor {
        let data = self
            .data()
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        Tensor::from_op(data, self.shape().to_vec(), Op::LeakyRelu(self.clone(), slope))
    }

    /// Mean over all elements, as a shape-`[1]` tensor.
    pub fn reduce_mean(&self) -> Tensor {
        let n = self.numel();
        assert!(n > 0, "reduce_mean on empty tensor");
        let mean = (kernels::sum_f64(&self.data()) / n as f64) as f32;
        Tensor::from_op(vec![mean], vec![1], Op::ReduceMean(self.clone()))
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            self.numel(),
            "reshape: cannot view {:?} as {:?}",
            self.shape(),
            shape
        );
        Tensor::from_op(self.to_vec(), shape.to_vec(), Op::Reshape(self.clone()))
    }

    /// 2D convolution: NCHW input, OIHW weight, zero padding.
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        let ishape = self.shape();
        let wshape = weight.shape();
        if ishape.len() != 4 || wshape.len() != 4 {
            return Err(Error::BadShape {
                op: "conv2d",
                expected: "4-d input (NCHW) and 4-d weight (OIHW)".into(),
                got: if ishape.len() != 4 { ishape.to_vec() } else { wshape.to_vec() },
            });
        }
        let (n, ci, h, w) = (ishape[0], ishape[1], ishape[2], ishape[3]);
        let (co, wi, kh, kw) = (wshape[0], wshape[1], wshape[2], wshape[3]);
        if ci != wi {
            return Err(Error::ShapeMismatch {
                op: "conv2d: input channels vs weight input channels",
                lhs: ishape.to_vec(),
                rhs: wshape.to_vec(),
            });
        }
        if bias.shape() != [co] {
            return Err(Error::ShapeMismatch {
                op: "conv2d: bias vs weight output channels",
                lhs: bias.shape().to_vec(),
                rhs: wshape.to_vec(),
            });
        }
        assert!(stride >= 1, "conv2d: stride must be >= 1");
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::BadShape {
                op: "conv2d",
                expected: format!("spatial dims >= kernel {kh}x{kw} after padding {padding}"),
                got: ishape.to_vec(),
            });
        }
        let (oh, ow) = kernels::conv2d_out_dims(h, w, kh, kw, stride, padding);
        let out = kernels::conv2d_forward(
            &self.data(),
            n,
            ci,
            h,
            w,
            &weight.data(),
            co,
            kh,
            kw,
            &bias.data(),
            stride,
            padding,
        );
        Ok(Tensor::from_op(
            out,
            vec![n, co, oh, ow],
            Op::Conv2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
                stride,
                padding,
            },
        ))
    }

    /// 2x2 average pooling over the last two dims (NCHW).
    pub fn avg_pool_2x2(&self) -> Tensor {
        let s = self.shape();
        assert_eq!(s.len(), 4, "avg_pool_2x2 expects NCHW, got {:?}", s);
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool_2x2: odd spatial dims {h}x{w}");
        let out = kernels::avg_pool_2x2_forward(&self.data(), n * c, h, w);
        Tensor::from_op(out, vec![n, c, h / 2, w / 2], Op::AvgPool2x2(self.clone()))
    }

    /// Nearest-neighbour 2x upsampling over the last two dims (NCHW).
    pub fn upsample_nearest_2x(&self) -> Tensor {
        let s = self.shape();
        assert_eq!(s.len(), 4, "upsample_nearest_2x expects NCHW, got {:?}", s);
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let out = kernels::upsample_nearest_2x_forward(&self.data(), n * c, h, w);
        Tensor::from_op(out, vec![n, c, h * 2, w * 2], Op::UpsampleNearest2x(self.clone()))
    }

    /// Concatenation along the channel dim of two NCHW tensors.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        let a = self.shape();
        let b = other.shape();
        if a.len() != 4 || b.len() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3] {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        let (n, ca, cb, h, w) = (a[0], a[1], b[1], a[2], a[3]);
        let mut out = Vec::with_capacity((ca + cb) * n * h * w);
        let da = self.data();
        let db = other.data();
        for bn in 0..n {
            out.extend_from_slice(&da[bn * ca * h * w..(bn + 1) * ca * h * w]);
            out.extend_from_slice(&db[bn * cb * h * w..(bn + 1) * cb * h * w]);
        }
        Ok(Tensor::from_op(
            out,
            vec![n, ca + cb, h, w],
            Op::ConcatChannels(self.clone(), other.clone()),
        ))
    }

    /// Separable Gaussian blur with reflect padding over the last two dims.
    ///
    /// The 1D kernel is normalized to sum 1, so constants are preserved.
    pub fn gaussian_blur(&self, sigma: f32, kernel_size: usize) -> Result<Tensor> {
        if kernel_size % 2 == 0 || kernel_size == 0 {
            return Err(Error::EvenKernel(kernel_size));
        }
        assert!(sigma > 0.0, "gaussian_blur: sigma must be positive");
        let s = self.shape();
        assert_eq!(s.len(), 4, "gaussian_blur expects NCHW, got {:?}", s);
        let kernel: Rc<[f32]> = gaussian_kernel_1d(sigma, kernel_size).into();
        let blurred_w = self.blur_axis(kernel.clone(), SpatialAxis::W);
        Ok(blurred_w.blur_axis(kernel, SpatialAxis::H))
    }

    pub(crate) fn blur_axis(&self, kernel: Rc<[f32]>, axis: SpatialAxis) -> Tensor {
        let s = self.shape();
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let data = self.data();
        let out = match axis {
            SpatialAxis::W => kernels::blur_w_forward(&data, n * c, h, w, &kernel),
            SpatialAxis::H => kernels::blur_h_forward(&data, n * c, h, w, &kernel),
        };
        drop(data);
        Tensor::from_op(
            out,
            s.to_vec(),
            Op::BlurAxis {
                input: self.clone(),
                kernel,
                axis,
            },
        )
    }

    /// Per-pixel 3x3 matrix over the channel dim of a (..,3,H,W) tensor:
    /// `out[c] = sum_k m[c][k] * in[k]`.
    pub(crate) fn channel_matrix3(&self, m: [[f32; 3]; 3]) -> Result<Tensor> {
        let (batch, dims) = split_batch(self.shape(), 3, "channel_matrix3")?;
        if dims[0] != 3 {
            return Err(Error::BadShape {
                op: "channel_matrix3",
                expected: "3 channels".into(),
                got: self.shape().to_vec(),
            });
        }
        let (h, w) = (dims[1], dims[2]);
        let plane = h * w;
        let data = self.data();
        let mut out = vec![0.0f32; data.len()];
        for b in 0..batch {
            let base = b * 3 * plane;
            for p in 0..plane {
                let r = data[base + p];
                let g = data[base + plane + p];
                let bl = data[base + 2 * plane + p];
                for (c, row) in m.iter().enumerate() {
                    out[base + c * plane + p] = row[0] * r + row[1] * g + row[2] * bl;
                }
            }
        }
        drop(data);
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            Op::ChannelMatrix3 {
                input: self.clone(),
                m,
            },
        ))
    }

    /// (..,4,H,W) RGGB planes -> (..,3,H,W) with the greens averaged.
    pub(crate) fn green_average(&self) -> Result<Tensor> {
        let (batch, dims) = split_batch(self.shape(), 3, "green_average")?;
        if dims[0] != 4 {
            return Err(Error::BadShape {
                op: "green_average",
                expected: "4 RGGB planes".into(),
                got: self.shape().to_vec(),
            });
        }
        let (h, w) = (dims[1], dims[2]);
        let plane = h * w;
        let data = self.data();
        let mut out = vec![0.0f32; batch * 3 * plane];
        for b in 0..batch {
            let ib = b * 4 * plane;
            let ob = b * 3 * plane;
            for p in 0..plane {
                out[ob + p] = data[ib + p];
                out[ob + plane + p] = 0.5 * (data[ib + plane + p] + data[ib + 2 * plane + p]);
                out[ob + 2 * plane + p] = data[ib + 3 * plane + p];
            }
        }
        drop(data);
        let mut shape = self.shape().to_vec();
        let clen = shape.len();
        shape[clen - 3] = 3;
        Ok(Tensor::from_op(out, shape, Op::GreenAverage(self.clone())))
    }

    /// (..,3,2H,2W) full-resolution image -> (..,4,H,W) packed RGGB planes.
    ///
    /// Block (2i,2j): R from red at (2i,2j), G1 from green at (2i,2j+1),
    /// G2 from green at (2i+1,2j), B from blue at (2i+1,2j+1).
    pub(crate) fn mosaic_rggb(&self) -> Result<Tensor> {
        let (batch, dims) = split_batch(self.shape(), 3, "mosaic")?;
        if dims[0] != 3 {
            return Err(Error::BadShape {
                op: "mosaic",
                expected: "3 channels".into(),
                got: self.shape().to_vec(),
            });
        }
        let (fh, fw) = (dims[1], dims[2]);
        if fh % 2 != 0 || fw % 2 != 0 {
            return Err(Error::OddDims {
                op: "mosaic",
                h: fh,
                w: fw,
            });
        }
        let (h, w) = (fh / 2, fw / 2);
        let fplane = fh * fw;
        let plane = h * w;
        let data = self.data();
        let mut out = vec![0.0f32; batch * 4 * plane];
        for b in 0..batch {
            let ib = b * 3 * fplane;
            let ob = b * 4 * plane;
            for y in 0..h {
                for x in 0..w {
                    let p = y * w + x;
                    let r0 = 2 * y * fw + 2 * x;
                    let r1 = r0 + fw;
                    out[ob + p] = data[ib + r0]; // R at (2y, 2x)
                    out[ob + plane + p] = data[ib + fplane + r0 + 1]; // G1 at (2y, 2x+1)
                    out[ob + 2 * plane + p] = data[ib + fplane + r1]; // G2 at (2y+1, 2x)
                    out[ob + 3 * plane + p] = data[ib + 2 * fplane + r1 + 1]; // B at (2y+1, 2x+1)
                }
            }
        }
        drop(data);
        let mut shape = self.shape().to_vec();
        let clen = shape.len();
        shape[clen - 3] = 4;
        shape[clen - 2] = h;
        shape[clen - 1] = w;
        Ok(Tensor::from_op(out, shape, Op::Mosaic(self.clone())))
    }
}

/// Normalized 1D Gaussian kernel (computed in f64, stored as f32).
pub fn gaussian_kernel_1d(sigma: f32, kernel_size: usize) -> Vec<f32> {
    let c = (kernel_size / 2) as f64;
    let s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (0..kernel_size)
        .map(|i| {
            let x = i as f64 - c;
            (-x * x / s2).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| (v / total) as f32).collect()
}
