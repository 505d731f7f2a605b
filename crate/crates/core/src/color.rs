//! Color-space transforms, gamma correction, and overexposure masks.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// RGB -> YUV matrix, stored to exactly the printed digits.
pub const YUV_MATRIX: [[f32; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.14713, -0.28886, 0.436],
    [0.615, -0.51499, -0.10001],
];

/// Default luminance threshold marking a pixel as overexposed.
pub const LUMINANCE_THRESHOLD: f32 = 0.978;

/// Alternative max-channel threshold.
pub const MAX_RGB_THRESHOLD: f32 = 0.99;

/// How the overexposure mask is derived from an RGB image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskMode {
    /// Mark pixels whose YUV luminance is >= the threshold.
    LuminanceY { threshold: f32 },
    /// Mark pixels whose max channel is >= the threshold.
    MaxRgb { threshold: f32 },
}

impl Default for MaskMode {
    fn default() -> Self {
        MaskMode::LuminanceY {
            threshold: LUMINANCE_THRESHOLD,
        }
    }
}

impl MaskMode {
    pub fn max_rgb() -> Self {
        MaskMode::MaxRgb {
            threshold: MAX_RGB_THRESHOLD,
        }
    }

    pub fn threshold(&self) -> f32 {
        match *self {
            MaskMode::LuminanceY { threshold } | MaskMode::MaxRgb { threshold } => threshold,
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.threshold();
        if t > 0.0 && t <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "mask threshold must be in (0,1], got {t}"
            )))
        }
    }
}

/// Binary per-pixel overexposure map at image resolution.
///
/// Bits are stored as f32 0.0/1.0 so the mask can participate directly in
/// arithmetic fusion.
#[derive(Clone)]
pub struct OverexposureMask {
    tensor: Tensor,
}

impl OverexposureMask {
    /// Wraps an (H,W) tensor, validating that every element is 0 or 1.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(Error::BadShape {
                op: "overexposure mask",
                expected: "(H,W) tensor".into(),
                got: t.shape().to_vec(),
            });
        }
        for (i, &v) in t.data().iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "mask element {i} is {v}, expected 0 or 1"
                )));
            }
        }
        Ok(OverexposureMask { tensor: t })
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.tensor.data()[y * self.width() + x] == 1.0
    }

    /// Fraction of pixels marked overexposed.
    pub fn density(&self) -> f64 {
        let d = self.tensor.data();
        d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64
    }

    /// Mask replicated over `channels` planes: (C,H,W), untracked.
    pub fn expand_channels(&self, channels: usize) -> Tensor {
        let d = self.tensor.data();
        let mut out = Vec::with_capacity(channels * d.len());
        for _ in 0..channels {
            out.extend_from_slice(&d);
        }
        Tensor::from_vec(out, &[channels, self.height(), self.width()])
    }

    /// Complement mask (1 - bits) replicated over `channels` planes.
    pub fn expand_channels_inverted(&self, channels: usize) -> Tensor {
        let d = self.tensor.data();
        let mut out = Vec::with_capacity(channels * d.len());
        for _ in 0..channels {
            out.extend(d.iter().map(|v| 1.0 - v));
        }
        Tensor::from_vec(out, &[channels, self.height(), self.width()])
    }

    /// Downsamples to Bayer resolution with the any-overexposed rule: a 2x2
    /// block maps to 1 if any of its four pixels is 1.
    pub fn downsample_2x2_any(&self) -> Result<OverexposureMask> {
        let (h, w) = (self.height(), self.width());
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::OddDims {
                op: "mask downsample",
                h,
                w,
            });
        }
        let d = self.tensor.data();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0f32; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let r0 = 2 * y * w + 2 * x;
                let r1 = r0 + w;
                let any = d[r0] == 1.0 || d[r0 + 1] == 1.0 || d[r1] == 1.0 || d[r1 + 1] == 1.0;
                out[y * ow + x] = if any { 1.0 } else { 0.0 };
            }
        }
        drop(d);
        Ok(OverexposureMask {
            tensor: Tensor::from_vec(out, &[oh, ow]),
        })
    }
}

fn check_rgb_shape(op: &'static str, image: &Tensor) -> Result<(usize, usize)> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::BadShape {
            op,
            expected: "(3,H,W) image".into(),
            got: s.to_vec(),
        });
    }
    Ok((s[1], s[2]))
}

/// Per-pixel multiplication by [`YUV_MATRIX`]; differentiable.
pub fn rgb_to_yuv(image: &Tensor) -> Result<Tensor> {
    check_rgb_shape("rgb_to_yuv", image)?;
    image.channel_matrix3(YUV_MATRIX)
}

/// Inverse transform, using the numerically inverted [`YUV_MATRIX`].
pub fn yuv_to_rgb(image: &Tensor) -> Result<Tensor> {
    check_rgb_shape("yuv_to_rgb", image)?;
    image.channel_matrix3(*yuv_inverse())
}

/// The f32 inverse of [`YUV_MATRIX`], computed once in f64 and checked to a
/// residual of at most 1e-10.
pub fn yuv_inverse() -> &'static [[f32; 3]; 3] {
    static INV: OnceLock<[[f32; 3]; 3]> = OnceLock::new();
    INV.get_or_init(|| {
        let m: [[f64; 3]; 3] = YUV_MATRIX.map(|r| r.map(|v| v as f64));
        let inv = invert3(&m);
        // residual check: M * inv == I
        let mut max_res = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for (k, inv_row) in inv.iter().enumerate() {
                    acc += m[i][k] * inv_row[j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                max_res = max_res.max((acc - expect).abs());
            }
        }
        assert!(max_res <= 1e-10, "YUV matrix inversion residual {max_res}");
        inv.map(|r| r.map(|v| v as f32))
    })
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    assert!(det.abs() > 1e-12, "singular 3x3 matrix");
    let c = |a: usize, b: usize, cc: usize, d: usize| m[a][b] * m[cc][d] - m[a][d] * m[cc][b];
    [
        [c(1, 1, 2, 2) / det, -c(0, 1, 2, 2) / det, c(0, 1, 1, 2) / det],
        [-c(1, 0, 2, 2) / det, c(0, 0, 2, 2) / det, -c(0, 0, 1, 2) / det],
        [c(1, 0, 2, 1) / det, -c(0, 0, 2, 1) / det, c(0, 0, 1, 1) / det],
    ]
}

/// Luminance of one RGB pixel using the exact mask arithmetic.
#[inline]
pub fn luminance(r: f32, g: f32, b: f32) -> f32 {
    YUV_MATRIX[0][0] * r + YUV_MATRIX[0][1] * g + YUV_MATRIX[0][2] * b
}

/// Builds the binary overexposure mask from an sRGB image.
///
/// Threshold comparisons are inclusive (`>=`).
pub fn overexposure_mask(image: &Tensor, mode: MaskMode) -> Result<OverexposureMask> {
    mode.validate()?;
    let (h, w) = check_rgb_shape("overexposure_mask", image)?;
    let d = image.data();
    let plane = h * w;
    let mut bits = vec![0.0f32; plane];
    for p in 0..plane {
        let (r, g, b) = (d[p], d[plane + p], d[2 * plane + p]);
        let hot = match mode {
            MaskMode::LuminanceY { threshold } => luminance(r, g, b) >= threshold,
            MaskMode::MaxRgb { threshold } => r.max(g).max(b) >= threshold,
        };
        if hot {
            bits[p] = 1.0;
        }
    }
    drop(d);
    Ok(OverexposureMask {
        tensor: Tensor::from_vec(bits, &[h, w]),
    })
}

/// Elementwise power `x^gamma`; differentiable, with the local derivative at
/// zero capped (see [`crate::tensor::POW_GRAD_CAP`]).
pub fn gamma_correct(image: &Tensor, gamma: f32) -> Tensor {
    assert!(
        gamma > 0.0 && gamma <= 1.0,
        "gamma_correct: gamma must be in (0,1], got {gamma}"
    );
    image.powf(gamma)
}

/// Like [`gamma_correct`] but errors on negative input.
pub fn gamma_correct_checked(image: &Tensor, gamma: f32) -> Result<Tensor> {
    for (i, &v) in image.data().iter().enumerate() {
        if v < 0.0 {
            return Err(Error::NegativeInput {
                op: "gamma_correct",
                value: v,
                index: i,
            });
        }
    }
    Ok(gamma_correct(image, gamma))
}
