//! Bayer mosaic packing, classical demosaicing, and Bayer -> YUV conversion.
//!
//! The CFA pattern is fixed to RGGB. A packed [`BayerImage`] holds four
//! planes (R, G1, G2, B) at half the RGB resolution.

use std::path::Path;

use crate::color::YUV_MATRIX;
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Packed (4,H,W) RGGB Bayer image in the linear RAW domain.
#[derive(Clone)]
pub struct BayerImage {
    tensor: Tensor,
}

impl BayerImage {
    /// Wraps a (4,H,W) tensor.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] != 4 {
            return Err(Error::BadShape {
                op: "bayer image",
                expected: "(4,H,W) tensor".into(),
                got: s.to_vec(),
            });
        }
        Ok(BayerImage { tensor: t })
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        tensor::save_tensor(path, &self.tensor)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        BayerImage::from_tensor(tensor::load_tensor(path)?)
    }
}

/// Which classical demosaicer to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Demosaicer {
    Bilinear,
    /// Gradient-corrected linear filtering with the published 5x5 kernels.
    #[default]
    Malvar,
}

/// Packs a full-resolution (3,2H,2W) image into RGGB planes.
///
/// Differentiable: gradients scatter back to the sampled positions.
pub fn mosaic(raw: &Tensor) -> Result<BayerImage> {
    BayerImage::from_tensor(raw.mosaic_rggb()?)
}

pub fn demosaic(bayer: &BayerImage, which: Demosaicer) -> Tensor {
    match which {
        Demosaicer::Bilinear => demosaic_bilinear(bayer),
        Demosaicer::Malvar => demosaic_malvar(bayer),
    }
}

/// Channelwise bilinear interpolation of the missing samples. Sampled sites
/// are copied through unchanged; output is clamped to [0,1].
pub fn demosaic_bilinear(bayer: &BayerImage) -> Tensor {
    let (h, w) = (bayer.height(), bayer.width());
    let (fh, fw) = (2 * h, 2 * w);
    let cfa = unpack_cfa(bayer);
    let at = |y: isize, x: isize| cfa[reflect(y, fh) * fw + reflect(x, fw)];

    let fplane = fh * fw;
    let mut out = vec![0.0f32; 3 * fplane];
    for y in 0..fh {
        for x in 0..fw {
            let (yi, xi) = (y as isize, x as isize);
            let p = y * fw + x;
            let cross = 0.25 * (at(yi - 1, xi) + at(yi + 1, xi) + at(yi, xi - 1) + at(yi, xi + 1));
            let diag = 0.25
                * (at(yi - 1, xi - 1) + at(yi - 1, xi + 1) + at(yi + 1, xi - 1) + at(yi + 1, xi + 1));
            let horiz = 0.5 * (at(yi, xi - 1) + at(yi, xi + 1));
            let vert = 0.5 * (at(yi - 1, xi) + at(yi + 1, xi));
            let (r, g, b) = match (y % 2, x % 2) {
                (0, 0) => (at(yi, xi), cross, diag),  // R site
                (0, 1) => (horiz, at(yi, xi), vert),  // G1 site (R row)
                (1, 0) => (vert, at(yi, xi), horiz),  // G2 site (B row)
                _ => (diag, cross, at(yi, xi)),       // B site
            };
            out[p] = r.clamp(0.0, 1.0);
            out[fplane + p] = g.clamp(0.0, 1.0);
            out[2 * fplane + p] = b.clamp(0.0, 1.0);
        }
    }
    Tensor::from_vec(out, &[3, fh, fw])
}

// Malvar-He-Cutler 5x5 kernels, all divided by 8. `CROSS` estimates green at
// an R/B site; `AXIAL_H`/`AXIAL_V` estimate R/B at a green site with the
// same-color neighbours in the row/column; `CHECKER` estimates R at B (and
// B at R).
const CROSS: [[f32; 5]; 5] = [
    [0.0, 0.0, -0.125, 0.0, 0.0],
    [0.0, 0.0, 0.25, 0.0, 0.0],
    [-0.125, 0.25, 0.5, 0.25, -0.125],
    [0.0, 0.0, 0.25, 0.0, 0.0],
    [0.0, 0.0, -0.125, 0.0, 0.0],
];
const AXIAL_H: [[f32; 5]; 5] = [
    [0.0, 0.0, 0.0625, 0.0, 0.0],
    [0.0, -0.125, 0.0, -0.125, 0.0],
    [-0.125, 0.5, 0.625, 0.5, -0.125],
    [0.0, -0.125, 0.0, -0.125, 0.0],
    [0.0, 0.0, 0.0625, 0.0, 0.0],
];
const AXIAL_V: [[f32; 5]; 5] = [
    [0.0, 0.0, -0.125, 0.0, 0.0],
    [0.0, -0.125, 0.5, -0.125, 0.0],
    [0.0625, 0.0, 0.625, 0.0, 0.0625],
    [0.0, -0.125, 0.5, -0.125, 0.0],
    [0.0, 0.0, -0.125, 0.0, 0.0],
];
const CHECKER: [[f32; 5]; 5] = [
    [0.0, 0.0, -0.1875, 0.0, 0.0],
    [0.0, 0.25, 0.0, 0.25, 0.0],
    [-0.1875, 0.0, 0.75, 0.0, -0.1875],
    [0.0, 0.25, 0.0, 0.25, 0.0],
    [0.0, 0.0, -0.1875, 0.0, 0.0],
];

/// Gradient-corrected linear demosaicing (Malvar-He-Cutler coefficients),
/// reflect padding at the borders, output clamped to [0,1].
pub fn demosaic_malvar(bayer: &BayerImage) -> Tensor {
    let (h, w) = (bayer.height(), bayer.width());
    let (fh, fw) = (2 * h, 2 * w);
    let cfa = unpack_cfa(bayer);

    // f64 accumulation: all kernel weights are dyadic, so the mixed-sign sum
    // is exact and constants are preserved bit-for-bit.
    let stencil = |y: usize, x: usize, k: &[[f32; 5]; 5]| -> f32 {
        let mut acc = 0.0f64;
        for (dy, row) in k.iter().enumerate() {
            for (dx, &kv) in row.iter().enumerate() {
                if kv != 0.0 {
                    let sy = reflect(y as isize + dy as isize - 2, fh);
                    let sx = reflect(x as isize + dx as isize - 2, fw);
                    acc += kv as f64 * cfa[sy * fw + sx] as f64;
                }
            }
        }
        acc as f32
    };

    let fplane = fh * fw;
    let mut out = vec![0.0f32; 3 * fplane];
    for y in 0..fh {
        for x in 0..fw {
            let p = y * fw + x;
            let v = cfa[p];
            let (r, g, b) = match (y % 2, x % 2) {
                // R site: G from cross, B from checker.
                (0, 0) => (v, stencil(y, x, &CROSS), stencil(y, x, &CHECKER)),
                // G1 site: R neighbours sit in this row, B in this column.
                (0, 1) => (stencil(y, x, &AXIAL_H), v, stencil(y, x, &AXIAL_V)),
                // G2 site: R in column, B in row.
                (1, 0) => (stencil(y, x, &AXIAL_V), v, stencil(y, x, &AXIAL_H)),
                // B site.
                _ => (stencil(y, x, &CHECKER), stencil(y, x, &CROSS), v),
            };
            out[p] = r.clamp(0.0, 1.0);
            out[fplane + p] = g.clamp(0.0, 1.0);
            out[2 * fplane + p] = b.clamp(0.0, 1.0);
        }
    }
    Tensor::from_vec(out, &[3, fh, fw])
}

/// Maps a Bayer image to (3,H,W) YUV: per site (R, (G1+G2)/2, B) through the
/// YUV matrix.
pub fn bayer_to_yuv3(bayer: &BayerImage) -> Result<Tensor> {
    bayer_tensor_to_yuv3(bayer.tensor())
}

/// Differentiable form of [`bayer_to_yuv3`] on a (..,4,H,W) tensor; used by
/// the YUV refinement stage where gradients must reach the planes.
pub fn bayer_tensor_to_yuv3(t: &Tensor) -> Result<Tensor> {
    t.green_average()?.channel_matrix3(YUV_MATRIX)
}

/// Full-resolution CFA view of the packed planes: each full-res position
/// holds the one sample the sensor measured there.
fn unpack_cfa(bayer: &BayerImage) -> Vec<f32> {
    let (h, w) = (bayer.height(), bayer.width());
    let (fh, fw) = (2 * h, 2 * w);
    let d = bayer.tensor().data();
    let plane = h * w;
    let mut cfa = vec![0.0f32; fh * fw];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let r0 = 2 * y * fw + 2 * x;
            let r1 = r0 + fw;
            cfa[r0] = d[p];
            cfa[r0 + 1] = d[plane + p];
            cfa[r1] = d[2 * plane + p];
            cfa[r1 + 1] = d[3 * plane + p];
        }
    }
    cfa
}

/// Reflect index preserving CFA phase (offsets are folded by even amounts).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    crate::tensor::kernels::reflect(i, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn constant_bayer(r: f32, g1: f32, g2: f32, b: f32, h: usize, w: usize) -> BayerImage {
        let plane = h * w;
        let mut data = Vec::with_capacity(4 * plane);
        for v in [r, g1, g2, b] {
            data.extend(std::iter::repeat(v).take(plane));
        }
        BayerImage::from_tensor(Tensor::from_vec(data, &[4, h, w])).unwrap()
    }

    #[test]
    fn mosaic_of_constant_image() {
        let mut data = Vec::new();
        for v in [0.2f32, 0.5, 0.8] {
            data.extend(std::iter::repeat(v).take(16));
        }
        let raw = Tensor::from_vec(data, &[3, 4, 4]);
        let b = mosaic(&raw).unwrap();
        let d = b.tensor().to_vec();
        assert_eq!(b.height(), 2);
        for p in 0..4 {
            assert_eq!(d[p], 0.2); // R
            assert_eq!(d[4 + p], 0.5); // G1
            assert_eq!(d[8 + p], 0.5); // G2
            assert_eq!(d[12 + p], 0.8); // B
        }
    }

    #[test]
    fn mosaic_samples_the_stated_positions() {
        // 2x2 image with distinct values everywhere.
        let mut data = vec![0.0f32; 12];
        for c in 0..3 {
            for p in 0..4 {
                data[c * 4 + p] = (c * 4 + p) as f32 / 16.0;
            }
        }
        let raw = Tensor::from_vec(data.clone(), &[3, 2, 2]);
        let b = mosaic(&raw).unwrap();
        let d = b.tensor().to_vec();
        assert_eq!(d[0], data[0]); // R at (0,0)
        assert_eq!(d[1], data[4 + 1]); // G at (0,1)
        assert_eq!(d[2], data[4 + 2]); // G at (1,0)
        assert_eq!(d[3], data[8 + 3]); // B at (1,1)
    }

    #[test]
    fn mosaic_rejects_odd_dims() {
        let raw = Tensor::zeros(&[3, 3, 4]);
        assert!(matches!(mosaic(&raw), Err(Error::OddDims { .. })));
    }

    #[test]
    fn demosaic_preserves_constants_exactly() {
        for which in [Demosaicer::Bilinear, Demosaicer::Malvar] {
            let b = constant_bayer(0.3, 0.6, 0.6, 0.9, 3, 5);
            let full = demosaic(&b, which);
            assert_eq!(full.shape(), &[3, 6, 10]);
            let d = full.to_vec();
            let plane = 60;
            for p in 0..plane {
                assert_eq!(d[p], 0.3, "{which:?} R at {p}");
                assert_eq!(d[plane + p], 0.6, "{which:?} G at {p}");
                assert_eq!(d[2 * plane + p], 0.9, "{which:?} B at {p}");
            }
        }
    }

    #[test]
    fn constant_roundtrip_mosaic_demosaic() {
        let b = constant_bayer(0.25, 0.5, 0.5, 0.75, 4, 4);
        for which in [Demosaicer::Bilinear, Demosaicer::Malvar] {
            let again = mosaic(&demosaic(&b, which)).unwrap();
            assert_eq!(again.tensor().to_vec(), b.tensor().to_vec(), "{which:?}");
        }
    }

    #[test]
    fn demosaic_reproduces_linear_ramps_on_interior() {
        // All channels share a horizontal linear ramp; interior estimates
        // must be exact for both interpolators (zero curvature).
        let (h, w) = (6, 8);
        let (fh, fw) = (2 * h, 2 * w);
        let ramp = |x: usize| x as f32 / (2 * fw) as f32;
        let mut planes = vec![0.0f32; 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                planes[p] = ramp(2 * x);
                planes[h * w + p] = ramp(2 * x + 1);
                planes[2 * h * w + p] = ramp(2 * x);
                planes[3 * h * w + p] = ramp(2 * x + 1);
            }
        }
        let b = BayerImage::from_tensor(Tensor::from_vec(planes, &[4, h, w])).unwrap();
        for which in [Demosaicer::Bilinear, Demosaicer::Malvar] {
            let full = demosaic(&b, which);
            let d = full.to_vec();
            let fplane = fh * fw;
            for y in 2..fh - 2 {
                for x in 2..fw - 2 {
                    for c in 0..3 {
                        let got = d[c * fplane + y * fw + x];
                        let want = ramp(x);
                        assert!(
                            (got - want).abs() < 1e-6,
                            "{which:?} c={c} ({y},{x}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn demosaic_keeps_sampled_sites() {
        let mut rng = crate::tests_support::rng(21);
        let data: Vec<f32> = (0..4 * 4 * 4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b = BayerImage::from_tensor(Tensor::from_vec(data.clone(), &[4, 4, 4])).unwrap();
        for which in [Demosaicer::Bilinear, Demosaicer::Malvar] {
            let again = mosaic(&demosaic(&b, which)).unwrap();
            assert_eq!(again.tensor().to_vec(), data, "{which:?}");
        }
    }

    #[test]
    fn demosaic_stays_in_unit_range() {
        let mut rng = crate::tests_support::rng(33);
        for _ in 0..20 {
            let data: Vec<f32> = (0..4 * 36).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b = BayerImage::from_tensor(Tensor::from_vec(data, &[4, 6, 6])).unwrap();
            for which in [Demosaicer::Bilinear, Demosaicer::Malvar] {
                for v in demosaic(&b, which).to_vec() {
                    assert!((0.0..=1.0).contains(&v), "{which:?}: {v}");
                }
            }
        }
    }

    #[test]
    fn yuv3_of_unit_planes() {
        let b = constant_bayer(1.0, 1.0, 1.0, 1.0, 2, 2);
        let yuv = bayer_to_yuv3(&b).unwrap().to_vec();
        assert!((yuv[0] - 1.0).abs() < 1e-5);
        assert!(yuv[4].abs() < 1e-4);
        assert!(yuv[8].abs() < 1e-4);
    }

    #[test]
    fn yuv3_averages_the_greens() {
        let b = constant_bayer(0.0, 0.4, 0.6, 0.0, 2, 2);
        let yuv = bayer_to_yuv3(&b).unwrap().to_vec();
        // Y = 0.587 * 0.5
        assert!((yuv[0] - 0.2935).abs() < 1e-6, "Y = {}", yuv[0]);
    }

    #[test]
    fn yuv3_of_zero_is_zero() {
        let b = constant_bayer(0.0, 0.0, 0.0, 0.0, 2, 3);
        assert!(bayer_to_yuv3(&b).unwrap().to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_contract_roundtrip() {
        let raw = Tensor::zeros(&[3, 12, 8]);
        let b = mosaic(&raw).unwrap();
        assert_eq!(b.tensor().shape(), &[4, 6, 4]);
        let full = demosaic_bilinear(&b);
        assert_eq!(full.shape(), &[3, 12, 8]);
        let again = mosaic(&full).unwrap();
        assert_eq!(again.tensor().shape(), &[4, 6, 4]);
    }
}
