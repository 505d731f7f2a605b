//! Training objectives: L1/L2, SSIM, MS-SSIM, MS-SSIM-L1, masked and
//! gamma-wrapped application, and the non-overexposure composite.
//!
//! Every function returns a scalar tensor that participates in the autodiff
//! graph. SSIM-family functions return the similarity (1 on identical
//! inputs); losses built from them use `1 - similarity`.

use crate::color::OverexposureMask;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// SSIM stabilizers: (0.01)^2 and (0.03)^2 with dynamic range 1.0.
pub const SSIM_C1: f32 = 1e-4;
pub const SSIM_C2: f32 = 9e-4;

/// Reference multi-scale weights; truncated and renormalized when fewer
/// scales are used.
pub const MS_SSIM_WEIGHTS: [f32; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

#[derive(Clone, Copy, Debug)]
pub struct SsimParams {
    pub c1: f32,
    pub c2: f32,
    pub sigma: f32,
    pub kernel_size: usize,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            c1: SSIM_C1,
            c2: SSIM_C2,
            sigma: 1.5,
            kernel_size: 11,
        }
    }
}

/// Weights of the non-overexposure composite objective.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    /// Weight of the pluggable perceptual term; contributes only when a
    /// backend is registered.
    pub w_lpips: f32,
    pub w_l2: f32,
    pub w_msssim_l1: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_lpips: 1.0,
            w_l2: 0.05,
            w_msssim_l1: 0.75,
        }
    }
}

/// Configuration of the MS-SSIM-L1 objective.
#[derive(Clone, Debug)]
pub struct MsSsimL1Config {
    /// Blend between the MS-SSIM term and the Gaussian-weighted L1 term.
    pub alpha: f32,
    pub scale_count: usize,
    /// Per-scale exponents; must sum to 1.
    pub scale_weights: Vec<f32>,
    pub gaussian_sigma: f32,
    pub kernel_size: usize,
}

impl Default for MsSsimL1Config {
    fn default() -> Self {
        MsSsimL1Config::with_scales(3).unwrap()
    }
}

impl MsSsimL1Config {
    /// Truncates the reference 5-scale weights to `scale_count` and
    /// renormalizes them.
    pub fn with_scales(scale_count: usize) -> Result<Self> {
        if scale_count == 0 || scale_count > MS_SSIM_WEIGHTS.len() {
            return Err(Error::InvalidConfig(format!(
                "scale_count must be in 1..={}, got {scale_count}",
                MS_SSIM_WEIGHTS.len()
            )));
        }
        let raw = &MS_SSIM_WEIGHTS[..scale_count];
        let total: f32 = raw.iter().sum();
        Ok(MsSsimL1Config {
            alpha: 0.84,
            scale_count,
            scale_weights: raw.iter().map(|w| w / total).collect(),
            gaussian_sigma: 1.5,
            kernel_size: 11,
        })
    }

    /// Small configuration for tiny test images.
    pub fn small(scale_count: usize, kernel_size: usize) -> Result<Self> {
        let mut cfg = MsSsimL1Config::with_scales(scale_count)?;
        cfg.kernel_size = kernel_size;
        Ok(cfg)
    }

    pub fn min_spatial_dim(&self) -> usize {
        self.kernel_size << (self.scale_count - 1)
    }

    fn validate(&self) -> Result<()> {
        if self.scale_count == 0 || self.scale_weights.len() != self.scale_count {
            return Err(Error::InvalidConfig(format!(
                "scale_weights length {} does not match scale_count {}",
                self.scale_weights.len(),
                self.scale_count
            )));
        }
        let total: f32 = self.scale_weights.iter().sum();
        if (total - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidConfig(format!(
                "scale_weights must sum to 1, got {total}"
            )));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::EvenKernel(self.kernel_size));
        }
        if self.gaussian_sigma <= 0.0 {
            return Err(Error::InvalidConfig("gaussian_sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Pluggable perceptual-distance backend (disabled by default; none ships
/// with this crate).
pub trait LpipsBackend {
    fn distance(&self, pred: &Tensor, gt: &Tensor) -> Result<Tensor>;
}

/// Which side of the overexposure mask a masked loss keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKeep {
    Overexposed,
    NonOverexposed,
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("l1", a, b)?;
    Ok(a.sub(b).abs().reduce_mean())
}

/// Mean squared difference.
pub fn l2(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape("l2", a, b)?;
    let d = a.sub(b);
    Ok(d.mul(&d).reduce_mean())
}

/// Views an image tensor as NCHW, accepting (C,H,W) or (N,C,H,W).
fn as_nchw(op: &'static str, t: &Tensor) -> Result<Tensor> {
    match t.shape().len() {
        4 => Ok(t.clone()),
        3 => {
            let s = t.shape().to_vec();
            Ok(t.reshape(&[1, s[0], s[1], s[2]]))
        }
        _ => Err(Error::BadShape {
            op,
            expected: "(C,H,W) or (N,C,H,W) tensor".into(),
            got: t.shape().to_vec(),
        }),
    }
}

/// Per-position luminance and contrast-structure maps of windowed SSIM.
fn ssim_maps(
    x: &Tensor,
    y: &Tensor,
    sigma: f32,
    kernel: usize,
    c1: f32,
    c2: f32,
) -> Result<(Tensor, Tensor)> {
    let mu_x = x.gaussian_blur(sigma, kernel)?;
    let mu_y = y.gaussian_blur(sigma, kernel)?;
    let mu_x2 = mu_x.mul(&mu_x);
    let mu_y2 = mu_y.mul(&mu_y);
    let mu_xy = mu_x.mul(&mu_y);
    let var_x = x.mul(x).gaussian_blur(sigma, kernel)?.sub(&mu_x2).clamp(0.0, f32::INFINITY);
    let var_y = y.mul(y).gaussian_blur(sigma, kernel)?.sub(&mu_y2).clamp(0.0, f32::INFINITY);
    let cov_xy = x.mul(y).gaussian_blur(sigma, kernel)?.sub(&mu_xy);

    let lum = mu_xy
        .mul_scalar(2.0)
        .add_scalar(c1)
        .div(&mu_x2.add(&mu_y2).add_scalar(c1));
    let cs = cov_xy
        .mul_scalar(2.0)
        .add_scalar(c2)
        .div(&var_x.add(&var_y).add_scalar(c2));
    Ok((lum, cs))
}

fn check_min_dim(t: &Tensor, kernel: usize, scales: usize) -> Result<()> {
    let s = t.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let required = kernel << (scales - 1);
    if h < required || w < required {
        return Err(Error::ImageTooSmall {
            got_h: h,
            got_w: w,
            scales,
            kernel,
            required,
        });
    }
    Ok(())
}

/// Mean structural similarity over Gaussian windows (reflect padding);
/// 1 on identical inputs.
pub fn ssim(a: &Tensor, b: &Tensor, p: &SsimParams) -> Result<Tensor> {
    check_same_shape("ssim", a, b)?;
    let x = as_nchw("ssim", a)?;
    let y = as_nchw("ssim", b)?;
    check_min_dim(&x, p.kernel_size, 1)?;
    let (lum, cs) = ssim_maps(&x, &y, p.sigma, p.kernel_size, p.c1, p.c2)?;
    Ok(lum.mul(&cs).reduce_mean())
}

/// Multi-scale SSIM: contrast-structure at every scale, luminance at the
/// coarsest, combined with the per-scale exponents; downsampling by 2x
/// average pooling between scales.
pub fn ms_ssim(a: &Tensor, b: &Tensor, cfg: &MsSsimL1Config) -> Result<Tensor> {
    cfg.validate()?;
    check_same_shape("ms_ssim", a, b)?;
    let mut x = as_nchw("ms_ssim", a)?;
    let mut y = as_nchw("ms_ssim", b)?;
    check_min_dim(&x, cfg.kernel_size, cfg.scale_count)?;

    let mut result = Tensor::scalar(1.0);
    for (scale, &weight) in cfg.scale_weights.iter().enumerate() {
        let last = scale + 1 == cfg.scale_count;
        let (lum, cs) = ssim_maps(&x, &y, cfg.gaussian_sigma, cfg.kernel_size, SSIM_C1, SSIM_C2)?;
        let term = if last { lum.mul(&cs) } else { cs };
        // Negative window means are clamped before the fractional exponent.
        let mean = term.reduce_mean().clamp(0.0, f32::INFINITY);
        result = result.mul(&mean.powf(weight));
        if !last {
            x = x.avg_pool_2x2();
            y = y.avg_pool_2x2();
        }
    }
    Ok(result)
}

/// `alpha * (1 - MS-SSIM) + (1 - alpha) * mean(G_sigma ⊗ |a-b|)`.
pub fn ms_ssim_l1(a: &Tensor, b: &Tensor, cfg: &MsSsimL1Config) -> Result<Tensor> {
    let similarity = ms_ssim(a, b, cfg)?;
    let dissim = similarity.neg().add_scalar(1.0);
    let gl1 = as_nchw("ms_ssim_l1", a)?
        .sub(&as_nchw("ms_ssim_l1", b)?)
        .abs()
        .gaussian_blur(cfg.gaussian_sigma, cfg.kernel_size)?
        .reduce_mean();
    Ok(dissim.mul_scalar(cfg.alpha).add(&gl1.mul_scalar(1.0 - cfg.alpha)))
}

/// Zeroes the non-kept region in both images (mask broadcast over channels),
/// then applies `base` to the full zeroed images.
pub fn masked_loss<F>(
    base: F,
    pred: &Tensor,
    gt: &Tensor,
    mask: &OverexposureMask,
    keep: MaskKeep,
) -> Result<Tensor>
where
    F: FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
{
    check_same_shape("masked_loss", pred, gt)?;
    let s = pred.shape();
    if s.len() != 3 && s.len() != 4 {
        return Err(Error::BadShape {
            op: "masked_loss",
            expected: "(C,H,W) or (N,C,H,W) tensor".into(),
            got: s.to_vec(),
        });
    }
    let (c, h, w) = (s[s.len() - 3], s[s.len() - 2], s[s.len() - 1]);
    if h != mask.height() || w != mask.width() {
        return Err(Error::ShapeMismatch {
            op: "masked_loss: image vs mask",
            lhs: s.to_vec(),
            rhs: vec![mask.height(), mask.width()],
        });
    }
    let keep_chw = match keep {
        MaskKeep::Overexposed => mask.expand_channels(c),
        MaskKeep::NonOverexposed => mask.expand_channels_inverted(c),
    };
    let keep_t = if s.len() == 4 {
        let n = s[0];
        let chw = keep_chw.to_vec();
        let mut full = Vec::with_capacity(n * chw.len());
        for _ in 0..n {
            full.extend_from_slice(&chw);
        }
        Tensor::from_vec(full, s)
    } else {
        keep_chw
    };
    base(&pred.mul(&keep_t), &gt.mul(&keep_t))
}

/// Applies gamma correction to both arguments, then the base loss.
pub fn gamma_wrapped<F>(base: F, pred: &Tensor, gt: &Tensor, gamma: f32) -> Result<Tensor>
where
    F: FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
{
    if gamma == 1.0 {
        return base(pred, gt);
    }
    base(&crate::color::gamma_correct(pred, gamma), &crate::color::gamma_correct(gt, gamma))
}

/// The non-overexposure composite: `w_lpips*LPIPS + w_l2*L2 +
/// w_msssim_l1*MS-SSIM-L1`, with the LPIPS term contributing only when a
/// backend is registered. Terms with zero weight are skipped entirely.
pub fn noe_composite(
    pred: &Tensor,
    gt: &Tensor,
    weights: &LossWeights,
    cfg: &MsSsimL1Config,
    lpips: Option<&dyn LpipsBackend>,
) -> Result<Tensor> {
    check_same_shape("noe_composite", pred, gt)?;
    let mut total = Tensor::scalar(0.0);
    if weights.w_l2 != 0.0 {
        total = total.add(&l2(pred, gt)?.mul_scalar(weights.w_l2));
    }
    if weights.w_msssim_l1 != 0.0 {
        total = total.add(&ms_ssim_l1(pred, gt, cfg)?.mul_scalar(weights.w_msssim_l1));
    }
    if let Some(backend) = lpips {
        if weights.w_lpips != 0.0 {
            total = total.add(&backend.distance(pred, gt)?.mul_scalar(weights.w_lpips));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::overexposure_mask;
    use crate::MaskMode;
    use rand::Rng;

    fn rand_image(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = crate::tests_support::rng(seed);
        Tensor::rand_uniform(shape, 0.0, 1.0, &mut rng)
    }

    #[test]
    fn l1_l2_basics() {
        let a = Tensor::ones(&[2, 3, 4]);
        let b = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(l1(&a, &b).unwrap().item(), 1.0);
        assert_eq!(l2(&a, &b).unwrap().item(), 1.0);
        assert_eq!(l2(&a, &a).unwrap().item(), 0.0);

        let c = Tensor::full(&[5], 0.3);
        let d = Tensor::full(&[5], 0.2);
        let v = l2(&c, &d).unwrap().item();
        assert!((v - 0.01).abs() < 1e-7, "l2 = {v}");
    }

    #[test]
    fn loss_shape_mismatch_is_an_error() {
        let a = Tensor::zeros(&[3, 4, 4]);
        let b = Tensor::zeros(&[3, 4, 5]);
        assert!(matches!(l1(&a, &b), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(l2(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn ssim_self_similarity_is_one() {
        let x = rand_image(&[1, 3, 16, 16], 1);
        let v = ssim(&x, &x, &SsimParams::default()).unwrap().item();
        assert!((v - 1.0).abs() < 1e-6, "ssim = {v}");
    }

    #[test]
    fn ms_ssim_self_similarity_is_one() {
        let cfg = MsSsimL1Config::default();
        let x = rand_image(&[1, 3, 48, 48], 2);
        let v = ms_ssim(&x, &x, &cfg).unwrap().item();
        assert!((v - 1.0).abs() < 1e-6, "ms_ssim = {v}");
        let l = ms_ssim_l1(&x, &x, &cfg).unwrap().item();
        assert!(l.abs() < 1e-6, "ms_ssim_l1 = {l}");
    }

    #[test]
    fn ms_ssim_requires_large_enough_images() {
        let cfg = MsSsimL1Config::default(); // needs 11 * 4 = 44
        let x = Tensor::zeros(&[1, 3, 32, 32]);
        match ms_ssim(&x, &x, &cfg) {
            Err(Error::ImageTooSmall { required, .. }) => assert_eq!(required, 44),
            other => panic!("expected ImageTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn ms_ssim_l1_is_symmetric() {
        let cfg = MsSsimL1Config::small(2, 5).unwrap();
        let a = rand_image(&[1, 3, 16, 16], 3);
        let b = rand_image(&[1, 3, 16, 16], 4);
        let ab = ms_ssim_l1(&a, &b, &cfg).unwrap().item();
        let ba = ms_ssim_l1(&b, &a, &cfg).unwrap().item();
        assert!((ab - ba).abs() < 1e-6, "{ab} vs {ba}");
        assert!(ab > 0.0);
    }

    #[test]
    fn checkerboard_vs_inverse_has_low_ssim() {
        // Oracle: direct windowed SSIM in f64.
        let n = 16;
        let mut data = vec![0.0f32; n * n];
        for y in 0..n {
            for x in 0..n {
                data[y * n + x] = ((x + y) % 2) as f32;
            }
        }
        let x = Tensor::from_vec(data.clone(), &[1, 1, n, n]);
        let inv = Tensor::from_vec(data.iter().map(|v| 1.0 - v).collect(), &[1, 1, n, n]);
        let got = ssim(&x, &inv, &SsimParams::default()).unwrap().item();
        let want = reference_ssim(
            &x.to_vec(),
            &inv.to_vec(),
            n,
            n,
            1.5,
            11,
            SSIM_C1 as f64,
            SSIM_C2 as f64,
        );
        assert!((got as f64 - want).abs() < 1e-5, "{got} vs oracle {want}");
        assert!(got < 0.1, "ssim = {got}");
    }

    /// Independent SSIM: explicit per-window loops in f64, reflect padding.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn reference_ssim(
        a: &[f32],
        b: &[f32],
        h: usize,
        w: usize,
        sigma: f64,
        kernel: usize,
        c1: f64,
        c2: f64,
    ) -> f64 {
        let c = (kernel / 2) as isize;
        let k1d: Vec<f64> = {
            let raw: Vec<f64> = (0..kernel)
                .map(|i| {
                    let x = i as f64 - c as f64;
                    (-x * x / (2.0 * sigma * sigma)).exp()
                })
                .collect();
            let t: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / t).collect()
        };
        let reflect = |i: isize, n: usize| crate::tensor::kernels::reflect(i, n);
        let mut total = 0.0;
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -c..=c {
                    for dx in -c..=c {
                        let wgt = k1d[(dy + c) as usize] * k1d[(dx + c) as usize];
                        let sy = reflect(y + dy, h);
                        let sx = reflect(x + dx, w);
                        let av = a[sy * w + sx] as f64;
                        let bv = b[sy * w + sx] as f64;
                        mx += wgt * av;
                        my += wgt * bv;
                        mxx += wgt * av * av;
                        myy += wgt * bv * bv;
                        mxy += wgt * av * bv;
                    }
                }
                let vx = (mxx - mx * mx).max(0.0);
                let vy = (myy - my * my).max(0.0);
                let cov = mxy - mx * my;
                let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                let cs = (2.0 * cov + c2) / (vx + vy + c2);
                total += l * cs;
            }
        }
        total / (h * w) as f64
    }

    #[test]
    fn ssim_matches_reference_on_random_pairs() {
        for seed in 0..5u64 {
            let a = rand_image(&[1, 1, 14, 17], 100 + seed);
            let b = rand_image(&[1, 1, 14, 17], 200 + seed);
            let got = ssim(&a, &b, &SsimParams::default()).unwrap().item() as f64;
            let want = reference_ssim(
                &a.to_vec(),
                &b.to_vec(),
                14,
                17,
                1.5,
                11,
                SSIM_C1 as f64,
                SSIM_C2 as f64,
            );
            assert!((got - want).abs() < 1e-6, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn masked_loss_with_full_mask_equals_base() {
        let pred = rand_image(&[3, 8, 8], 5);
        let gt = rand_image(&[3, 8, 8], 6);
        let ones = overexposure_mask(&Tensor::ones(&[3, 8, 8]), MaskMode::default()).unwrap();
        let masked = masked_loss(|a, b| l2(a, b), &pred, &gt, &ones, MaskKeep::Overexposed)
            .unwrap()
            .item();
        let plain = l2(&pred, &gt).unwrap().item();
        assert_eq!(masked, plain);
    }

    #[test]
    fn masked_loss_with_empty_keep_region_is_zero() {
        let pred = rand_image(&[3, 8, 8], 7);
        let gt = rand_image(&[3, 8, 8], 8);
        let zeros = overexposure_mask(&Tensor::zeros(&[3, 8, 8]), MaskMode::default()).unwrap();
        for base in [l1 as fn(&Tensor, &Tensor) -> Result<Tensor>, l2] {
            let v = masked_loss(base, &pred, &gt, &zeros, MaskKeep::Overexposed)
                .unwrap()
                .item();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn masked_loss_ignores_non_kept_pixels() {
        let mut rng = crate::tests_support::rng(9);
        let pred = rand_image(&[3, 8, 8], 10);
        let gt = rand_image(&[3, 8, 8], 11);
        let mask_img: Vec<f32> = (0..64).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let mask = OverexposureMask::from_tensor(Tensor::from_vec(mask_img, &[8, 8])).unwrap();

        let before = masked_loss(|a, b| l2(a, b), &pred, &gt, &mask, MaskKeep::Overexposed)
            .unwrap()
            .item();

        // Perturb pred only where the mask is 0.
        let mut data = pred.to_vec();
        for y in 0..8 {
            for x in 0..8 {
                if !mask.get(y, x) {
                    for ch in 0..3 {
                        data[ch * 64 + y * 8 + x] = rng.gen_range(-5.0..5.0);
                    }
                }
            }
        }
        let perturbed = Tensor::from_vec(data, &[3, 8, 8]);
        let after = masked_loss(|a, b| l2(a, b), &perturbed, &gt, &mask, MaskKeep::Overexposed)
            .unwrap()
            .item();
        assert_eq!(before, after);
    }

    #[test]
    fn gamma_wrapped_identity_and_zero() {
        let a = rand_image(&[3, 6, 6], 12);
        let b = rand_image(&[3, 6, 6], 13);
        let plain = l2(&a, &b).unwrap().item();
        let wrapped = gamma_wrapped(|x, y| l2(x, y), &a, &b, 1.0).unwrap().item();
        assert_eq!(plain, wrapped);
        let same = gamma_wrapped(|x, y| l2(x, y), &a, &a, 1.0 / 3.6).unwrap().item();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn gamma_wrapped_scalar_arithmetic() {
        let g = 1.0f32 / 3.6;
        let a = Tensor::from_vec(vec![0.25], &[1, 1, 1]);
        let b = Tensor::from_vec(vec![0.5], &[1, 1, 1]);
        let got = gamma_wrapped(|x, y| l2(x, y), &a, &b, g).unwrap().item();
        let want = (0.25f32.powf(g) - 0.5f32.powf(g)).powi(2);
        assert!((got - want).abs() < 1e-7, "{got} vs {want}");
    }

    #[test]
    fn gamma_error_weighting_decreases_with_brightness() {
        // |(x+d)^g - x^g| strictly decreasing in x: dark pixels up-weighted.
        let g = 1.0f32 / 3.6;
        let d = 0.01f32;
        let mut prev = f32::INFINITY;
        for i in 1..=18 {
            let x = i as f32 * 0.05;
            let err = ((x + d).powf(g) - x.powf(g)).abs();
            assert!(err < prev, "x={x}: {err} !< {prev}");
            prev = err;
        }
    }

    #[test]
    fn composite_with_degenerate_weights_is_l2() {
        let a = rand_image(&[1, 3, 16, 16], 14);
        let b = rand_image(&[1, 3, 16, 16], 15);
        let w = LossWeights {
            w_lpips: 0.0,
            w_l2: 1.0,
            w_msssim_l1: 0.0,
        };
        let cfg = MsSsimL1Config::small(2, 5).unwrap();
        let got = noe_composite(&a, &b, &w, &cfg, None).unwrap().item();
        assert_eq!(got, l2(&a, &b).unwrap().item());
    }

    #[test]
    fn composite_recomposes_from_components() {
        let a = rand_image(&[1, 3, 48, 48], 16);
        let b = rand_image(&[1, 3, 48, 48], 17);
        let w = LossWeights::default();
        let cfg = MsSsimL1Config::default();
        let got = noe_composite(&a, &b, &w, &cfg, None).unwrap().item();
        let want = 0.05 * l2(&a, &b).unwrap().item() + 0.75 * ms_ssim_l1(&a, &b, &cfg).unwrap().item();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        assert_eq!(noe_composite(&a, &a, &w, &cfg, None).unwrap().item(), 0.0);
    }

    #[test]
    fn composite_includes_registered_lpips_backend() {
        struct L1Backend;
        impl LpipsBackend for L1Backend {
            fn distance(&self, pred: &Tensor, gt: &Tensor) -> Result<Tensor> {
                l1(pred, gt)
            }
        }
        let a = rand_image(&[1, 3, 16, 16], 18);
        let b = rand_image(&[1, 3, 16, 16], 19);
        let w = LossWeights {
            w_lpips: 2.0,
            w_l2: 1.0,
            w_msssim_l1: 0.0,
        };
        let cfg = MsSsimL1Config::small(2, 5).unwrap();
        let without = noe_composite(&a, &b, &w, &cfg, None).unwrap().item();
        let with = noe_composite(&a, &b, &w, &cfg, Some(&L1Backend)).unwrap().item();
        let expected = without + 2.0 * l1(&a, &b).unwrap().item();
        assert!((with - expected).abs() < 1e-6, "{with} vs {expected}");
    }
}
