//! Fidelity metrics: PSNR, SSIM, and region-split Bayer evaluation.

use crate::bayer::BayerImage;
use crate::color::OverexposureMask;
use crate::error::{Error, Result};
use crate::losses::{ssim, SsimParams};
use crate::tensor::{no_grad, Tensor};

/// PSNR reported for identical images (documented cap).
pub const PSNR_CAP_DB: f64 = 99.0;
const MSE_FLOOR: f64 = 1e-12;

/// `10*log10(max_value^2 / MSE)`, capped at 99 dB when MSE < 1e-12.
pub fn psnr(a: &Tensor, b: &Tensor, max_value: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "psnr",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let da = a.data();
    let db = b.data();
    let mut acc = 0.0f64;
    for (&x, &y) in da.iter().zip(db.iter()) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    let mse = acc / da.len() as f64;
    Ok(psnr_from_mse(mse, max_value))
}

fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse < MSE_FLOOR {
        PSNR_CAP_DB
    } else {
        10.0 * (max_value * max_value / mse).log10()
    }
}

/// Per-sample evaluation result on Bayer images.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub psnr_db: f64,
    /// Per-channel averaged SSIM over the four planes.
    pub ssim: f64,
    /// PSNR restricted to overexposed Bayer sites; absent when the region is
    /// empty.
    pub psnr_oe_db: Option<f64>,
    /// PSNR restricted to non-overexposed sites; absent when empty.
    pub psnr_noe_db: Option<f64>,
}

/// Whole-image PSNR/SSIM plus optional region-split PSNRs.
///
/// The RGB-resolution mask is downsampled to Bayer sites with the
/// any-overexposed rule; a site's four plane values all count toward the
/// region its site belongs to.
pub fn evaluate(
    pred: &BayerImage,
    gt: &BayerImage,
    mask: Option<&OverexposureMask>,
) -> Result<EvalReport> {
    if pred.tensor().shape() != gt.tensor().shape() {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            lhs: pred.tensor().shape().to_vec(),
            rhs: gt.tensor().shape().to_vec(),
        });
    }
    let psnr_db = psnr(pred.tensor(), gt.tensor(), 1.0)?;
    let _guard = no_grad();
    let (h, w) = (pred.height(), pred.width());
    let ssim_val = ssim(
        &pred.tensor().reshape(&[1, 4, h, w]),
        &gt.tensor().reshape(&[1, 4, h, w]),
        &SsimParams::default(),
    )?
    .item() as f64;

    let (mut psnr_oe_db, mut psnr_noe_db) = (None, None);
    if let Some(mask) = mask {
        if mask.height() != 2 * h || mask.width() != 2 * w {
            return Err(Error::ShapeMismatch {
                op: "evaluate: mask vs bayer",
                lhs: vec![mask.height(), mask.width()],
                rhs: vec![2 * h, 2 * w],
            });
        }
        let site_mask = mask.downsample_2x2_any()?;
        let pd = pred.tensor().data();
        let gd = gt.tensor().data();
        let plane = h * w;
        let (mut acc_oe, mut n_oe, mut acc_noe, mut n_noe) = (0.0f64, 0usize, 0.0f64, 0usize);
        for y in 0..h {
            for x in 0..w {
                let hot = site_mask.get(y, x);
                for c in 0..4 {
                    let i = c * plane + y * w + x;
                    let d = pd[i] as f64 - gd[i] as f64;
                    if hot {
                        acc_oe += d * d;
                        n_oe += 1;
                    } else {
                        acc_noe += d * d;
                        n_noe += 1;
                    }
                }
            }
        }
        if n_oe > 0 {
            psnr_oe_db = Some(psnr_from_mse(acc_oe / n_oe as f64, 1.0));
        }
        if n_noe > 0 {
            psnr_noe_db = Some(psnr_from_mse(acc_noe / n_noe as f64, 1.0));
        }
    }

    Ok(EvalReport {
        psnr_db,
        ssim: ssim_val,
        psnr_oe_db,
        psnr_noe_db,
    })
}

/// Mean per-sample Bayer PSNR over a set of (pred, gt) pairs.
pub fn mean_bayer_psnr(pairs: &[(BayerImage, BayerImage)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = 0.0;
    for (p, g) in pairs {
        acc += psnr(p.tensor(), g.tensor(), 1.0)?;
    }
    Ok(acc / pairs.len() as f64)
}
