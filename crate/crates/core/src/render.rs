//! RAW visualization: demosaic plus a simple display rendering.

use crate::bayer::{demosaic, BayerImage, Demosaicer};
use crate::error::Result;
use crate::synth::{forward_isp, IspParams};

/// 8-bit RGB render, row-major interleaved.
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    /// `height * width * 3` bytes, RGB order.
    pub rgb8: Vec<u8>,
}

/// Demosaics the Bayer image and applies the display rendering (white
/// balance, color matrix, display gamma, clamp), quantized to 8 bits.
pub fn render_visualization(bayer: &BayerImage, p: &IspParams) -> Result<RenderedImage> {
    let full = demosaic(bayer, Demosaicer::Malvar);
    let rgb = forward_isp(&full, p)?;
    let s = rgb.shape();
    let (h, w) = (s[1], s[2]);
    let plane = h * w;
    let d = rgb.data();
    let mut rgb8 = vec![0u8; plane * 3];
    for i in 0..plane {
        for c in 0..3 {
            rgb8[i * 3 + c] = (d[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(RenderedImage {
        width: w,
        height: h,
        rgb8,
    })
}
