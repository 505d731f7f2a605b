//! Synthetic forward-ISP data generation: paired (RGB, Bayer GT) patches
//! with controllable overexposure.
//!
//! Scenes are built in the linear RAW domain from multi-octave value noise
//! plus random rectangles and disks, then bright elliptical highlights are
//! painted until the post-ISP overexposed fraction reaches the target. The
//! forward ISP applies white-balance gains, a color matrix, display gamma
//! and a final clamp; clamping is what destroys RAW detail under highlights,
//! so overexposed RGB regions have varied Bayer ground truth.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bayer::{mosaic, BayerImage};
use crate::color::{overexposure_mask, MaskMode};
use crate::error::{Error, Result};
use crate::pipeline::SamplePair;
use crate::tensor::{load_tensor, save_tensor, Tensor};

/// Forward-ISP simulation parameters.
#[derive(Clone, Debug)]
pub struct IspParams {
    /// (red gain, blue gain); green is not gained.
    pub wb_gains: (f32, f32),
    /// Row-normalized 3x3 color matrix (rows sum to 1).
    pub ccm: [[f32; 3]; 3],
    pub display_gamma: f32,
    pub seed: u64,
}

impl Default for IspParams {
    fn default() -> Self {
        IspParams {
            wb_gains: (2.0, 1.8),
            ccm: [
                [0.85, 0.10, 0.05],
                [0.08, 0.84, 0.08],
                [0.04, 0.12, 0.84],
            ],
            display_gamma: 1.0 / 2.2,
            seed: 0,
        }
    }
}

impl IspParams {
    /// Randomized but valid parameters: gains in [1.5, 2.5], a random
    /// diagonally dominant row-normalized matrix.
    pub fn from_seed(seed: u64) -> IspParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB5C0_FBCF);
        let r_gain = rng.gen_range(1.5..2.5);
        let b_gain = rng.gen_range(1.5..2.5);
        let mut ccm = [[0.0f32; 3]; 3];
        for (i, row) in ccm.iter_mut().enumerate() {
            let mut off = [rng.gen_range(0.02..0.12), rng.gen_range(0.02..0.12)];
            let diag = rng.gen_range(0.78..0.92);
            let rest = 1.0 - diag;
            let s = off[0] + off[1];
            off[0] *= rest / s;
            off[1] *= rest / s;
            let mut k = 0;
            for j in 0..3 {
                if i == j {
                    row[j] = diag;
                } else {
                    row[j] = off[k];
                    k += 1;
                }
            }
        }
        IspParams {
            wb_gains: (r_gain, b_gain),
            ccm,
            display_gamma: 1.0 / 2.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wb_gains.0 <= 0.0 || self.wb_gains.1 <= 0.0 {
            return Err(Error::InvalidConfig("wb gains must be positive".into()));
        }
        for row in &self.ccm {
            let s: f32 = row.iter().sum();
            if (s - 1.0).abs() > 1e-4 {
                return Err(Error::InvalidConfig(format!("ccm row sums to {s}, expected 1")));
            }
        }
        if self.display_gamma <= 0.0 || self.display_gamma > 1.0 {
            return Err(Error::InvalidConfig("display gamma must be in (0,1]".into()));
        }
        Ok(())
    }
}

/// Shape of one synthetic scene.
#[derive(Clone, Debug)]
pub struct SceneSpec {
    /// Even side length of the square patch.
    pub size: usize,
    /// Target fraction of overexposed pixels after the forward ISP.
    pub highlight_fraction: f32,
    pub texture_octaves: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            size: 64,
            highlight_fraction: 0.25,
            texture_octaves: 4,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 32 || self.size % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "scene size must be even and >= 32, got {}",
                self.size
            )));
        }
        if !(0.0..=0.9).contains(&self.highlight_fraction) {
            return Err(Error::InvalidConfig(format!(
                "highlight_fraction must be in [0, 0.9], got {}",
                self.highlight_fraction
            )));
        }
        Ok(())
    }
}

/// Scene content below the highlight layer is capped here so that textures
/// and shapes never saturate the ISP on their own.
const BASE_CAP: f32 = 0.7;
/// Painted highlight values start here; anything above saturates the
/// default ISP, so the RAW detail inside highlights is invisible in RGB.
const HIGHLIGHT_FLOOR: f32 = 0.88;

/// Deterministic scene in the linear RAW domain, (3,S,S) in [0,1].
///
/// `params` is only used to measure the post-ISP overexposed fraction while
/// highlights are being painted.
pub fn synth_raw_scene(spec: &SceneSpec, params: &IspParams) -> Result<Tensor> {
    spec.validate()?;
    params.validate()?;
    let s = spec.size;
    let plane = s * s;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Multi-octave value noise: a shared luminance field plus per-channel
    // variation, scaled into a dark-to-mid range.
    let shared = value_noise(s, spec.texture_octaves.max(1), &mut rng);
    let mut data = vec![0.0f32; 3 * plane];
    for c in 0..3 {
        let own = value_noise(s, spec.texture_octaves.max(1), &mut rng);
        for p in 0..plane {
            let v = 0.6 * shared[p] + 0.4 * own[p];
            data[c * plane + p] = 0.06 + 0.48 * v;
        }
    }

    // Random rectangles and disks with flat per-channel albedo.
    let n_shapes = rng.gen_range(3..8);
    for _ in 0..n_shapes {
        let albedo = [
            rng.gen_range(0.05..0.65),
            rng.gen_range(0.05..0.65),
            rng.gen_range(0.05..0.65),
        ];
        if rng.gen_bool(0.5) {
            let (h, w) = (rng.gen_range(s / 8..s / 2), rng.gen_range(s / 8..s / 2));
            let y0 = rng.gen_range(0..s - h);
            let x0 = rng.gen_range(0..s - w);
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    for c in 0..3 {
                        data[c * plane + y * s + x] = albedo[c];
                    }
                }
            }
        } else {
            let r = rng.gen_range(s / 10..s / 4) as f32;
            let cy = rng.gen_range(0..s) as f32;
            let cx = rng.gen_range(0..s) as f32;
            for y in 0..s {
                for x in 0..s {
                    let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                    if d2 <= r * r {
                        for c in 0..3 {
                            data[c * plane + y * s + x] = albedo[c];
                        }
                    }
                }
            }
        }
    }
    for v in data.iter_mut() {
        *v = v.min(BASE_CAP);
    }

    if spec.highlight_fraction > 0.0 {
        paint_highlights(&mut data, s, spec.highlight_fraction, params, &mut rng);
    }

    Ok(Tensor::from_vec(data, &[3, s, s]))
}

/// Adds bright ellipses until the measured post-ISP overexposed fraction is
/// within the target band. Highlight interiors carry a radial ramp with
/// per-ellipse channel tints, so the Bayer ground truth varies under pixels
/// that the RGB image shows as flat white.
fn paint_highlights(
    data: &mut [f32],
    s: usize,
    target: f32,
    params: &IspParams,
    rng: &mut ChaCha8Rng,
) {
    let plane = s * s;
    let measure = |data: &[f32]| -> f32 {
        let rgb = forward_isp_raw(data, s, params);
        let t = Tensor::from_vec(rgb, &[3, s, s]);
        overexposure_mask(&t, MaskMode::default()).unwrap().density() as f32
    };

    let mut measured = measure(data);
    for _attempt in 0..200 {
        if measured >= target - 0.02 {
            break;
        }
        let gap = (target - measured).max(0.01);
        let max_r = ((gap * plane as f32 / std::f32::consts::PI).sqrt() * 1.1).min(s as f32 / 6.0);
        let rx = rng.gen_range(max_r * 0.5..=max_r).max(2.0);
        let ry = rng.gen_range(max_r * 0.5..=max_r).max(2.0);
        let cy = rng.gen_range(0.0..s as f32);
        let cx = rng.gen_range(0.0..s as f32);
        let tint = [
            1.0,
            rng.gen_range(0.97..1.0),
            rng.gen_range(0.94..1.0),
        ];
        let span = 1.0 - HIGHLIGHT_FLOOR;
        for y in 0..s {
            for x in 0..s {
                let dy = (y as f32 - cy) / ry;
                let dx = (x as f32 - cx) / rx;
                let d2 = dy * dy + dx * dx;
                if d2 <= 1.0 {
                    let profile = HIGHLIGHT_FLOOR + span * (1.0 - d2);
                    for c in 0..3 {
                        let v = (profile * tint[c]).min(1.0);
                        let cell = &mut data[c * plane + y * s + x];
                        *cell = cell.max(v);
                    }
                }
            }
        }
        measured = measure(data);
    }
}

/// Bilinearly interpolated lattice noise, normalized to [0,1].
fn value_noise(s: usize, octaves: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut out = vec![0.0f32; s * s];
    let mut total_amp = 0.0f32;
    for o in 0..octaves {
        let cells = (4 << o).min(s);
        let amp = 0.5f32.powi(o as i32);
        total_amp += amp;
        let lattice: Vec<f32> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen::<f32>()).collect();
        let lat = |y: usize, x: usize| lattice[y * (cells + 1) + x];
        for y in 0..s {
            let fy = y as f32 / s as f32 * cells as f32;
            let y0 = (fy as usize).min(cells - 1);
            let ty = fy - y0 as f32;
            for x in 0..s {
                let fx = x as f32 / s as f32 * cells as f32;
                let x0 = (fx as usize).min(cells - 1);
                let tx = fx - x0 as f32;
                let v = lat(y0, x0) * (1.0 - ty) * (1.0 - tx)
                    + lat(y0, x0 + 1) * (1.0 - ty) * tx
                    + lat(y0 + 1, x0) * ty * (1.0 - tx)
                    + lat(y0 + 1, x0 + 1) * ty * tx;
                out[y * s + x] += amp * v;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= total_amp;
    }
    out
}

fn forward_isp_raw(raw: &[f32], s: usize, p: &IspParams) -> Vec<f32> {
    let plane = s * s;
    let mut out = vec![0.0f32; 3 * plane];
    let (rg, bg) = p.wb_gains;
    let g = p.display_gamma;
    for i in 0..plane {
        let r = raw[i] * rg;
        let gr = raw[plane + i];
        let b = raw[2 * plane + i] * bg;
        for (c, row) in p.ccm.iter().enumerate() {
            let mixed = row[0] * r + row[1] * gr + row[2] * b;
            out[c * plane + i] = if mixed <= 0.0 { 0.0 } else { mixed.powf(g).min(1.0) };
        }
    }
    out
}

/// Forward ISP: white-balance gains on R/B, color matrix, display gamma,
/// clamp to [0,1]. Pure data transform (no gradients).
pub fn forward_isp(raw: &Tensor, p: &IspParams) -> Result<Tensor> {
    p.validate()?;
    let s = raw.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::BadShape {
            op: "forward_isp",
            expected: "(3,H,W) image".into(),
            got: s.to_vec(),
        });
    }
    if s[1] != s[2] {
        // Non-square is fine for the per-pixel math; reuse the raw kernel by
        // treating rows as the flattened plane.
        let plane = s[1] * s[2];
        let data = raw.data();
        let mut out = vec![0.0f32; 3 * plane];
        let (rg, bg) = p.wb_gains;
        for i in 0..plane {
            let r = data[i] * rg;
            let gr = data[plane + i];
            let b = data[2 * plane + i] * bg;
            for (c, row) in p.ccm.iter().enumerate() {
                let mixed = row[0] * r + row[1] * gr + row[2] * b;
                out[c * plane + i] = if mixed <= 0.0 {
                    0.0
                } else {
                    mixed.powf(p.display_gamma).min(1.0)
                };
            }
        }
        drop(data);
        return Ok(Tensor::from_vec(out, s));
    }
    Ok(Tensor::from_vec(
        forward_isp_raw(&raw.data(), s[1], p),
        s,
    ))
}

/// One line per sample: `index,rgb_path,bayer_path,seed,oe_fraction`.
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    pub index: usize,
    pub rgb_path: String,
    pub bayer_path: String,
    pub seed: u64,
    pub oe_fraction: f32,
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            writeln!(
                text,
                "{},{},{},{},{}",
                e.index, e.rgb_path, e.bayer_path, e.seed, e.oe_fraction
            )
            .expect("string write");
        }
        let path = dir.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::BadManifest {
                    line: i + 1,
                    reason: format!("expected 5 comma-separated fields, got {}", parts.len()),
                });
            }
            let fail = |what: &str| Error::BadManifest {
                line: i + 1,
                reason: format!("bad {what} field"),
            };
            entries.push(ManifestEntry {
                index: parts[0].parse().map_err(|_| fail("index"))?,
                rgb_path: parts[1].to_string(),
                bayer_path: parts[2].to_string(),
                seed: parts[3].parse().map_err(|_| fail("seed"))?,
                oe_fraction: parts[4].parse().map_err(|_| fail("oe_fraction"))?,
            });
        }
        Ok(Manifest { entries })
    }
}

/// Generates `n` sample pairs under `out_dir` and writes the manifest.
///
/// The Bayer ground truth is exactly `mosaic(scene)`; the RGB input is the
/// forward ISP of the same scene. Per-sample scene seeds are `spec.seed + i`.
pub fn make_dataset(n: usize, spec: &SceneSpec, params: &IspParams, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    params.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut manifest = Manifest::default();
    for i in 0..n {
        let sample_spec = SceneSpec {
            seed: spec.seed.wrapping_add(i as u64),
            ..spec.clone()
        };
        let scene = synth_raw_scene(&sample_spec, params)?;
        let rgb = forward_isp(&scene, params)?;
        let bayer = mosaic(&scene)?;
        let oe_fraction =
            overexposure_mask(&rgb, MaskMode::default())?.density() as f32;

        let rgb_name = format!("rgb_{i:04}.rtn1");
        let bayer_name = format!("bayer_{i:04}.rtn1");
        save_tensor(out_dir.join(&rgb_name), &rgb)?;
        save_tensor(out_dir.join(&bayer_name), bayer.tensor())?;
        manifest.entries.push(ManifestEntry {
            index: i,
            rgb_path: rgb_name,
            bayer_path: bayer_name,
            seed: sample_spec.seed,
            oe_fraction,
        });
    }
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Loads every manifest entry back into memory.
pub fn load_dataset(dir: &Path) -> Result<Vec<SamplePair>> {
    let manifest = Manifest::load(dir)?;
    let mut pairs = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let rgb = load_tensor(dir.join(&e.rgb_path))?;
        let bayer = BayerImage::load(dir.join(&e.bayer_path))?;
        pairs.push(SamplePair::new(rgb, bayer)?);
    }
    Ok(pairs)
}

/// In-memory dataset generation (no files), same construction as
/// [`make_dataset`].
pub fn generate_pairs(n: usize, spec: &SceneSpec, params: &IspParams) -> Result<Vec<SamplePair>> {
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let sample_spec = SceneSpec {
            seed: spec.seed.wrapping_add(i as u64),
            ..spec.clone()
        };
        let scene = synth_raw_scene(&sample_spec, params)?;
        let rgb = forward_isp(&scene, params)?;
        let bayer = mosaic(&scene)?;
        pairs.push(SamplePair::new(rgb, bayer)?);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    #[test]
    fn scene_is_deterministic() {
        let spec = SceneSpec { seed: 42, ..Default::default() };
        let p = IspParams::default();
        let a = synth_raw_scene(&spec, &p).unwrap();
        let b = synth_raw_scene(&spec, &p).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn scene_values_stay_in_unit_range() {
        let p = IspParams::default();
        for seed in 0..100 {
            let spec = SceneSpec {
                size: 32,
                seed,
                highlight_fraction: if seed % 2 == 0 { 0.3 } else { 0.0 },
                ..Default::default()
            };
            let scene = synth_raw_scene(&spec, &p).unwrap();
            for v in scene.to_vec() {
                assert!((0.0..=1.0).contains(&v), "seed {seed}: {v}");
            }
        }
    }

    #[test]
    fn zero_highlight_fraction_means_dark_mask() {
        let p = IspParams::default();
        for seed in 0..10 {
            let spec = SceneSpec { seed, highlight_fraction: 0.0, ..Default::default() };
            let rgb = forward_isp(&synth_raw_scene(&spec, &p).unwrap(), &p).unwrap();
            let density = overexposure_mask(&rgb, MaskMode::default()).unwrap().density();
            assert!(density < 0.02, "seed {seed}: density {density}");
        }
    }

    #[test]
    fn measured_fraction_tracks_target() {
        let p = IspParams::default();
        for (seed, target) in [(1u64, 0.25f32), (2, 0.25), (3, 0.4), (4, 0.15)] {
            let spec = SceneSpec { seed, highlight_fraction: target, ..Default::default() };
            let rgb = forward_isp(&synth_raw_scene(&spec, &p).unwrap(), &p).unwrap();
            let density = overexposure_mask(&rgb, MaskMode::default()).unwrap().density() as f32;
            assert!(
                (density - target).abs() <= 0.1,
                "seed {seed}: density {density} vs target {target}"
            );
        }
    }

    #[test]
    fn forward_isp_basics() {
        let p = IspParams {
            wb_gains: (1.0, 1.0),
            ccm: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            display_gamma: 1.0 / 2.2,
            seed: 0,
        };
        let zero = Tensor::zeros(&[3, 4, 4]);
        assert!(forward_isp(&zero, &p).unwrap().to_vec().iter().all(|&v| v == 0.0));

        let gray = Tensor::full(&[3, 4, 4], 0.5);
        let out = forward_isp(&gray, &p).unwrap().to_vec();
        let want = 0.5f32.powf(1.0 / 2.2);
        for v in out {
            assert!((v - want).abs() < 1e-6, "{v} vs {want}");
        }
    }

    #[test]
    fn saturating_pixel_is_masked() {
        let p = IspParams::default();
        let mut scene = Tensor::full(&[3, 4, 4], 0.2).to_vec();
        // one pixel at full sensor range
        for c in 0..3 {
            scene[c * 16] = 1.0;
        }
        let raw = Tensor::from_vec(scene, &[3, 4, 4]);
        let rgb = forward_isp(&raw, &p).unwrap();
        let mask = overexposure_mask(&rgb, MaskMode::default()).unwrap();
        assert!(mask.get(0, 0));
        assert!(!mask.get(2, 2));
    }

    #[test]
    fn dataset_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec { size: 32, seed: 7, ..Default::default() };
        let p = IspParams::default();
        let manifest = make_dataset(3, &spec, &p, dir.path()).unwrap();
        assert_eq!(manifest.entries.len(), 3);

        let pairs = load_dataset(dir.path()).unwrap();
        let direct = generate_pairs(3, &spec, &p).unwrap();
        assert_eq!(pairs.len(), 3);
        for (a, b) in pairs.iter().zip(&direct) {
            assert_eq!(a.rgb.to_vec(), b.rgb.to_vec());
            assert_eq!(a.bayer_gt.tensor().to_vec(), b.bayer_gt.tensor().to_vec());
            assert_eq!(a.rgb.shape()[1], 2 * a.bayer_gt.height());
            assert_eq!(a.rgb.shape()[2], 2 * a.bayer_gt.width());
        }

        // fractions recorded within spec tolerance of the target
        for e in &manifest.entries {
            assert!((e.oe_fraction - 0.25).abs() <= 0.1, "{}", e.oe_fraction);
        }
    }

    #[test]
    fn empty_dataset_writes_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec { size: 32, ..Default::default() };
        let manifest = make_dataset(0, &spec, &IspParams::default(), dir.path()).unwrap();
        assert!(manifest.entries.is_empty());
        assert!(load_dataset(dir.path()).unwrap().is_empty());
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1); // just the manifest
    }

    #[test]
    fn demosaiced_gt_approximates_scene_on_smooth_regions() {
        // Texture-only scene (no highlights); compare the demosaiced Bayer GT
        // against the true scene on low-gradient interior pixels.
        let p = IspParams::default();
        let spec = SceneSpec {
            size: 64,
            highlight_fraction: 0.0,
            texture_octaves: 3,
            seed: 5,
        };
        let scene = synth_raw_scene(&spec, &p).unwrap();
        let recon = crate::bayer::demosaic(&mosaic(&scene).unwrap(), crate::bayer::Demosaicer::Malvar);

        let s = 64usize;
        let plane = s * s;
        let sd = scene.to_vec();
        let rd = recon.to_vec();
        let mut kept_scene = Vec::new();
        let mut kept_recon = Vec::new();
        for y in 2..s - 2 {
            for x in 2..s - 2 {
                let p0 = y * s + x;
                let mut grad = 0.0f32;
                for c in 0..3 {
                    let v = sd[c * plane + p0];
                    grad = grad
                        .max((sd[c * plane + p0 + 1] - v).abs())
                        .max((sd[c * plane + p0 + s] - v).abs());
                }
                if grad < 0.02 {
                    for c in 0..3 {
                        kept_scene.push(sd[c * plane + p0]);
                        kept_recon.push(rd[c * plane + p0]);
                    }
                }
            }
        }
        assert!(kept_scene.len() > 1000, "too few smooth pixels: {}", kept_scene.len());
        let a = Tensor::from_vec(kept_scene, &[kept_recon.len()]);
        let b = Tensor::from_vec(kept_recon, &[a.numel()]);
        let db = psnr(&a, &b, 1.0).unwrap();
        assert!(db > 35.0, "smooth-region PSNR {db}");
    }
}
