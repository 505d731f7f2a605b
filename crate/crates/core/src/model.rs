//! Small configurable encoder-decoder mapping (RGB + mask) to demosaiced RAW.
//!
//! Each encoder level applies two 3x3 convolutions with leaky-ReLU, with 2x2
//! average pooling between levels; the decoder mirrors it with nearest
//! upsampling and channel-concat skip connections, ending in a linear 1x1
//! projection. The output head is unclamped: clamping during training would
//! kill gradients for targets at the saturation point.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color::OverexposureMask;
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UNetConfig {
    /// Number of encoder levels.
    pub depth: usize,
    /// Channel count of the first level; doubles per level.
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub leaky_slope: f32,
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 3,
            base_channels: 16,
            in_channels: 4, // RGB + overexposure mask
            out_channels: 3,
            leaky_slope: 0.2,
            seed: 0,
        }
    }
}

impl UNetConfig {
    fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.base_channels < 1 || self.in_channels < 1 || self.out_channels < 1
        {
            return Err(Error::InvalidConfig(format!("invalid U-Net config {self:?}")));
        }
        Ok(())
    }

    /// Input spatial dims must be divisible by this.
    pub fn spatial_divisor(&self) -> usize {
        1 << self.depth
    }
}

/// Which training branch a network plays in the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchKind {
    /// Specialist for overexposed pixels.
    OE,
    /// Specialist for non-overexposed pixels.
    NOE,
    /// Single network covering both regions through the mask channel.
    Single,
}

impl BranchKind {
    pub fn name(&self) -> &'static str {
        match self {
            BranchKind::OE => "oe",
            BranchKind::NOE => "noe",
            BranchKind::Single => "single",
        }
    }
}

struct ConvLayer {
    weight: Tensor,
    bias: Tensor,
}

impl ConvLayer {
    fn new(cin: usize, cout: usize, k: usize, slope: f32, rng: &mut ChaCha8Rng) -> ConvLayer {
        // Kaiming uniform, fan-in scaling with the leaky-relu gain.
        let fan_in = (cin * k * k) as f64;
        let gain2 = 2.0 / (1.0 + (slope as f64) * (slope as f64));
        let bound = (3.0 * gain2 / fan_in).sqrt() as f32;
        let numel = cout * cin * k * k;
        let data: Vec<f32> = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
        ConvLayer {
            weight: Tensor::from_vec(data, &[cout, cin, k, k]).with_requires_grad(),
            bias: Tensor::zeros(&[cout]).with_requires_grad(),
        }
    }

    fn apply(&self, x: &Tensor, padding: usize) -> Result<Tensor> {
        x.conv2d(&self.weight, &self.bias, 1, padding)
    }

    fn numel(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }
}

pub struct UNet {
    cfg: UNetConfig,
    enc: Vec<[ConvLayer; 2]>,
    dec: Vec<[ConvLayer; 2]>,
    head: ConvLayer,
}

impl std::fmt::Debug for UNet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UNet")
            .field("cfg", &self.cfg)
            .field("parameters", &self.parameter_count())
            .finish()
    }
}

impl UNet {
    pub fn new(cfg: UNetConfig) -> Result<UNet> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let ch = |level: usize| cfg.base_channels << level;

        let mut enc = Vec::with_capacity(cfg.depth);
        for level in 0..cfg.depth {
            let cin = if level == 0 { cfg.in_channels } else { ch(level - 1) };
            enc.push([
                ConvLayer::new(cin, ch(level), 3, cfg.leaky_slope, &mut rng),
                ConvLayer::new(ch(level), ch(level), 3, cfg.leaky_slope, &mut rng),
            ]);
        }
        let mut dec = Vec::with_capacity(cfg.depth.saturating_sub(1));
        for level in (0..cfg.depth - 1).rev() {
            let cin = ch(level + 1) + ch(level); // upsampled + skip
            dec.push([
                ConvLayer::new(cin, ch(level), 3, cfg.leaky_slope, &mut rng),
                ConvLayer::new(ch(level), ch(level), 3, cfg.leaky_slope, &mut rng),
            ]);
        }
        let head = ConvLayer::new(cfg.base_channels, cfg.out_channels, 1, cfg.leaky_slope, &mut rng);
        Ok(UNet { cfg, enc, dec, head })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.enc
            .iter()
            .chain(self.dec.iter())
            .flat_map(|pair| pair.iter())
            .chain(std::iter::once(&self.head))
    }

    /// Parameter tensors in declaration order (weight, bias per layer).
    pub fn parameters(&self) -> Vec<Tensor> {
        self.layers()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.numel()).sum()
    }

    /// Forward pass on an (N,Cin,H,W) batch; H and W must be divisible by
    /// `2^depth`. Output is (N,Cout,H,W), unclamped.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let s = input.shape();
        if s.len() != 4 || s[1] != self.cfg.in_channels {
            return Err(Error::BadShape {
                op: "unet forward",
                expected: format!("(N,{},H,W) input", self.cfg.in_channels),
                got: s.to_vec(),
            });
        }
        let div = self.cfg.spatial_divisor();
        if s[2] % div != 0 || s[3] % div != 0 {
            return Err(Error::BadShape {
                op: "unet forward",
                expected: format!("spatial dims divisible by {div}"),
                got: s.to_vec(),
            });
        }
        let slope = self.cfg.leaky_slope;
        let mut x = input.clone();
        let mut skips = Vec::with_capacity(self.cfg.depth - 1);
        for (level, pair) in self.enc.iter().enumerate() {
            if level > 0 {
                x = x.avg_pool_2x2();
            }
            x = pair[0].apply(&x, 1)?.leaky_relu(slope);
            x = pair[1].apply(&x, 1)?.leaky_relu(slope);
            if level + 1 < self.cfg.depth {
                skips.push(x.clone());
            }
        }
        for (i, pair) in self.dec.iter().enumerate() {
            let skip = &skips[self.cfg.depth - 2 - i];
            x = x.upsample_nearest_2x().concat_channels(skip)?;
            x = pair[0].apply(&x, 1)?.leaky_relu(slope);
            x = pair[1].apply(&x, 1)?.leaky_relu(slope);
        }
        self.head.apply(&x, 0)
    }

    /// Concatenates the mask as a fourth channel and runs a single image
    /// (3,H,W) through the network, returning (3,H,W).
    pub fn forward_rgb_mask(&self, rgb: &Tensor, mask: &OverexposureMask) -> Result<Tensor> {
        let s = rgb.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::BadShape {
                op: "unet forward",
                expected: "(3,H,W) image".into(),
                got: s.to_vec(),
            });
        }
        if s[1] != mask.height() || s[2] != mask.width() {
            return Err(Error::ShapeMismatch {
                op: "unet forward: image vs mask",
                lhs: s.to_vec(),
                rhs: vec![mask.height(), mask.width()],
            });
        }
        let input = build_masked_input(rgb, mask).reshape(&[1, 4, s[1], s[2]]);
        let out = self.forward(&input)?;
        Ok(out.reshape(&[3, s[1], s[2]]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_weights(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<UNet> {
        load_weights(path, None)
    }

    /// Loads and verifies the stored config against `expected`, naming the
    /// first differing field.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &UNetConfig) -> Result<UNet> {
        load_weights(path, Some(expected))
    }
}

/// (4,H,W) tensor of RGB planes plus the mask plane; untracked leaf.
pub fn build_masked_input(rgb: &Tensor, mask: &OverexposureMask) -> Tensor {
    let (h, w) = (rgb.shape()[1], rgb.shape()[2]);
    let mut data = rgb.to_vec();
    data.extend_from_slice(&mask.as_tensor().data());
    Tensor::from_vec(data, &[4, h, w])
}

const WEIGHTS_MAGIC: &[u8; 4] = b"RNW1";

/// Weight container: magic, config header, then every parameter tensor in
/// declaration order in the RTN1 format. A plain-text `key=value` sidecar
/// with the config is written next to the file.
pub fn save_weights(model: &UNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let cfg = &model.cfg;
    let params = model.parameters();
    (|| -> std::io::Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        for v in [
            cfg.depth as u32,
            cfg.base_channels as u32,
            cfg.in_channels as u32,
            cfg.out_channels as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&cfg.leaky_slope.to_le_bytes())?;
        w.write_all(&cfg.seed.to_le_bytes())?;
        w.write_all(&(params.len() as u32).to_le_bytes())?;
        for p in &params {
            tensor::write_tensor(&mut w, p)?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))?;

    let sidecar = path.with_extension("txt");
    std::fs::write(&sidecar, config_sidecar(cfg)).map_err(|e| Error::io(&sidecar, e))?;
    Ok(())
}

fn config_sidecar(cfg: &UNetConfig) -> String {
    format!(
        "depth={}\nbase_channels={}\nin_channels={}\nout_channels={}\nleaky_slope={}\nseed={}\n",
        cfg.depth, cfg.base_channels, cfg.in_channels, cfg.out_channels, cfg.leaky_slope, cfg.seed
    )
}

fn load_weights(path: impl AsRef<Path>, expected: Option<&UNetConfig>) -> Result<UNet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if &magic != WEIGHTS_MAGIC {
        return Err(Error::BadTensorFile {
            path: path.to_path_buf(),
            reason: format!("bad weights magic {magic:?}"),
        });
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf).map_err(|e| truncated(path, e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let depth = read_u32(&mut r)? as usize;
    let base_channels = read_u32(&mut r)? as usize;
    let in_channels = read_u32(&mut r)? as usize;
    let out_channels = read_u32(&mut r)? as usize;
    let mut f32buf = [0u8; 4];
    r.read_exact(&mut f32buf).map_err(|e| truncated(path, e))?;
    let leaky_slope = f32::from_le_bytes(f32buf);
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|e| truncated(path, e))?;
    let seed = u64::from_le_bytes(u64buf);
    let n_params = {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(|e| truncated(path, e))?;
        u32::from_le_bytes(b) as usize
    };

    let cfg = UNetConfig {
        depth,
        base_channels,
        in_channels,
        out_channels,
        leaky_slope,
        seed,
    };
    if let Some(exp) = expected {
        check_field("depth", depth, exp.depth)?;
        check_field("base_channels", base_channels, exp.base_channels)?;
        check_field("in_channels", in_channels, exp.in_channels)?;
        check_field("out_channels", out_channels, exp.out_channels)?;
        if leaky_slope != exp.leaky_slope {
            return Err(Error::ConfigMismatch {
                field: "leaky_slope",
                found: leaky_slope.to_string(),
                expected: exp.leaky_slope.to_string(),
            });
        }
    }

    let model = UNet::new(cfg)?;
    let params = model.parameters();
    if n_params != params.len() {
        return Err(Error::BadTensorFile {
            path: path.to_path_buf(),
            reason: format!("file has {n_params} parameters, model needs {}", params.len()),
        });
    }
    for p in &params {
        let stored = tensor::read_tensor(&mut r, path)?;
        if stored.shape() != p.shape() {
            return Err(Error::BadTensorFile {
                path: path.to_path_buf(),
                reason: format!(
                    "parameter shape {:?} does not match model shape {:?}",
                    stored.shape(),
                    p.shape()
                ),
            });
        }
        p.data_mut().copy_from_slice(&stored.data());
    }
    Ok(model)
}

fn truncated(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::BadTensorFile {
            path: path.to_path_buf(),
            reason: "truncated weights header".into(),
        }
    } else {
        Error::io(path, e)
    }
}

fn check_field(field: &'static str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::ConfigMismatch {
            field,
            found: found.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{overexposure_mask, MaskMode};
    use rand::Rng;

    #[test]
    fn same_seed_gives_identical_weights() {
        let a = UNet::new(UNetConfig::default()).unwrap();
        let b = UNet::new(UNetConfig::default()).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters()) {
            assert_eq!(pa.to_vec(), pb.to_vec());
        }
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let cfg = UNetConfig::default();
        let model = UNet::new(cfg).unwrap();
        // Closed-form count from the layer recipe.
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let ch = |l: usize| cfg.base_channels << l;
        let mut want = 0;
        for level in 0..cfg.depth {
            let cin = if level == 0 { cfg.in_channels } else { ch(level - 1) };
            want += conv(cin, ch(level), 3) + conv(ch(level), ch(level), 3);
        }
        for level in (0..cfg.depth - 1).rev() {
            want += conv(ch(level + 1) + ch(level), ch(level), 3) + conv(ch(level), ch(level), 3);
        }
        want += conv(cfg.base_channels, cfg.out_channels, 1);
        assert_eq!(model.parameter_count(), want);
        assert_eq!(model.parameter_count(), 118_451);
    }

    #[test]
    fn forward_shape_contract() {
        let model = UNet::new(UNetConfig::default()).unwrap();
        let x = Tensor::zeros(&[1, 4, 32, 32]);
        let y = model.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 3, 32, 32]);

        let x64 = Tensor::zeros(&[2, 4, 64, 64]);
        assert_eq!(model.forward(&x64).unwrap().shape(), &[2, 3, 64, 64]);
    }

    #[test]
    fn forward_rejects_bad_dims() {
        let model = UNet::new(UNetConfig::default()).unwrap();
        assert!(model.forward(&Tensor::zeros(&[1, 4, 20, 32])).is_err());
        assert!(model.forward(&Tensor::zeros(&[1, 3, 32, 32])).is_err());
    }

    #[test]
    fn mask_channel_changes_output() {
        let mut rng = crate::tests_support::rng(17);
        let model = UNet::new(UNetConfig { seed: 5, ..Default::default() }).unwrap();
        let rgb = Tensor::rand_uniform(&[3, 16, 16], 0.0, 1.0, &mut rng);
        let zeros = overexposure_mask(&Tensor::zeros(&[3, 16, 16]), MaskMode::default()).unwrap();
        let ones = overexposure_mask(&Tensor::ones(&[3, 16, 16]), MaskMode::default()).unwrap();
        let a = model.forward_rgb_mask(&rgb, &zeros).unwrap();
        let b = model.forward_rgb_mask(&rgb, &ones).unwrap();
        let max_diff = a
            .to_vec()
            .iter()
            .zip(b.to_vec())
            .fold(0.0f32, |m, (x, y)| m.max((x - y).abs()));
        assert!(max_diff > 0.0, "flipping the mask changed nothing");
    }

    #[test]
    fn save_load_roundtrip_preserves_outputs_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.rtn1");
        let mut rng = crate::tests_support::rng(23);
        let model = UNet::new(UNetConfig { seed: 11, ..Default::default() }).unwrap();
        // perturb weights so we are not just reloading the init
        for p in model.parameters() {
            let mut d = p.data_mut();
            for v in d.iter_mut() {
                *v += rng.gen_range(-0.01..0.01);
            }
        }
        model.save(&path).unwrap();
        let loaded = UNet::load(&path).unwrap();
        let x = Tensor::rand_uniform(&[1, 4, 16, 16], 0.0, 1.0, &mut rng);
        assert_eq!(
            model.forward(&x).unwrap().to_vec(),
            loaded.forward(&x).unwrap().to_vec()
        );

        // load -> save is byte-identical
        let path2 = dir.path().join("net2.rtn1");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

        // sidecar config echo
        let sidecar = std::fs::read_to_string(dir.path().join("net.txt")).unwrap();
        assert!(sidecar.contains("depth=3"));
        assert!(sidecar.contains("base_channels=16"));
    }

    #[test]
    fn truncated_weights_error_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.rtn1");
        let model = UNet::new(UNetConfig::default()).unwrap();
        model.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            UNet::load(&path),
            Err(Error::BadTensorFile { .. })
        ));
    }

    #[test]
    fn config_mismatch_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.rtn1");
        let shallow = UNet::new(UNetConfig { depth: 2, ..Default::default() }).unwrap();
        shallow.save(&path).unwrap();
        let err = UNet::load_expecting(&path, &UNetConfig::default()).unwrap_err();
        match err {
            Error::ConfigMismatch { field, found, expected } => {
                assert_eq!(field, "depth");
                assert_eq!(found, "2");
                assert_eq!(expected, "3");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
