//! 3D U-Net with optional second decoder and optional signed-distance head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{Init, ParamId, ParamStore, LEAKY_SLOPE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Segmentation,
    Sdm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub base_width: usize,
    pub depth: usize,
    pub dropout_rate: f32,
    pub heads: Vec<Head>,
    pub decoders: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig { in_channels: 1, base_width: 8, depth: 3, dropout_rate: 0.5, heads: vec![Head::Segmentation], decoders: 1 }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::InvalidConfig("U-Net depth must be at least 2".into()));
        }
        if self.in_channels == 0 || self.base_width == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig("dropout_rate must lie in [0, 1)".into()));
        }
        if !self.heads.contains(&Head::Segmentation) {
            return Err(Error::InvalidConfig("a segmentation head is required".into()));
        }
        if !(1..=2).contains(&self.decoders) {
            return Err(Error::InvalidConfig("decoders must be 1 or 2".into()));
        }
        Ok(())
    }

    pub fn has_sdm(&self) -> bool {
        self.heads.contains(&Head::Sdm)
    }

    /// Patch sides must survive `depth - 1` halvings exactly.
    pub fn check_patch(&self, shape: [usize; 3]) -> Result<()> {
        let f = 1 << (self.depth - 1);
        if shape.iter().any(|&s| s == 0 || s % f != 0) {
            return Err(Error::InvalidConfig(format!("patch {shape:?} not divisible by {f}")));
        }
        Ok(())
    }
}

/// How a decoder doubles resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Upsampling {
    Trilinear,
    Transposed,
}

#[derive(Clone, Copy, Debug)]
struct ConvUnit {
    w: ParamId,
    b: ParamId,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
struct Decoder {
    kind: Upsampling,
    /// Transposed-convolution weights per level (coarse to fine).
    up: Vec<Option<(ParamId, ParamId)>>,
    blocks: Vec<[ConvUnit; 2]>,
    seg: (ParamId, ParamId),
    sdm: Option<(ParamId, ParamId)>,
}

/// Per-decoder outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutputs {
    /// Two-channel logits (background, foreground).
    pub seg_logits: Var,
    /// Channel softmax of `seg_logits`.
    pub seg_prob: Var,
    /// Tanh-squashed signed distance prediction, one channel.
    pub sdm: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct UNet {
    pub cfg: UNetConfig,
    pub params: ParamStore,
    enc: Vec<[ConvUnit; 2]>,
    decoders: Vec<Decoder>,
}

fn conv_unit(store: &mut ParamStore, name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> ConvUnit {
    ConvUnit {
        w: store.add(format!("{name}.w"), &[cout, cin, 27], Init::Kaiming { fan_in: cin * 27 }, rng),
        b: store.add(format!("{name}.b"), &[cout], Init::Zeros, rng),
        gamma: store.add(format!("{name}.gamma"), &[cout], Init::Ones, rng),
        beta: store.add(format!("{name}.beta"), &[cout], Init::Zeros, rng),
    }
}

fn block(store: &mut ParamStore, name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> [ConvUnit; 2] {
    [conv_unit(store, &format!("{name}.0"), cin, cout, rng), conv_unit(store, &format!("{name}.1"), cout, cout, rng)]
}

impl UNet {
    /// Builds the network; initial weights depend only on `cfg` and `weight_seed`.
    pub fn new(cfg: UNetConfig, weight_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(weight_seed);
        let mut store = ParamStore::default();
        let width = |l: usize| cfg.base_width << l;
        let mut enc = Vec::new();
        for l in 0..cfg.depth {
            let cin = if l == 0 { cfg.in_channels } else { width(l - 1) };
            enc.push(block(&mut store, &format!("enc{l}"), cin, width(l), &mut rng));
        }
        let mut decoders = Vec::new();
        for d in 0..cfg.decoders {
            let kind = if d == 0 { Upsampling::Trilinear } else { Upsampling::Transposed };
            let mut up = Vec::new();
            let mut blocks = Vec::new();
            for l in (0..cfg.depth - 1).rev() {
                let name = format!("dec{d}.l{l}");
                let (u, cin) = match kind {
                    Upsampling::Trilinear => (None, width(l + 1) + width(l)),
                    Upsampling::Transposed => {
                        let w = store.add(format!("{name}.up.w"), &[width(l + 1), width(l), 8], Init::Kaiming { fan_in: width(l + 1) }, &mut rng);
                        let b = store.add(format!("{name}.up.b"), &[width(l)], Init::Zeros, &mut rng);
                        (Some((w, b)), 2 * width(l))
                    }
                };
                up.push(u);
                blocks.push(block(&mut store, &name, cin, width(l), &mut rng));
            }
            let b0 = width(0);
            let seg = (
                store.add(format!("dec{d}.seg.w"), &[2, b0], Init::Kaiming { fan_in: b0 }, &mut rng),
                store.add(format!("dec{d}.seg.b"), &[2], Init::Zeros, &mut rng),
            );
            let sdm = cfg.has_sdm().then(|| {
                (
                    store.add(format!("dec{d}.sdm.w"), &[1, b0], Init::Kaiming { fan_in: b0 }, &mut rng),
                    store.add(format!("dec{d}.sdm.b"), &[1], Init::Zeros, &mut rng),
                )
            });
            decoders.push(Decoder { kind, up, blocks, seg, sdm });
        }
        Ok(UNet { cfg, params: store, enc, decoders })
    }

    pub fn decoder_kinds(&self) -> Vec<Upsampling> {
        self.decoders.iter().map(|d| d.kind).collect()
    }

    fn unit(g: &mut Graph, x: Var, u: &ConvUnit) -> Var {
        let y = g.conv3(x, u.w, u.b);
        let y = g.instance_norm(y, u.gamma, u.beta);
        g.leaky_relu(y, LEAKY_SLOPE)
    }

    fn run_block(g: &mut Graph, x: Var, b: &[ConvUnit; 2]) -> Var {
        let y = Self::unit(g, x, &b[0]);
        Self::unit(g, y, &b[1])
    }

    /// Shared encoder plus every decoder; returns the full-resolution
    /// feature map of each decoder.
    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Vec<Var>> {
        let xv = g.value(x);
        if xv.shape.len() != 5 || xv.channels() != self.cfg.in_channels {
            return Err(Error::InvalidInput(format!("expected [n, {}, d, h, w] input, got {:?}", self.cfg.in_channels, xv.shape)));
        }
        self.cfg.check_patch(xv.spatial())?;
        let mut skips = Vec::new();
        let mut h = x;
        for (l, b) in self.enc.iter().enumerate() {
            if l > 0 {
                h = g.maxpool2(h);
            }
            h = Self::run_block(g, h, b);
            skips.push(h);
        }
        let bottom = skips.pop().expect("depth >= 2");
        let mut out = Vec::new();
        for dec in &self.decoders {
            let mut h = bottom;
            for (i, skip) in skips.iter().rev().enumerate() {
                let up = match dec.up[i] {
                    None => g.upsample2(h),
                    Some((w, b)) => g.conv_transpose2(h, w, b),
                };
                let cat = g.concat(up, *skip);
                h = Self::run_block(g, cat, &dec.blocks[i]);
            }
            out.push(h);
        }
        Ok(out)
    }

    /// Output heads of each decoder. With a dropout seed, decoder `i` draws
    /// its mask from stream `i` of that seed in batch order, so a batch
    /// prefix always sees the same masks. The mask is shared by its heads.
    pub fn heads(&self, g: &mut Graph, feats: &[Var], dropout_seed: Option<u64>) -> Vec<HeadOutputs> {
        feats
            .iter()
            .zip(&self.decoders)
            .enumerate()
            .map(|(i, (&f, dec))| {
                let f = match dropout_seed {
                    Some(seed) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(i as u64);
                        g.dropout(f, self.cfg.dropout_rate, &mut rng)
                    }
                    None => f,
                };
                let seg_logits = g.conv1(f, dec.seg.0, dec.seg.1);
                let seg_prob = g.softmax(seg_logits);
                let sdm = dec.sdm.map(|(w, b)| {
                    let z = g.conv1(f, w, b);
                    g.tanh(z)
                });
                HeadOutputs { seg_logits, seg_prob, sdm }
            })
            .collect()
    }

    pub fn forward(&self, g: &mut Graph, x: Var, dropout_seed: Option<u64>) -> Result<Vec<HeadOutputs>> {
        let feats = self.features(g, x)?;
        Ok(self.heads(g, &feats, dropout_seed))
    }
}
