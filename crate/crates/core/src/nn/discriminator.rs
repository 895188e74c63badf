//! Strided convolutional classifier telling labeled-origin from
//! unlabeled-origin (image, signed distance) pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::kernels::StridedConv;
use super::params::{Init, ParamId, ParamStore};
use crate::error::{Error, Result};

const SLOPE: f32 = 0.2;
const GEOM: StridedConv = StridedConv { kernel: 3, stride: 2, pad: 1 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub conv_widths: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { conv_widths: vec![8, 16, 32, 32] }
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub cfg: DiscriminatorConfig,
    pub params: ParamStore,
    convs: Vec<(ParamId, ParamId)>,
    fc: (ParamId, ParamId),
}

impl Discriminator {
    pub fn new(cfg: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if cfg.conv_widths.is_empty() || cfg.conv_widths.contains(&0) {
            return Err(Error::InvalidConfig("discriminator needs positive conv widths".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let mut cin = 2;
        let mut convs = Vec::new();
        for (i, &w) in cfg.conv_widths.iter().enumerate() {
            convs.push((
                params.add(format!("disc.conv{i}.w"), &[w, cin, 27], Init::Kaiming { fan_in: cin * 27 }, &mut rng),
                params.add(format!("disc.conv{i}.b"), &[w], Init::Zeros, &mut rng),
            ));
            cin = w;
        }
        let fc = (
            params.add("disc.fc.w", &[1, cin], Init::Kaiming { fan_in: cin }, &mut rng),
            params.add("disc.fc.b", &[1], Init::Zeros, &mut rng),
        );
        Ok(Discriminator { cfg, params, convs, fc })
    }

    /// `pair` is `[n, 2, d, h, w]` (image, signed distance); returns `[n, 1]` logits.
    pub fn forward(&self, g: &mut Graph, pair: Var) -> Result<Var> {
        let v = g.value(pair);
        if v.shape.len() != 5 || v.channels() != 2 {
            return Err(Error::InvalidInput(format!("discriminator expects [n, 2, d, h, w], got {:?}", v.shape)));
        }
        let mut h = pair;
        for &(w, b) in &self.convs {
            h = g.strided_conv(h, w, b, GEOM);
            h = g.leaky_relu(h, SLOPE);
        }
        let p = g.global_avg_pool(h);
        Ok(g.linear(p, self.fc.0, self.fc.1))
    }
}
