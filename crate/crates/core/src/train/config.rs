use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DiscriminatorConfig, Head, UNetConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Supervised,
    Mt,
    Uamt,
    Sassnet,
    Dtc,
    Mcnet,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Supervised, Method::Mt, Method::Uamt, Method::Sassnet, Method::Dtc, Method::Mcnet];

    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Mt => "mt",
            Method::Uamt => "uamt",
            Method::Sassnet => "sassnet",
            Method::Dtc => "dtc",
            Method::Mcnet => "mcnet",
        }
    }

    pub fn uses_unlabeled(self) -> bool {
        self != Method::Supervised
    }

    pub fn has_teacher(self) -> bool {
        matches!(self, Method::Mt | Method::Uamt)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Patches drawn per step from each pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchComposition {
    pub labeled: usize,
    pub unlabeled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lambda_c_final: f64,
    /// Weight of the signed-distance regression term.
    pub alpha: f64,
    /// Steepness of the distance-to-probability transform.
    pub k: f64,
    pub sharpen_t: f64,
    pub ema_decay: f64,
    pub mc_passes: usize,
    pub t_max: u64,
    pub patch_size: [usize; 3],
    pub batch: BatchComposition,
    /// Std of the Gaussian input perturbation; samples are clipped to twice this.
    pub noise_std: f64,
    pub data_seed: u64,
    pub weight_seed: u64,
    pub base_width: usize,
    pub depth: usize,
    pub dropout_rate: f32,
    pub discriminator: DiscriminatorConfig,
    pub discriminator_lr: f64,
    /// Sliding-window stride used at evaluation, per axis.
    pub eval_stride: [usize; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Supervised,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            lambda_c_final: 0.01,
            alpha: 0.3,
            k: -1500.0,
            sharpen_t: 0.1,
            ema_decay: 0.99,
            mc_passes: 8,
            t_max: 300,
            patch_size: [32, 32, 32],
            batch: BatchComposition { labeled: 2, unlabeled: 2 },
            noise_std: 0.1,
            data_seed: 0,
            weight_seed: 0,
            base_width: 8,
            depth: 3,
            dropout_rate: 0.5,
            discriminator: DiscriminatorConfig::default(),
            discriminator_lr: 1e-4,
            eval_stride: [16, 16, 16],
        }
    }
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        TrainConfig { method, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.lambda_c_final >= 0.0) || !(self.alpha >= 0.0) {
            return bad("lambda_c_final and alpha must be non-negative");
        }
        if self.batch.labeled == 0 {
            return bad("at least one labeled patch per batch is required");
        }
        if self.method.uses_unlabeled() && self.batch.unlabeled == 0 {
            return bad("semi-supervised methods need unlabeled patches in each batch");
        }
        if self.method == Method::Uamt && self.mc_passes == 0 {
            return bad("mc_passes must be at least 1");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("ema_decay must lie in [0, 1)");
        }
        if !(self.sharpen_t > 0.0) || !(self.noise_std >= 0.0) {
            return bad("sharpen_t must be positive and noise_std non-negative");
        }
        if self.t_max == 0 {
            return bad("t_max must be positive");
        }
        if self.eval_stride.contains(&0) {
            return bad("eval_stride must be positive");
        }
        self.unet_config().validate()?;
        self.unet_config().check_patch(self.patch_size)
    }

    /// Network layout implied by the method.
    pub fn unet_config(&self) -> UNetConfig {
        let heads = match self.method {
            Method::Sassnet | Method::Dtc => vec![Head::Segmentation, Head::Sdm],
            _ => vec![Head::Segmentation],
        };
        UNetConfig {
            in_channels: 1,
            base_width: self.base_width,
            depth: self.depth,
            dropout_rate: self.dropout_rate,
            heads,
            decoders: if self.method == Method::Mcnet { 2 } else { 1 },
        }
    }
}
