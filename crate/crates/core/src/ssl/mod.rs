//! Numerical building blocks of the semi-supervised methods: losses with
//! analytic gradients, ramp-up schedules, Monte-Carlo uncertainty, sharpening,
//! signed distance maps and weight averaging. Everything here is f64 and pure.

mod ema;
mod loss;
mod schedule;
mod sdm;
mod uncertainty;

pub use ema::ema_update;
pub use loss::{
    bce_with_logits, cross_entropy, cross_entropy_loss, masked_consistency_loss, masked_soft_dice, mse,
    soft_dice, soft_dice_loss, SOFT_DICE_EPS,
};
pub use schedule::{gaussian_rampup, uncertainty_threshold, ScheduleState};
pub use sdm::{sdm_from_mask, sdm_to_seg, sdm_to_seg_grad, sigmoid, SDMVolume};
pub use uncertainty::{binary_entropy, uncertainty_map, UncertaintyVolume};

use crate::error::{Error, Result};

/// Two-class probabilities stored as the foreground channel; the background
/// channel is `1 - fg`, so rows always sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVolume {
    shape: [usize; 3],
    fg: Vec<f64>,
}

impl ProbVolume {
    pub fn new(shape: [usize; 3], fg: Vec<f64>) -> Result<Self> {
        if fg.len() != shape.iter().product::<usize>() {
            return Err(Error::InvalidInput(format!(
                "{} probabilities for shape {shape:?}",
                fg.len()
            )));
        }
        if let Some(p) = fg.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("probability {p} outside [0, 1]")));
        }
        Ok(ProbVolume { shape, fg })
    }

    /// From explicit background/foreground channels that must sum to 1 (±1e-5).
    pub fn from_channels(shape: [usize; 3], bg: &[f64], fg: &[f64]) -> Result<Self> {
        if bg.len() != fg.len() {
            return Err(Error::InvalidInput("channel lengths differ".into()));
        }
        if bg.iter().zip(fg).any(|(b, f)| ((b + f) - 1.0).abs() > 1e-5) {
            return Err(Error::InvalidInput("class probabilities must sum to 1".into()));
        }
        ProbVolume::new(shape, fg.to_vec())
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.fg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fg.is_empty()
    }

    pub fn foreground(&self) -> &[f64] {
        &self.fg
    }

    pub fn background(&self) -> Vec<f64> {
        self.fg.iter().map(|p| 1.0 - p).collect()
    }

    /// Voxelwise `p > 0.5`.
    pub fn threshold(&self) -> Vec<u8> {
        self.fg.iter().map(|&p| (p > 0.5) as u8).collect()
    }
}

/// Foreground-channel sharpening `p^(1/T) / (p^(1/T) + (1-p)^(1/T))`.
pub fn sharpen_value(p: f64, temperature: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    // Ratio form avoids underflow of p^(1/T) for small T.
    let log_ratio = ((1.0 - p).ln() - p.ln()) / temperature;
    sigmoid(-log_ratio)
}

pub fn sharpen(p: &ProbVolume, temperature: f64) -> Result<ProbVolume> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!("sharpening temperature must be > 0, got {temperature}")));
    }
    Ok(ProbVolume {
        shape: p.shape,
        fg: p.fg.iter().map(|&v| sharpen_value(v, temperature)).collect(),
    })
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("length mismatch: {a} vs {b}")))
    }
}
