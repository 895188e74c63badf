use super::ProbVolume;
use crate::error::{Error, Result};

/// Per-voxel predictive entropy in nats.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyVolume {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl UncertaintyVolume {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::InvalidInput("uncertainty length does not match shape".into()));
        }
        Ok(UncertaintyVolume { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// `-p ln p - (1-p) ln(1-p)` with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Entropy of the mean of several stochastic predictions.
pub fn uncertainty_map(passes: &[ProbVolume]) -> Result<UncertaintyVolume> {
    let first = passes
        .first()
        .ok_or_else(|| Error::InvalidInput("uncertainty needs at least one pass".into()))?;
    let shape = first.shape();
    if let Some(p) = passes.iter().find(|p| p.shape() != shape) {
        return Err(Error::ShapeMismatch(p.shape(), shape));
    }
    let n = passes.len() as f64;
    let mut mean = vec![0.0; first.len()];
    for p in passes {
        for (m, v) in mean.iter_mut().zip(p.foreground()) {
            *m += v;
        }
    }
    let data = mean.into_iter().map(|m| binary_entropy(m / n)).collect();
    Ok(UncertaintyVolume { shape, data })
}
