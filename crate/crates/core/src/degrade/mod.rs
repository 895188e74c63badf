//! Simulated annotation errors: under-segmentation (erosion),
//! over-segmentation (dilation) and missing distal vessels (pruning).

mod graph;
mod morph;
mod prune;

pub use morph::{dilate, erode_safe};
pub use prune::{branch_count, prune_distal, prune_distal_with, PruneReport, DEFAULT_PRUNE_FRACTIONS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DegradationSpec {
    Erosion,
    Dilation,
    Removed {
        level: u8,
        #[serde(default)]
        rng_seed: u64,
        #[serde(default = "default_fractions")]
        fractions: [f64; 3],
    },
}

fn default_fractions() -> [f64; 3] {
    DEFAULT_PRUNE_FRACTIONS
}

impl DegradationSpec {
    /// Builds a spec from CLI-style arguments; `level` is required for and
    /// only accepted with `removed`.
    pub fn parse(kind: &str, level: Option<u8>, rng_seed: u64) -> Result<Self> {
        let spec = match (kind, level) {
            ("erosion", None) => DegradationSpec::Erosion,
            ("dilation", None) => DegradationSpec::Dilation,
            ("removed", Some(level)) => DegradationSpec::Removed {
                level,
                rng_seed,
                fractions: DEFAULT_PRUNE_FRACTIONS,
            },
            ("erosion" | "dilation", Some(_)) => {
                return Err(Error::InvalidConfig(format!("{kind} takes no level")))
            }
            ("removed", None) => return Err(Error::InvalidConfig("removed needs a level".into())),
            _ => return Err(Error::InvalidConfig(format!("unknown degradation kind '{kind}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let DegradationSpec::Removed { level, fractions, .. } = self {
            if !(1..=3).contains(level) {
                return Err(Error::InvalidConfig(format!("removed level must be 1..=3, got {level}")));
            }
            if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(Error::InvalidConfig("prune fractions must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Short scenario name, e.g. `erosion` or `removed2`.
    pub fn name(&self) -> String {
        match self {
            DegradationSpec::Erosion => "erosion".into(),
            DegradationSpec::Dilation => "dilation".into(),
            DegradationSpec::Removed { level, .. } => format!("removed{level}"),
        }
    }

    pub fn apply(&self, label: &LabelVolume) -> Result<LabelVolume> {
        self.apply_with_report(label).map(|(l, _)| l)
    }

    pub fn apply_with_report(&self, label: &LabelVolume) -> Result<(LabelVolume, Option<PruneReport>)> {
        self.validate()?;
        Ok(match self {
            DegradationSpec::Erosion => (erode_safe(label), None),
            DegradationSpec::Dilation => (dilate(label), None),
            DegradationSpec::Removed { level, rng_seed, fractions } => {
                let (l, r) = prune_distal_with(label, *level, *rng_seed, *fractions)?;
                (l, Some(r))
            }
        })
    }
}
