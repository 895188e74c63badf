pub mod bench;
pub mod degrade;
pub mod edt;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod ssl;
pub mod topology;
pub mod train;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{confusion_counts, ConfusionCounts, Geometry, LabelVolume, Volume3D};
