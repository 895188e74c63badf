//! Training: configuration, patch sampling, the per-method steps, the loop
//! and sliding-window evaluation.

mod config;
mod data;
mod eval;
mod run;
mod steps;

pub use config::{BatchComposition, Method, TrainConfig};
pub use data::{crop, Batch, LabeledVolume, PatchSampler, TrainData};
pub use eval::{evaluate, predict_volume, score, segment, window_starts, VolumeScores};
pub use run::{read_history, train, write_run, Composition, RunMetadata, TrainOutcome};
pub use steps::{
    consistency_loss, cross_sharpened_loss, discriminator_step, dtc_consistency, perturb, sdm_target, step_dtc, step_mcnet,
    step_mt, step_sassnet, step_supervised, step_uamt, step_uamt_with_threshold, supervised_loss, teacher_uncertainty,
    Learner, LossReport, StepSeed,
};
