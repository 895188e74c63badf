use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::{PatchSampler, TrainData};
use super::steps::{Learner, LossReport, StepSeed};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::ssl::ScheduleState;

/// Training pool split recorded with every run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub labeled: usize,
    pub unlabeled: usize,
}

/// Contents of a run's `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: TrainConfig,
    pub composition: Composition,
}

pub struct TrainOutcome {
    pub learner: Learner,
    pub history: Vec<LossReport>,
    pub metadata: RunMetadata,
}

/// Runs `cfg.t_max` steps. With `run_dir`, writes `config.json`,
/// `history.csv` and `checkpoints/final.ckpt` there.
pub fn train(cfg: &TrainConfig, data: &TrainData, run_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.method.uses_unlabeled() && data.unlabeled.is_empty() {
        return Err(Error::InvalidInput(format!("{} needs unlabeled volumes", cfg.method)));
    }
    let metadata = RunMetadata {
        config: cfg.clone(),
        composition: Composition { labeled: data.labeled.len(), unlabeled: data.unlabeled.len() },
    };
    let mut sampler = PatchSampler::new(data, cfg.patch_size, cfg.data_seed)?;
    let mut learner = Learner::new(cfg)?;
    let unlabeled = if cfg.method.uses_unlabeled() { cfg.batch.unlabeled } else { 0 };
    let base = StepSeed::for_step(cfg.weight_seed, cfg.data_seed).0;
    let mut history = Vec::with_capacity(cfg.t_max as usize);
    for t in 1..=cfg.t_max {
        let batch = sampler.sample(data, cfg.batch.labeled, unlabeled)?;
        let s = ScheduleState::new(t, cfg.t_max, cfg.lambda_c_final)?;
        let report = learner.step(&batch, &s, StepSeed::for_step(base, t))?;
        if t % 50 == 0 || t == cfg.t_max {
            log::info!("{} step {t}/{}: total {:.4}", cfg.method, cfg.t_max, report.total);
        }
        history.push(report);
    }
    let outcome = TrainOutcome { learner, history, metadata };
    if let Some(dir) = run_dir {
        write_run(dir, &outcome)?;
    }
    Ok(outcome)
}

pub fn write_run(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    let ckdir = dir.join("checkpoints");
    fs::create_dir_all(&ckdir).map_err(|e| Error::io(&ckdir, e))?;
    let cfg_path = dir.join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&outcome.metadata)?).map_err(|e| Error::io(&cfg_path, e))?;
    let mut w = csv::Writer::from_path(dir.join("history.csv"))?;
    for r in &outcome.history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(dir.join("history.csv"), e))?;
    let l = &outcome.learner;
    let mut groups = vec![("student".to_string(), l.student.params.clone())];
    if let Some(t) = &l.teacher {
        groups.push(("teacher".into(), t.params.clone()));
    }
    if let Some(d) = &l.discriminator {
        groups.push(("discriminator".into(), d.params.clone()));
    }
    Checkpoint { config: serde_json::to_value(&outcome.metadata)?, groups }.write(ckdir.join("final.ckpt"))
}

/// Reads back a run's loss history.
pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<LossReport>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
