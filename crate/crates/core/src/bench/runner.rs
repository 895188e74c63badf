use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::aggregate::mean_std;
use super::experiment::{CellSpec, Dataset, ExperimentSpec, Protocol};
use crate::error::{Error, Result};
use crate::train::{evaluate, train, Method, VolumeScores};

pub const RESULTS_FILE: &str = "results.csv";
pub const PER_VOLUME_FILE: &str = "per_volume.csv";
pub const CELLS_DIR: &str = "cells";
pub const SNAPSHOT_FILE: &str = "cell.json";

/// One row of `results.csv`: a trained cell scored on the test set. Means
/// and population standard deviations run over test volumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub key: String,
    pub protocol: Protocol,
    pub method: Method,
    pub labeled: usize,
    pub unlabeled: usize,
    pub data_seed: u64,
    pub degradation: String,
    pub volumes: usize,
    pub dice_mean: f64,
    pub dice_std: f64,
    pub cldice_mean: f64,
    pub cldice_std: f64,
    pub tprec_mean: f64,
    pub tprec_std: f64,
    pub tsens_mean: f64,
    pub tsens_std: f64,
}

/// One row of `per_volume.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub key: String,
    pub volume: usize,
    pub dice: f64,
    pub cldice: f64,
    pub tprec: f64,
    pub tsens: f64,
}

/// Contents of `cells/<key>/cell.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSnapshot {
    pub key: String,
    pub protocol: Protocol,
    pub cell: CellSpec,
}

#[derive(Debug)]
pub struct RunSummary {
    /// Records of every completed cell, in sweep order.
    pub records: Vec<ResultRecord>,
    pub trained: usize,
    pub skipped: usize,
    pub failed: Vec<(String, Error)>,
}

impl RunSummary {
    pub fn all_completed(&self) -> bool {
        self.failed.is_empty()
    }
}

impl ResultRecord {
    pub fn new(key: String, protocol: Protocol, cell: &CellSpec, scores: &[VolumeScores]) -> Self {
        let stat = |f: fn(&VolumeScores) -> f64| mean_std(&scores.iter().map(f).collect::<Vec<_>>());
        let (dice_mean, dice_std) = stat(|s| s.dice);
        let (cldice_mean, cldice_std) = stat(|s| s.cldice);
        let (tprec_mean, tprec_std) = stat(|s| s.tprec);
        let (tsens_mean, tsens_std) = stat(|s| s.tsens);
        ResultRecord {
            key,
            protocol,
            method: cell.method,
            labeled: cell.composition.labeled,
            unlabeled: cell.composition.unlabeled,
            data_seed: cell.data_seed,
            degradation: cell.degradation_name(),
            volumes: scores.len(),
            dice_mean,
            dice_std,
            cldice_mean,
            cldice_std,
            tprec_mean,
            tprec_std,
            tsens_mean,
            tsens_std,
        }
    }
}

/// Trains one cell and scores the inference model on every test volume.
/// With `run_dir`, the training run is written there.
pub fn run_cell(cell: &CellSpec, data: &Dataset, run_dir: Option<&Path>) -> Result<Vec<VolumeScores>> {
    let pool = data.select(cell)?;
    let outcome = train(&cell.train, &pool, run_dir)?;
    let model = outcome.learner.inference_model();
    evaluate(model, &data.test, cell.train.patch_size, cell.train.eval_stride)
}

/// Runs every cell not yet present in `runs_dir/results.csv`. A failing
/// cell is logged and reported; the remaining cells still run.
pub fn run_experiment(spec: &ExperimentSpec, runs_dir: &Path) -> Result<RunSummary> {
    spec.validate()?;
    let data = Dataset::load(&spec.dataset)?;
    data.check_disjoint()?;
    if data.test.is_empty() {
        return Err(Error::InvalidInput("the dataset has no test volumes".into()));
    }
    let pool = data.labeled_pool();
    if let Some(c) = spec.compositions.iter().find(|c| c.labeled > pool || c.labeled + c.unlabeled > data.train.len()) {
        return Err(Error::InvalidConfig(format!(
            "composition {c:?} exceeds the pool ({} volumes, {pool} labeled)",
            data.train.len()
        )));
    }
    fs::create_dir_all(runs_dir).map_err(|e| Error::io(runs_dir, e))?;
    let results = runs_dir.join(RESULTS_FILE);
    let mut summary = RunSummary { records: Vec::new(), trained: 0, skipped: 0, failed: Vec::new() };
    let cells = spec.cells();
    for (i, cell) in cells.iter().enumerate() {
        let key = cell.key();
        if let Some(r) = read_results(&results)?.into_iter().find(|r| r.key == key) {
            summary.skipped += 1;
            summary.records.push(r);
            continue;
        }
        log::info!(
            "cell {}/{} {key}: {} ({}, {}) seed {} {}",
            i + 1,
            cells.len(),
            cell.method,
            cell.composition.labeled,
            cell.composition.unlabeled,
            cell.data_seed,
            cell.degradation_name()
        );
        let dir = runs_dir.join(CELLS_DIR).join(&key);
        let outcome = write_snapshot(&dir, &key, spec.protocol, cell).and_then(|_| run_cell(cell, &data, Some(&dir)));
        match outcome {
            Ok(scores) => {
                let record = ResultRecord::new(key, spec.protocol, cell, &scores);
                append_record(runs_dir, &record, &scores)?;
                summary.trained += 1;
                summary.records.push(record);
            }
            Err(e) => {
                log::error!("cell {key} failed: {e}");
                summary.failed.push((key, e));
            }
        }
    }
    Ok(summary)
}

fn write_snapshot(dir: &Path, key: &str, protocol: Protocol, cell: &CellSpec) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let snap = CellSnapshot { key: key.to_string(), protocol, cell: cell.clone() };
    let path = dir.join(SNAPSHOT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&snap)?).map_err(|e| Error::io(&path, e))
}

/// Retrains a cell from its `cell.json` and returns a fresh record without
/// touching any results file.
pub fn rerun_snapshot(path: impl AsRef<Path>) -> Result<ResultRecord> {
    let path = path.as_ref();
    let snap: CellSnapshot = serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
    if snap.cell.key() != snap.key {
        return Err(Error::InvalidInput(format!("{} was edited: key no longer matches", path.display())));
    }
    let data = Dataset::load(&snap.cell.dataset)?;
    data.check_disjoint()?;
    let scores = run_cell(&snap.cell, &data, None)?;
    Ok(ResultRecord::new(snap.key, snap.protocol, &snap.cell, &scores))
}

pub fn snapshot_path(runs_dir: &Path, key: &str) -> PathBuf {
    runs_dir.join(CELLS_DIR).join(key).join(SNAPSHOT_FILE)
}

/// Reads `results.csv`; a missing file reads as empty.
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    read_rows(path.as_ref())
}

pub fn read_volume_records(path: impl AsRef<Path>) -> Result<Vec<VolumeRecord>> {
    read_rows(path.as_ref())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Appends under an exclusive lock on `results.csv`. Per-volume rows go
/// first so a results row always has its volumes; a key already present
/// (another process finished the same cell) is not written twice.
fn append_record(runs_dir: &Path, record: &ResultRecord, scores: &[VolumeScores]) -> Result<()> {
    let results = runs_dir.join(RESULTS_FILE);
    let file = open_append(&results)?;
    file.lock().map_err(|e| Error::io(&results, e))?;
    if read_results(&results)?.iter().any(|r| r.key == record.key) {
        return Ok(());
    }
    let volumes = runs_dir.join(PER_VOLUME_FILE);
    let vfile = open_append(&volumes)?;
    let mut w = csv::WriterBuilder::new().has_headers(is_empty(&vfile, &volumes)?).from_writer(&vfile);
    for (volume, s) in scores.iter().enumerate() {
        w.serialize(VolumeRecord {
            key: record.key.clone(),
            volume,
            dice: s.dice,
            cldice: s.cldice,
            tprec: s.tprec,
            tsens: s.tsens,
        })?;
    }
    w.flush().map_err(|e| Error::io(&volumes, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(is_empty(&file, &results)?).from_writer(&file);
    w.serialize(record)?;
    w.flush().map_err(|e| Error::io(&results, e))?;
    Ok(())
}

fn open_append(path: &Path) -> Result<File> {
    OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))
}

fn is_empty(file: &File, path: &Path) -> Result<bool> {
    Ok(file.metadata().map_err(|e| Error::io(path, e))?.len() == 0)
}

/// Every distinct key in `results.csv`, failing on duplicates.
pub fn completed_keys(runs_dir: &Path) -> Result<HashSet<String>> {
    let mut keys = HashSet::new();
    for r in read_results(runs_dir.join(RESULTS_FILE))? {
        if !keys.insert(r.key.clone()) {
            return Err(Error::InvalidInput(format!("duplicate cell key {} in results", r.key)));
        }
    }
    Ok(keys)
}
