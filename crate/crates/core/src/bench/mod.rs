//! Experiment orchestration: sweeps over methods, training-pool
//! compositions, seeds and label degradations, with resumable persistence,
//! aggregation and plots.

mod aggregate;
mod experiment;
mod plot;
mod runner;

pub use aggregate::{aggregate, mean_std, read_summary, scenario_rank, write_summary, SummaryRow, METRICS};
pub use experiment::{scenario_name, CellSpec, Dataset, DatasetSpec, ExperimentSpec, Protocol};
pub use plot::{plot, ChartKind};
pub use runner::{
    completed_keys, read_results, read_volume_records, rerun_snapshot, run_cell, run_experiment, snapshot_path, CellSnapshot,
    ResultRecord, RunSummary, VolumeRecord, CELLS_DIR, PER_VOLUME_FILE, RESULTS_FILE, SNAPSHOT_FILE,
};

/// Results root used when no directory is given.
pub const RUNS_DIR_ENV: &str = "BENCH_RUNS_DIR";
