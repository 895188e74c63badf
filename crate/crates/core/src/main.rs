use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use vesselbench::bench::{self, ExperimentSpec, RUNS_DIR_ENV};
use vesselbench::degrade::{DegradationSpec, PruneReport};
use vesselbench::io::{read_label, write_volume};
use vesselbench::metrics::cl_dice;
use vesselbench::phantom::{generate_phantom, PhantomConfig};

#[derive(Parser)]
#[command(name = "vesselbench", version, about = "Semi-supervised vessel segmentation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic vascular phantoms.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// Segmentation metrics.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Simulate annotation errors on every label file of a directory.
    Degrade {
        #[arg(long)]
        kind: String,
        /// Severity, only for `removed` (1..=3).
        #[arg(long)]
        level: Option<u8>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark sweeps.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum PhantomCmd {
    /// Writes `phantom_<seed>_{image,label}.nii.gz` and
    /// `phantom_<seed>_centerlines.json`.
    Generate {
        /// Phantom settings as JSON; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of phantoms, with consecutive seeds from the config's.
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Prints Dice, clDice, topology precision and sensitivity as JSON.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Runs every missing cell of a sweep. Exits 1 if any cell failed.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, env = RUNS_DIR_ENV, default_value = "runs")]
        runs: PathBuf,
    },
    /// Writes `summary.csv` next to the results.
    Aggregate {
        #[arg(long, env = RUNS_DIR_ENV, default_value = "runs")]
        runs: PathBuf,
    },
    /// Renders one SVG (plus CSV of plotted values) per metric.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        /// Defaults to `plots/` beside the summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrains a finished cell from its snapshot and compares metrics.
    Rerun {
        #[arg(long)]
        key: String,
        #[arg(long, env = RUNS_DIR_ENV, default_value = "runs")]
        runs: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
}

#[derive(Serialize)]
struct Provenance<'a> {
    source: &'a Path,
    degradation: &'a DegradationSpec,
    input_voxels: usize,
    output_voxels: usize,
    prune: Option<PruneReport>,
    tool_version: &'static str,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Phantom(PhantomCmd::Generate { config, out, count }) => {
            let base: PhantomConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => PhantomConfig::default(),
            };
            fs::create_dir_all(&out)?;
            for i in 0..count {
                let cfg = PhantomConfig { rng_seed: base.rng_seed + i, ..base.clone() };
                let p = generate_phantom(&cfg)?;
                let stem = out.join(format!("phantom_{:04}", cfg.rng_seed));
                write_volume(&p.image, with_suffix(&stem, "_image.nii.gz"))?;
                write_volume(&p.label, with_suffix(&stem, "_label.nii.gz"))?;
                let lines: Vec<&Vec<[usize; 3]>> = p.branches.iter().map(|b| &b.centerline).collect();
                fs::write(with_suffix(&stem, "_centerlines.json"), serde_json::to_string(&lines)?)?;
                log::info!("wrote {} ({} branches)", stem.display(), p.branches.len());
            }
        }
        Command::Metrics(MetricsCmd::Eval { pred, gt }) => {
            let report = cl_dice(&read_label(&pred)?, &read_label(&gt)?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Degrade { kind, level, seed, input, out } => {
            let spec = DegradationSpec::parse(&kind, level, seed)?;
            fs::create_dir_all(&out)?;
            let mut n = 0;
            for entry in fs::read_dir(&input).with_context(|| format!("listing {}", input.display()))? {
                let path = entry?.path();
                let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                if !(name.ends_with(".nii") || name.ends_with(".nii.gz")) {
                    continue;
                }
                let label = read_label(&path)?;
                let (degraded, prune) = spec.apply_with_report(&label)?;
                write_volume(&degraded, out.join(&name))?;
                let prov = Provenance {
                    source: &path,
                    degradation: &spec,
                    input_voxels: label.count(),
                    output_voxels: degraded.count(),
                    prune,
                    tool_version: env!("CARGO_PKG_VERSION"),
                };
                let stem = name.trim_end_matches(".gz").trim_end_matches(".nii");
                fs::write(out.join(format!("{stem}.provenance.json")), serde_json::to_string_pretty(&prov)?)?;
                n += 1;
            }
            if n == 0 {
                bail!("no NIfTI label files in {}", input.display());
            }
            log::info!("degraded {n} labels ({})", spec.name());
        }
        Command::Bench(cmd) => return bench_command(cmd),
    }
    Ok(ExitCode::SUCCESS)
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn bench_command(cmd: BenchCmd) -> Result<ExitCode> {
    match cmd {
        BenchCmd::Run { spec, runs } => {
            let spec = ExperimentSpec::read(&spec)?;
            let summary = bench::run_experiment(&spec, &runs)?;
            log::info!(
                "{} cells: {} trained, {} already done, {} failed",
                summary.records.len() + summary.failed.len(),
                summary.trained,
                summary.skipped,
                summary.failed.len()
            );
            for (key, e) in &summary.failed {
                eprintln!("cell {key} failed: {e}");
            }
            if !summary.all_completed() {
                return Ok(ExitCode::from(1));
            }
        }
        BenchCmd::Aggregate { runs } => {
            let records = bench::read_results(runs.join(bench::RESULTS_FILE))?;
            let rows = bench::aggregate(&records)?;
            let path = runs.join("summary.csv");
            bench::write_summary(&path, &rows)?;
            println!("{}", path.display());
        }
        BenchCmd::Plot { summary, out } => {
            let rows = bench::read_summary(&summary)?;
            let out = out.unwrap_or_else(|| summary.parent().unwrap_or(Path::new(".")).join("plots"));
            for f in bench::plot(&rows, &out)? {
                println!("{}", f.display());
            }
        }
        BenchCmd::Rerun { key, runs, tolerance } => {
            let stored = bench::read_results(runs.join(bench::RESULTS_FILE))?
                .into_iter()
                .find(|r| r.key == key)
                .with_context(|| format!("no finished cell {key}"))?;
            let fresh = bench::rerun_snapshot(bench::snapshot_path(&runs, &key))?;
            let diff = [
                (stored.dice_mean - fresh.dice_mean).abs(),
                (stored.cldice_mean - fresh.cldice_mean).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            println!("{}", serde_json::to_string_pretty(&fresh)?);
            if diff > tolerance {
                eprintln!("metrics differ from the stored record by {diff:e}");
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
