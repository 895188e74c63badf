use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::Protocol;
use super::runner::ResultRecord;
use crate::error::{Error, Result};
use crate::train::Method;

pub const METRICS: [&str; 4] = ["dice", "cldice", "tprec", "tsens"];

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One metric of one group, in long format. Statistics run over the cells
/// (seeds) of the group, each contributing its test-set mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: Protocol,
    pub method: Method,
    pub labeled: usize,
    pub unlabeled: usize,
    pub degradation: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Clean labels first, then the degradations in increasing severity.
pub fn scenario_rank(name: &str) -> u32 {
    match name {
        "reference" => 0,
        "erosion" => 1,
        "dilation" => 2,
        other => other.strip_prefix("removed").and_then(|l| l.parse::<u32>().ok()).map_or(100, |l| 2 + l),
    }
}

type GroupKey = (Protocol, u32, String, Method, usize, usize);

/// Groups by protocol, degradation, method and composition, in that sort
/// order; metrics follow [`METRICS`].
pub fn aggregate(records: &[ResultRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to aggregate".into()));
    }
    let mut groups: BTreeMap<GroupKey, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        let k = (r.protocol, scenario_rank(&r.degradation), r.degradation.clone(), r.method, r.labeled, r.unlabeled);
        groups.entry(k).or_default().push(r);
    }
    let mut rows = Vec::new();
    for ((protocol, _, degradation, method, labeled, unlabeled), rs) in groups {
        for metric in METRICS {
            let mut xs: Vec<f64> = rs
                .iter()
                .map(|r| match metric {
                    "dice" => r.dice_mean,
                    "cldice" => r.cldice_mean,
                    "tprec" => r.tprec_mean,
                    _ => r.tsens_mean,
                })
                .collect();
            let (mean, std) = mean_std(&xs);
            xs.sort_by(f64::total_cmp);
            rows.push(SummaryRow {
                protocol,
                method,
                labeled,
                unlabeled,
                degradation: degradation.clone(),
                metric: metric.to_string(),
                n: xs.len(),
                mean,
                std,
                min: xs[0],
                q1: quantile(&xs, 0.25),
                median: quantile(&xs, 0.5),
                q3: quantile(&xs, 0.75),
                max: xs[xs.len() - 1],
            });
        }
    }
    Ok(rows)
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
