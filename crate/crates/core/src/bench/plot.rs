use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::aggregate::{write_summary, SummaryRow, METRICS};
use super::experiment::Protocol;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChartKind {
    /// Mean against labeled count with a shaded one-std band.
    Line,
    /// One box per group and method.
    Box,
}

impl ChartKind {
    pub fn for_protocol(p: Protocol) -> Self {
        match p {
            Protocol::CompositionSweep => ChartKind::Line,
            Protocol::SeedSweep | Protocol::DegradationSweep => ChartKind::Box,
        }
    }
}

fn draw_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes `<protocol>_<metric>.svg` plus the plotted rows as
/// `<protocol>_<metric>.csv` for every protocol and metric present.
/// Returns the files written.
pub fn plot(rows: &[SummaryRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty summary".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let protocols: Vec<Protocol> = rows.iter().map(|r| r.protocol).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    for protocol in protocols {
        for metric in METRICS {
            let sel: Vec<SummaryRow> = rows.iter().filter(|r| r.protocol == protocol && r.metric == metric).cloned().collect();
            if sel.is_empty() {
                continue;
            }
            let stem = format!("{protocol}_{metric}");
            let csv = out_dir.join(format!("{stem}.csv"));
            write_summary(&csv, &sel)?;
            let svg = out_dir.join(format!("{stem}.svg"));
            match ChartKind::for_protocol(protocol) {
                ChartKind::Line => line_chart(&sel, &svg, &stem)?,
                ChartKind::Box => box_chart(&sel, &svg, &stem)?,
            }
            written.push(svg);
            written.push(csv);
        }
    }
    Ok(written)
}

fn series_name(r: &SummaryRow, with_scenario: bool) -> String {
    if with_scenario {
        format!("{} {}", r.method, r.degradation)
    } else {
        r.method.to_string()
    }
}

fn line_chart(rows: &[SummaryRow], path: &Path, title: &str) -> Result<()> {
    let with_scenario = rows.iter().any(|r| r.degradation != rows[0].degradation);
    let mut series: BTreeMap<String, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        series.entry(series_name(r, with_scenario)).or_default().push(r);
    }
    let xmin = rows.iter().map(|r| r.labeled).min().unwrap_or(0) as f64;
    let xmax = rows.iter().map(|r| r.labeled).max().unwrap_or(1) as f64;
    let pad = ((xmax - xmin) * 0.05).max(0.5);
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(xmin - pad..xmax + pad, 0f64..1f64)
        .map_err(|e| draw_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("labeled volumes")
        .y_desc(rows[0].metric.as_str())
        .draw()
        .map_err(|e| draw_err(path, e))?;
    for (i, (name, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by_key(|r| r.labeled);
        let color = Palette99::pick(i).to_rgba();
        let upper = pts.iter().map(|r| (r.labeled as f64, (r.mean + r.std).min(1.0)));
        let lower = pts.iter().rev().map(|r| (r.labeled as f64, (r.mean - r.std).max(0.0)));
        chart
            .draw_series(std::iter::once(Polygon::new(upper.chain(lower).collect::<Vec<_>>(), color.mix(0.2).filled())))
            .map_err(|e| draw_err(path, e))?;
        chart
            .draw_series(LineSeries::new(pts.iter().map(|r| (r.labeled as f64, r.mean)), color.stroke_width(2)))
            .map_err(|e| draw_err(path, e))?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))
}

fn box_chart(rows: &[SummaryRow], path: &Path, title: &str) -> Result<()> {
    let vary_comp = rows.iter().any(|r| (r.labeled, r.unlabeled) != (rows[0].labeled, rows[0].unlabeled));
    let vary_scen = rows.iter().any(|r| r.degradation != rows[0].degradation);
    let group_of = |r: &SummaryRow| {
        let mut parts = Vec::new();
        if vary_comp || !vary_scen {
            parts.push(format!("({}, {})", r.labeled, r.unlabeled));
        }
        if vary_scen {
            parts.push(r.degradation.clone());
        }
        parts.join(" ")
    };
    // Rows arrive in aggregate order, which already sorts groups sensibly.
    let mut groups: Vec<String> = Vec::new();
    let mut methods = Vec::new();
    for r in rows {
        let g = group_of(r);
        if !groups.contains(&g) {
            groups.push(g);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods.sort();
    let width = 0.8 / methods.len() as f64;
    let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(path, e))?;
    let labels = groups.clone();
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(-0.5f64..groups.len() as f64 - 0.5, 0f64..1f64)
        .map_err(|e| draw_err(path, e))?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(groups.len())
        .x_label_formatter(&move |x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                labels.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc(rows[0].metric.as_str())
        .draw()
        .map_err(|e| draw_err(path, e))?;
    for (mi, &method) in methods.iter().enumerate() {
        let color = Palette99::pick(mi).to_rgba();
        let mut elems: Vec<PathElement<(f64, f64)>> = Vec::new();
        let mut boxes = Vec::new();
        for r in rows.iter().filter(|r| r.method == method) {
            let gi = groups.iter().position(|g| *g == group_of(r)).expect("group collected") as f64;
            let c = gi - 0.4 + width * (mi as f64 + 0.5);
            let (l, h) = (c - 0.4 * width, c + 0.4 * width);
            boxes.push(Rectangle::new([(l, r.q1), (h, r.q3)], color.mix(0.3).filled()));
            boxes.push(Rectangle::new([(l, r.q1), (h, r.q3)], color.stroke_width(1)));
            elems.push(PathElement::new(vec![(l, r.median), (h, r.median)], color.stroke_width(2)));
            elems.push(PathElement::new(vec![(c, r.min), (c, r.q1)], color.stroke_width(1)));
            elems.push(PathElement::new(vec![(c, r.q3), (c, r.max)], color.stroke_width(1)));
        }
        chart.draw_series(boxes).map_err(|e| draw_err(path, e))?;
        chart
            .draw_series(elems)
            .map_err(|e| draw_err(path, e))?
            .label(method.to_string())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 15, y + 5)], color.mix(0.6).filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_err(path, e))?;
    root.present().map_err(|e| draw_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::aggregate::{aggregate, read_summary};
    use crate::bench::runner::ResultRecord;
    use crate::train::Method;

    fn records(protocol: Protocol) -> Vec<ResultRecord> {
        let mut out = Vec::new();
        for (labeled, seed, m) in [(1, 0, Method::Supervised), (1, 1, Method::Supervised), (2, 0, Method::Uamt), (1, 0, Method::Uamt)] {
            let d = 0.3 + 0.1 * labeled as f64 + 0.01 * seed as f64;
            out.push(ResultRecord {
                key: format!("{labeled}{seed}{m}"),
                protocol,
                method: m,
                labeled,
                unlabeled: 4 - labeled,
                data_seed: seed,
                degradation: "reference".into(),
                volumes: 2,
                dice_mean: d,
                dice_std: 0.01,
                cldice_mean: d,
                cldice_std: 0.0,
                tprec_mean: d,
                tprec_std: 0.0,
                tsens_mean: d,
                tsens_std: 0.0,
            });
        }
        out
    }

    #[test]
    fn emitted_values_equal_the_summary() {
        let dir = tempfile::tempdir().unwrap();
        for protocol in [Protocol::CompositionSweep, Protocol::SeedSweep] {
            let rows = aggregate(&records(protocol)).unwrap();
            let files = plot(&rows, dir.path()).unwrap();
            assert_eq!(files.len(), 2 * METRICS.len());
            let back = read_summary(dir.path().join(format!("{protocol}_dice.csv"))).unwrap();
            let expect: Vec<SummaryRow> = rows.iter().filter(|r| r.metric == "dice").cloned().collect();
            assert_eq!(back, expect);
            let svg = std::fs::read_to_string(dir.path().join(format!("{protocol}_dice.svg"))).unwrap();
            assert!(svg.starts_with("<svg"));
            match ChartKind::for_protocol(protocol) {
                ChartKind::Line => assert!(svg.contains("<polygon") || svg.contains("<path")),
                ChartKind::Box => assert!(svg.contains("<rect")),
            }
        }
        assert!(plot(&[], dir.path()).is_err());
    }
}
