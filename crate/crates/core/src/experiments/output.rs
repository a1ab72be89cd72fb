use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::spec::ExperimentKind;
use super::ExperimentReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid("format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    kind: String,
    signal_kind: &'a str,
    signal_params: &'a str,
    epsilon: f64,
    grid_value: Option<f64>,
    statistic: f64,
    std_error: f64,
    seed: u64,
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Writes the cells as CSV (one row per cell) or the full report as JSON.
pub fn write_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = create(path)?;
    match format {
        ReportFormat::Json => {
            let mut w = std::io::BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            w.flush().map_err(|e| Error::io(path, e))
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(file);
            for c in &report.cells {
                w.serialize(CsvRow {
                    kind: format!("{}:{}", report.spec.kind, c.metric),
                    signal_kind: &c.signal_kind,
                    signal_params: &c.signal_params,
                    epsilon: c.epsilon,
                    grid_value: c.grid_value,
                    statistic: c.statistic,
                    std_error: c.std_error,
                    seed: c.seed,
                })?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn grid_name(kind: ExperimentKind, metric: &str) -> &'static str {
    match (kind, metric) {
        (ExperimentKind::Contraction, _) => "M",
        (ExperimentKind::CoverageSize, "coverage") => "C",
        (ExperimentKind::CoverageSize, m) if m.starts_with("size") => "c",
        _ => "delta",
    }
}

fn sanitize(s: &str) -> String {
    let mut out: String = s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect();
    while out.contains("--") {
        out = out.replace("--", "-");
    }
    out.trim_matches('-').to_string()
}

/// Writes one whitespace-separated data file per (statistic, signal) into
/// `dir`. Gridded statistics get one block per `ε`, headed by
/// `# epsilon = …` and separated by a blank line; the others get a single
/// `epsilon statistic std_error` table.
pub fn emit_plot_data(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut groups: Vec<((&str, &str, &str), Vec<usize>)> = Vec::new();
    for (k, c) in report.cells.iter().enumerate() {
        if c.error.is_some() {
            continue;
        }
        let key = (c.metric.as_str(), c.signal_kind.as_str(), c.signal_params.as_str());
        match groups.iter_mut().find(|(g, _)| *g == key) {
            Some((_, v)) => v.push(k),
            None => groups.push((key, vec![k])),
        }
    }
    let mut written = Vec::new();
    for ((metric, kind, params), idx) in groups {
        let stem = sanitize(&format!("{metric}_{kind}_{params}"));
        let path = dir.join(format!("{stem}.dat"));
        let mut text = format!("# {} {metric} for {kind} {params}\n", report.spec.kind);
        let gridded = idx.iter().any(|&k| report.cells[k].grid_value.is_some());
        if gridded {
            let name = grid_name(report.spec.kind, metric);
            let mut current: Option<f64> = None;
            for &k in &idx {
                let c = &report.cells[k];
                if current != Some(c.epsilon) {
                    if current.is_some() {
                        text.push('\n');
                    }
                    text.push_str(&format!("# epsilon = {}\n# {name} {metric} std_error\n", c.epsilon));
                    current = Some(c.epsilon);
                }
                let g = c.grid_value.unwrap_or(f64::NAN);
                text.push_str(&format!("{g} {} {}\n", c.statistic, c.std_error));
            }
        } else {
            text.push_str(&format!("# epsilon {metric} std_error\n"));
            for &k in &idx {
                let c = &report.cells[k];
                text.push_str(&format!("{} {} {}\n", c.epsilon, c.statistic, c.std_error));
            }
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// `report.json`, `cells.csv` and `plots/*.dat` under `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    write_report(report, ReportFormat::Json, &dir.join("report.json"))?;
    write_report(report, ReportFormat::Csv, &dir.join("cells.csv"))?;
    emit_plot_data(report, &dir.join("plots"))?;
    Ok(())
}
