//! Seeded Monte-Carlo studies and their reports.
//!
//! A study is a grid of cells (signal × ε, or class × ε for the scale study).
//! Each cell draws its data from a seed derived from the master seed and the
//! signal's position in the grid, so cells sharing a signal reuse the same
//! noise across ε. Cells run in parallel and are reassembled in grid order,
//! which makes the CSV output byte-identical across runs and thread counts.

mod output;
mod runners;
mod spec;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use output::{emit_plot_data, read_report, write_outputs, write_report, ReportFormat};
pub use spec::{Calibration, ExperimentKind, ExperimentSpec, SignalSpec};

use crate::error::Result;

/// One row of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    /// Statistic name, e.g. `phi1` or `coverage`.
    pub metric: String,
    pub signal_kind: String,
    pub signal_params: String,
    pub epsilon: f64,
    /// `M`, `δ` or `c`, when the statistic is tabulated over a grid.
    pub grid_value: Option<f64>,
    #[serde(with = "nan_as_null")]
    pub statistic: f64,
    #[serde(with = "nan_as_null")]
    pub std_error: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub name: String,
    #[serde(with = "nan_as_null")]
    pub slope: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub checks: Vec<Check>,
    pub fits: Vec<Fit>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub(crate) fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub(crate) fn fit(&mut self, name: impl Into<String>, points: &[(f64, f64)]) -> f64 {
        let slope = if points.len() >= 2 { crate::stats::ols_slope(points) } else { f64::NAN };
        self.fits.push(Fit { name: name.into(), slope, points: points.len() });
        slope
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub threads: usize,
    pub elapsed_ms: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// The spec as run, with defaults filled in and calibrated constants frozen.
    pub spec: ExperimentSpec,
    pub cells: Vec<CellRecord>,
    pub summary: Summary,
    pub runtime: RuntimeInfo,
}

impl ExperimentReport {
    pub fn cells_for(&self, metric: &str) -> impl Iterator<Item = &CellRecord> {
        let metric = metric.to_string();
        self.cells.iter().filter(move |c| c.metric == metric)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let start = Instant::now();
    let spec = spec.resolved()?;
    let (spec, cells, summary) = runners::run(spec)?;
    Ok(ExperimentReport {
        spec,
        cells,
        summary,
        runtime: RuntimeInfo {
            threads: rayon::current_num_threads(),
            elapsed_ms: start.elapsed().as_millis() as u64,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Runs `f` over `0..n` in parallel and returns the results in index order.
pub(crate) fn ordered<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// JSON has no NaN; failed statistics round-trip through `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}
