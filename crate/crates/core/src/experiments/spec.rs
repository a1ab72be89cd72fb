use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ddm::{validate_params, DdmParams};
use crate::diagnostics::CenterRule;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::oracle::ClassDef;
use crate::rng;
use crate::signal::{generate_signal, Signal, SignalKind, SignalParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Contraction,
    OracleInequality,
    SmallBall,
    CoverageSize,
    Overshrinkage,
    ScaleAdaptation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Contraction,
        ExperimentKind::OracleInequality,
        ExperimentKind::SmallBall,
        ExperimentKind::CoverageSize,
        ExperimentKind::Overshrinkage,
        ExperimentKind::ScaleAdaptation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Contraction => "contraction",
            ExperimentKind::OracleInequality => "oracle-inequality",
            ExperimentKind::SmallBall => "small-ball",
            ExperimentKind::CoverageSize => "coverage-size",
            ExperimentKind::Overshrinkage => "overshrinkage",
            ExperimentKind::ScaleAdaptation => "scale-adaptation",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid("kind", format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(default)]
    pub params: SignalParams,
}

impl SignalSpec {
    pub fn new(kind: SignalKind, params: SignalParams) -> Self {
        Self { kind, params }
    }

    /// Builds the signal for one grid cell. Deceptive signals are tuned to the
    /// cell's `ε` and `p` unless the spec pins them.
    pub fn build(&self, model: &ModelConfig, seed: u64) -> Result<Signal> {
        let mut params = self.params.clone();
        if self.kind == SignalKind::Deceptive {
            params.epsilon.get_or_insert(model.epsilon);
            params.p.get_or_insert(model.p);
        }
        let seed = (self.kind == SignalKind::SobolevRandom).then(|| rng::derive_seed(seed, &[rng::tag::SIGNAL]));
        generate_signal(self.kind, &params, model.n_trunc, seed)
    }
}

/// Constants that are calibrated on a pilot run unless given.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    /// Ball inflation `C` for the coverage study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflation: Option<f64>,
    /// Size threshold `c` in `P(r̂ ≥ c·r(θ0))`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_threshold: Option<f64>,
    /// Bound on `E‖θ̃ − θ0‖²/r²(θ0)` in the oracle-inequality study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_bound: Option<f64>,
}

fn default_n_trunc() -> usize {
    1024
}
fn default_reps() -> usize {
    500
}
fn default_inner_mc() -> usize {
    2000
}
fn default_kappa() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    2.0
}
fn default_pilot_reps() -> usize {
    100
}

/// A study: what to run, on which grid and with what budget. Empty grids are
/// filled with per-kind defaults by [`ExperimentSpec::resolved`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub signals: Vec<SignalSpec>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub p: f64,
    #[serde(default = "default_n_trunc")]
    pub n_trunc: usize,
    #[serde(default)]
    pub params: DdmParams,
    #[serde(default)]
    pub m_grid: Vec<f64>,
    #[serde(default)]
    pub delta_grid: Vec<f64>,
    #[serde(default)]
    pub c_grid: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_inner_mc")]
    pub inner_mc: usize,
    #[serde(default)]
    pub seed: u64,
    /// Level of the DD-radius in the coverage study.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// EBR threshold separating regular from deceptive cells.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_rule: Option<CenterRule>,
    #[serde(default)]
    pub calibration: Calibration,
    #[serde(default = "default_pilot_reps")]
    pub pilot_reps: usize,
    /// Classes for the scale-adaptation study.
    #[serde(default)]
    pub classes: Vec<ClassDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    /// A spec with every grid left to the per-kind defaults.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            signals: Vec::new(),
            epsilons: Vec::new(),
            p: 0.0,
            n_trunc: default_n_trunc(),
            params: DdmParams::default(),
            m_grid: Vec::new(),
            delta_grid: Vec::new(),
            c_grid: Vec::new(),
            reps: default_reps(),
            inner_mc: default_inner_mc(),
            seed: 0,
            kappa: default_kappa(),
            tau: default_tau(),
            center_rule: None,
            calibration: Calibration::default(),
            pilot_reps: default_pilot_reps(),
            classes: Vec::new(),
            output: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn model(&self, epsilon: f64) -> Result<ModelConfig> {
        ModelConfig::new(epsilon, self.p, self.n_trunc)
    }

    pub fn center(&self) -> CenterRule {
        self.center_rule.unwrap_or(match self.kind {
            ExperimentKind::Contraction => CenterRule::TrueParameter,
            ExperimentKind::SmallBall => CenterRule::PosteriorMean,
            _ => CenterRule::DefaultCenter,
        })
    }

    /// Fills empty grids with defaults and validates the result.
    pub fn resolved(&self) -> Result<Self> {
        use ExperimentKind::*;
        let mut s = self.clone();
        let sob = |beta: f64| SignalSpec::new(SignalKind::SobolevBoundary, SignalParams::sobolev(beta, 1.0));
        let analytic = SignalSpec::new(SignalKind::Analytic, SignalParams::analytic(1.0, 1.0, 1.0));
        let zero = SignalSpec::new(SignalKind::Zero, SignalParams::default());
        let deceptive = SignalSpec::new(SignalKind::Deceptive, SignalParams::default());
        if s.signals.is_empty() && s.kind != ScaleAdaptation {
            s.signals = match s.kind {
                Contraction => vec![sob(1.0)],
                OracleInequality => vec![zero, sob(0.5), sob(1.0), sob(2.0), analytic],
                SmallBall => vec![sob(1.0), deceptive],
                CoverageSize => vec![zero, sob(1.0), analytic, deceptive],
                Overshrinkage => vec![SignalSpec::new(SignalKind::Parametric, SignalParams::parametric(20, 1.0))],
                ScaleAdaptation => unreachable!(),
            };
        }
        if s.epsilons.is_empty() {
            s.epsilons = match s.kind {
                Contraction | SmallBall => vec![0.05],
                OracleInequality | ScaleAdaptation => vec![0.1, 0.05, 0.02, 0.01],
                CoverageSize => vec![0.1, 0.05],
                Overshrinkage => vec![1e-3],
            };
        }
        if s.m_grid.is_empty() && s.kind == Contraction {
            s.m_grid = vec![2.0, 4.0, 8.0, 16.0];
        }
        if s.delta_grid.is_empty() {
            s.delta_grid = match s.kind {
                SmallBall => vec![0.02, 0.05, 0.1],
                CoverageSize => vec![0.1, 0.25, 0.5],
                _ => Vec::new(),
            };
        }
        if s.c_grid.is_empty() && s.kind == CoverageSize {
            s.c_grid = vec![1.0, 2.0, 4.0];
        }
        if s.classes.is_empty() && s.kind == ScaleAdaptation {
            s.classes = vec![
                ClassDef::SobolevHyperrectangle { beta: 1.0, q: 1.0 },
                ClassDef::SobolevEllipsoid { beta: 1.0, q: 1.0 },
                ClassDef::AnalyticEllipsoid { c: 1.0, d: 1.0, q: 1.0 },
                ClassDef::ParametricHyperrectangle { n0: 20, q: 1.0 },
            ];
        }
        s.center_rule = Some(s.center());
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::invalid("epsilons", "grid must be nonempty"));
        }
        for &e in &self.epsilons {
            self.model(e)?;
        }
        if self.kind == ExperimentKind::ScaleAdaptation {
            if self.classes.is_empty() {
                return Err(Error::invalid("classes", "grid must be nonempty"));
            }
        } else if self.signals.is_empty() {
            return Err(Error::invalid("signals", "grid must be nonempty"));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps", "must be at least 1"));
        }
        if self.inner_mc == 0 {
            return Err(Error::invalid("inner_mc", "must be at least 1"));
        }
        if self.pilot_reps == 0 {
            return Err(Error::invalid("pilot_reps", "must be at least 1"));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid("kappa", format!("must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::invalid("tau", "must be positive"));
        }
        let diag = validate_params(self.params.k, self.params.alpha, self.p)?;
        if !diag.upper_bound_regime {
            log::warn!("K = {} is below {}, outside the contraction regime", diag.k, crate::ddm::K_UPPER_BOUND_MIN);
        }
        for (name, grid) in [("m_grid", &self.m_grid), ("c_grid", &self.c_grid)] {
            if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid(name, "values must be positive and finite"));
            }
        }
        if self.delta_grid.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("delta_grid", "values must be nonnegative and finite"));
        }
        if self.kind == ExperimentKind::Contraction && self.m_grid.is_empty() {
            return Err(Error::invalid("m_grid", "grid must be nonempty"));
        }
        if self.kind == ExperimentKind::SmallBall && self.delta_grid.is_empty() {
            return Err(Error::invalid("delta_grid", "grid must be nonempty"));
        }
        if self.kind == ExperimentKind::CoverageSize && self.inner_mc < crate::credible::MIN_MC_SAMPLES {
            return Err(Error::invalid(
                "inner_mc",
                format!("coverage study needs at least {}", crate::credible::MIN_MC_SAMPLES),
            ));
        }
        Ok(())
    }
}
