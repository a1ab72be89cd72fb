//! Monte-Carlo estimates of the condition functions, the miss and size
//! bounds built from them, the oversmoothing probability and the ball-volume
//! bound.
//!
//! For a DD-center `θ̂` and the oracle rate `r = r(θ0)`:
//!
//! ```text
//! φ1(M) = E P(‖θ − θ̂‖ ≥ M r | X)
//! ψ(δ)  = E P(‖θ − θ̂‖ ≤ δ s | X)     s = r or Σ^{1/2}(Ī_o)
//! φ2(M) = P(‖θ0 − θ̂‖ ≥ M r)
//! ```
//!
//! With `θ̂ = θ0` the first line is the local contraction function `φ`.
//! Grids share all random numbers, so monotonicity in `M` and `δ` is exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::credible::{self, DEFAULT_P_LEVEL, DEFAULT_VARSIGMA, MIN_MC_SAMPLES};
use crate::ddm::{DdmParams, DdmPosterior, MixtureWeights};
use crate::error::{Error, Result};
use crate::model::{simulate, ModelConfig, ObservedData};
use crate::oracle::{oracle, surrogate_oracle};
use crate::rng::{self, tag};
use crate::signal::Signal;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterRule {
    DefaultCenter,
    PosteriorMean,
    /// `θ̂ = θ0`; turns φ1 into the contraction function around the truth.
    TrueParameter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiScaling {
    OracleRate,
    SigmaSumSurrogate,
}

/// Which measure is built from each simulated dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "component", rename_all = "kebab-case")]
pub enum Measure {
    Mixture,
    EbIndex,
    FullBayesShrunk,
    /// A single fixed component `I`.
    FixedComponent(usize),
}

impl Measure {
    pub fn build(&self, data: ObservedData, params: DdmParams) -> Result<DdmPosterior> {
        let n = data.len();
        match *self {
            Measure::Mixture => DdmPosterior::mixture(data, params, n),
            Measure::EbIndex => DdmPosterior::at_eb_index(data, params, n),
            Measure::FullBayesShrunk => DdmPosterior::shrunk_full_bayes(data, params, n),
            Measure::FixedComponent(i) => {
                if i == 0 || i > n {
                    return Err(Error::invalid("component", format!("must lie in 1..={n}, got {i}")));
                }
                DdmPosterior::mixture(data, params, n)?.with_weights(MixtureWeights::degenerate(n, i))
            }
        }
    }
}

/// Model, truth and measure shared by all estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSetup {
    pub model: ModelConfig,
    pub signal: Signal,
    pub params: DdmParams,
    pub measure: Measure,
    pub center: CenterRule,
}

impl DiagnosticSetup {
    pub fn new(model: ModelConfig, signal: Signal, params: DdmParams, center: CenterRule) -> Self {
        Self { model, signal, params, measure: Measure::Mixture, center }
    }

    pub fn with_measure(mut self, measure: Measure) -> Self {
        self.measure = measure;
        self
    }

    fn truth(&self) -> Vec<f64> {
        self.signal.padded(self.model.n_trunc)
    }
}

/// Outer replications, inner posterior draws and the master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McBudget {
    pub reps: usize,
    pub inner_mc: usize,
    pub seed: u64,
}

impl McBudget {
    pub fn new(reps: usize, inner_mc: usize, seed: u64) -> Result<Self> {
        if reps == 0 {
            return Err(Error::invalid("reps", "must be at least 1"));
        }
        if inner_mc == 0 {
            return Err(Error::invalid("inner_mc", "must be at least 1"));
        }
        Ok(Self { reps, inner_mc, seed })
    }
}

impl Default for McBudget {
    fn default() -> Self {
        Self { reps: 500, inner_mc: 2000, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    Phi1,
    Psi,
    Phi2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub kind: ConditionKind,
    /// `M` or `δ`.
    pub argument: f64,
    pub value: f64,
    pub std_error: f64,
    pub reps: usize,
    pub inner_mc: usize,
    pub seed: u64,
    pub center: CenterRule,
    /// The argument lies outside the range the small-ball bound covers.
    #[serde(default)]
    pub outside_validity: bool,
}

/// One simulated dataset: its posterior, the chosen center and the truth.
pub(crate) struct Replication {
    pub post: DdmPosterior,
    pub center: Vec<f64>,
}

pub(crate) fn replicate(setup: &DiagnosticSetup, seed: u64, rep: usize) -> Result<Replication> {
    let data = simulate(&setup.model, &setup.signal, rng::derive_seed(seed, &[tag::DATA, rep as u64]))?;
    let post = setup.measure.build(data, setup.params)?;
    let center = match setup.center {
        CenterRule::PosteriorMean => post.mean(),
        CenterRule::TrueParameter => setup.truth(),
        CenterRule::DefaultCenter => {
            let s = rng::derive_seed(seed, &[tag::CENTER, rep as u64]);
            // The center search needs a minimum budget of its own.
            credible::default_center_unchecked(&post, DEFAULT_P_LEVEL, DEFAULT_VARSIGMA, MIN_MC_SAMPLES.max(2000), s)?
                .center
        }
    };
    Ok(Replication { post, center })
}

/// Inner distances for every replication, in replication order.
fn inner_distances(setup: &DiagnosticSetup, budget: &McBudget) -> Result<Vec<Vec<f64>>> {
    (0..budget.reps)
        .into_par_iter()
        .map(|rep| {
            let r = replicate(setup, budget.seed, rep)?;
            let s = rng::derive_seed(budget.seed, &[tag::INNER, rep as u64]);
            Ok(credible::shared_distances(&r.post, &[&r.center], budget.inner_mc, s).pop().unwrap_or_default())
        })
        .collect()
}

fn average_fractions(per_rep: &[Vec<f64>], pred: impl Fn(f64) -> bool) -> (f64, f64) {
    let fracs: Vec<f64> = per_rep
        .iter()
        .map(|d| d.iter().filter(|v| pred(**v)).count() as f64 / d.len() as f64)
        .collect();
    stats::mean_and_se(&fracs)
}

fn check_positive(name: &'static str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(name, "grid must be nonempty"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

/// `φ1(M)` for every `M` in the grid, on common random numbers.
pub fn estimate_phi1_grid(setup: &DiagnosticSetup, ms: &[f64], budget: &McBudget) -> Result<Vec<ConditionEstimate>> {
    check_positive("m", ms)?;
    let rate = oracle(&setup.signal, &setup.model).rate();
    let dists = inner_distances(setup, budget)?;
    Ok(ms
        .iter()
        .map(|&m| {
            let (value, std_error) = average_fractions(&dists, |d| d >= m * rate);
            ConditionEstimate {
                kind: ConditionKind::Phi1,
                argument: m,
                value,
                std_error,
                reps: budget.reps,
                inner_mc: budget.inner_mc,
                seed: budget.seed,
                center: setup.center,
                outside_validity: false,
            }
        })
        .collect())
}

pub fn estimate_phi1(setup: &DiagnosticSetup, m: f64, budget: &McBudget) -> Result<ConditionEstimate> {
    Ok(estimate_phi1_grid(setup, &[m], budget)?.remove(0))
}

/// The scale `s` in `ψ(δ)`.
pub fn psi_scale(setup: &DiagnosticSetup, scaling: PsiScaling) -> f64 {
    match scaling {
        PsiScaling::OracleRate => oracle(&setup.signal, &setup.model).rate(),
        PsiScaling::SigmaSumSurrogate => surrogate_oracle(&setup.signal, &setup.model).sigma_sum.sqrt(),
    }
}

/// `ψ(δ)` for every `δ ≥ 0` in the grid, on common random numbers.
pub fn estimate_psi_grid(
    setup: &DiagnosticSetup,
    deltas: &[f64],
    scaling: PsiScaling,
    budget: &McBudget,
) -> Result<Vec<ConditionEstimate>> {
    if deltas.is_empty() {
        return Err(Error::invalid("delta", "grid must be nonempty"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(Error::invalid("delta", format!("must be nonnegative and finite, got {d}")));
    }
    let delta_sb = setup.params.delta_sb(setup.model.p);
    let s = psi_scale(setup, scaling);
    let dists = inner_distances(setup, budget)?;
    Ok(deltas
        .iter()
        .map(|&delta| {
            let outside = scaling == PsiScaling::SigmaSumSurrogate && delta_sb.is_none_or(|sb| delta > sb);
            if outside {
                log::warn!("delta {delta} exceeds the small-ball range {delta_sb:?}; estimate is still reported");
            }
            let (value, std_error) = average_fractions(&dists, |d| d <= delta * s);
            ConditionEstimate {
                kind: ConditionKind::Psi,
                argument: delta,
                value,
                std_error,
                reps: budget.reps,
                inner_mc: budget.inner_mc,
                seed: budget.seed,
                center: setup.center,
                outside_validity: outside,
            }
        })
        .collect())
}

pub fn estimate_psi(
    setup: &DiagnosticSetup,
    delta: f64,
    scaling: PsiScaling,
    budget: &McBudget,
) -> Result<ConditionEstimate> {
    Ok(estimate_psi_grid(setup, &[delta], scaling, budget)?.remove(0))
}

/// `φ2(M)` for every `M` in the grid, from the same simulated datasets.
pub fn estimate_phi2_grid(setup: &DiagnosticSetup, ms: &[f64], reps: usize, seed: u64) -> Result<Vec<ConditionEstimate>> {
    check_positive("m", ms)?;
    if reps == 0 {
        return Err(Error::invalid("reps", "must be at least 1"));
    }
    let rate = oracle(&setup.signal, &setup.model).rate();
    let truth = setup.truth();
    let errors: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| replicate(setup, seed, rep).map(|r| credible::euclidean(&r.center, &truth)))
        .collect::<Result<_>>()?;
    Ok(ms
        .iter()
        .map(|&m| {
            let hits = errors.iter().filter(|e| **e >= m * rate).count();
            let (value, std_error) = stats::proportion(hits, reps);
            ConditionEstimate {
                kind: ConditionKind::Phi2,
                argument: m,
                value,
                std_error,
                reps,
                inner_mc: 0,
                seed,
                center: setup.center,
                outside_validity: false,
            }
        })
        .collect())
}

pub fn estimate_phi2(setup: &DiagnosticSetup, m: f64, reps: usize, seed: u64) -> Result<ConditionEstimate> {
    Ok(estimate_phi2_grid(setup, &[m], reps, seed)?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionBounds {
    pub m: f64,
    pub delta: f64,
    pub kappa: f64,
    pub varsigma: f64,
    /// `φ2(Mδ) + ψ(δ)/(1−κ)`: bound on the non-coverage of `B(θ̂, M r̂_κ)`.
    pub miss_bound: f64,
    /// `φ1(M)/κ`: bound on `P(r̂_κ ≥ M r)`.
    pub size_bound: f64,
}

fn check_prob(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Coverage and size bounds from condition values. `phi2_at_m_delta` is `φ2`
/// evaluated at `M·δ`, `phi1` at `M` and `psi` at `δ`.
pub fn proposition_bounds(
    phi1: f64,
    psi: f64,
    phi2_at_m_delta: f64,
    m: f64,
    delta: f64,
    kappa: f64,
    varsigma: f64,
) -> Result<PropositionBounds> {
    check_prob("phi1", phi1)?;
    check_prob("psi", psi)?;
    check_prob("phi2", phi2_at_m_delta)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid("kappa", format!("must lie in (0, 1), got {kappa}")));
    }
    Ok(PropositionBounds {
        m,
        delta,
        kappa,
        varsigma,
        miss_bound: miss_bound(phi2_at_m_delta, psi, kappa),
        size_bound: size_bound(phi1, kappa),
    })
}

pub fn miss_bound(phi2_at_m_delta: f64, psi: f64, kappa: f64) -> f64 {
    phi2_at_m_delta + psi / (1.0 - kappa)
}

pub fn size_bound(phi1: f64, kappa: f64) -> f64 {
    phi1 / kappa
}

/// From a contraction function `φ` around the truth to `(φ1(M), φ2(M))` for
/// the default center found at level `p` with slack `ς`:
/// `φ1(M) = φ(aM/(2+ς))/p + φ((1−a)M)`, `φ2(M) = φ(M/(2+ς))/p`.
pub fn transfer_from_contraction(
    varphi: impl Fn(f64) -> f64,
    m: f64,
    a: f64,
    varsigma: f64,
    p_level: f64,
) -> (f64, f64) {
    let phi1 = varphi(a * m / (2.0 + varsigma)) / p_level + varphi((1.0 - a) * m);
    let phi2 = varphi(m / (2.0 + varsigma)) / p_level;
    (phi1, phi2)
}

/// The default-ball version: `a = 1/2`, `ς = 1/2`, `p = 2/3`.
pub fn default_transfer(varphi: impl Fn(f64) -> f64, m: f64) -> (f64, f64) {
    transfer_from_contraction(varphi, m, 0.5, DEFAULT_VARSIGMA, DEFAULT_P_LEVEL)
}

/// Upper bound `ψ2(δM) + α(δ)/κ` for the coverage requirement on the
/// small-ball condition.
pub fn minimal_condition_bound(psi2_at_delta_m: f64, alpha_delta: f64, kappa: f64) -> f64 {
    psi2_at_delta_m + alpha_delta / kappa
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OversmoothingEstimate {
    /// `E P(I ≤ κ̄ Ī_o | X)`.
    pub estimate: f64,
    pub std_error: f64,
    /// `C_α^{-1} exp(−(a(K)(1−κ̄) − α) Ī_o)`.
    pub bound: f64,
    pub i_bar: usize,
    pub kappa_frac: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Posterior mass put on truncation levels below `κ̄ Ī_o`, averaged over
/// simulated datasets, and its exponential bound.
pub fn oversmoothing_probability(
    model: &ModelConfig,
    signal: &Signal,
    params: &DdmParams,
    kappa_frac: f64,
    reps: usize,
    seed: u64,
) -> Result<OversmoothingEstimate> {
    let a = params.a_k();
    let kappa0 = params
        .kappa0()
        .ok_or_else(|| Error::invalid("alpha", format!("must be below a(K) = {a}, got {}", params.alpha)))?;
    if !(kappa_frac >= 0.0 && kappa_frac < kappa0) {
        return Err(Error::invalid("kappa_frac", format!("must lie in [0, {kappa0}), got {kappa_frac}")));
    }
    if reps == 0 {
        return Err(Error::invalid("reps", "must be at least 1"));
    }
    let i_bar = surrogate_oracle(signal, model).i_bar;
    let upto = (kappa_frac * i_bar as f64).floor() as usize;
    let masses: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            if upto == 0 {
                return Ok(0.0);
            }
            let data = simulate(model, signal, rng::derive_seed(seed, &[tag::DATA, rep as u64]))?;
            let w = crate::ddm::mixture_weights(&data, params, data.len())?;
            Ok(w.lower_mass(upto))
        })
        .collect::<Result<_>>()?;
    let (estimate, std_error) = stats::mean_and_se(&masses);
    let bound = (-(a * (1.0 - kappa_frac) - params.alpha) * i_bar as f64).exp() / params.c_alpha();
    Ok(OversmoothingEstimate { estimate, std_error, bound, i_bar, kappa_frac, reps, seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallVolume {
    pub k: usize,
    pub r: f64,
    pub log_bound: f64,
    pub log_exact: f64,
}

impl BallVolume {
    pub fn bound(&self) -> f64 {
        self.log_bound.exp()
    }

    pub fn exact(&self) -> f64 {
        self.log_exact.exp()
    }

    pub fn holds(&self) -> bool {
        self.log_bound >= self.log_exact
    }
}

/// Volume of the `k`-dimensional ball of radius `r`, exact and bounded by
/// `e π^{-1/2} r^k k^{-(k+1)/2} (2πe)^{k/2}`. Compared in log space, where
/// neither side under- or overflows.
pub fn ball_volume_bound(k: usize, r: f64) -> Result<BallVolume> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("r", format!("must be positive and finite, got {r}")));
    }
    let kf = k as f64;
    let pi = std::f64::consts::PI;
    let log_bound =
        1.0 - 0.5 * pi.ln() + kf * r.ln() - 0.5 * (kf + 1.0) * kf.ln() + 0.5 * kf * (2.0 * pi * std::f64::consts::E).ln();
    let log_exact = kf * r.ln() + 0.5 * kf * pi.ln() - ln_gamma(1.0 + 0.5 * kf);
    Ok(BallVolume { k, r, log_bound, log_exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_signal, SignalKind, SignalParams};

    fn sobolev_setup(eps: f64, center: CenterRule) -> DiagnosticSetup {
        let n = 256;
        let model = ModelConfig::new(eps, 0.0, n).unwrap();
        let signal = generate_signal(SignalKind::SobolevBoundary, &SignalParams::sobolev(1.0, 1.0), n, None).unwrap();
        DiagnosticSetup::new(model, signal, DdmParams::default(), center)
    }

    #[test]
    fn proposition_examples() {
        let b = proposition_bounds(0.2, 0.05, 0.1, 4.0, 0.1, 0.5, 0.5).unwrap();
        assert!((b.miss_bound - 0.2).abs() < 1e-15);
        assert!((b.size_bound - 0.4).abs() < 1e-15);
        assert!(proposition_bounds(1.2, 0.0, 0.0, 1.0, 1.0, 0.5, 0.5).is_err());
        let c = 3.0;
        let m = 7.0;
        let (p1, p2) = default_transfer(|x| c / (x * x), m);
        assert!((p1 - 41.5 * c / (m * m)).abs() < 1e-12);
        assert!((p2 - 9.375 * c / (m * m)).abs() < 1e-12);
        assert_eq!(minimal_condition_bound(0.1, 0.05, 0.5), 0.2);
    }

    #[test]
    fn ball_volume_examples() {
        let v1 = ball_volume_bound(1, 1.0).unwrap();
        assert!((v1.bound() - std::f64::consts::E * (2.0 * std::f64::consts::E).sqrt()).abs() < 1e-12);
        assert!((v1.bound() - 6.338).abs() < 1e-3);
        assert!((v1.exact() - 2.0).abs() < 1e-12);
        let v2 = ball_volume_bound(2, 1.0).unwrap();
        assert!((v2.bound() - 9.261).abs() < 1e-3);
        assert!((v2.exact() - std::f64::consts::PI).abs() < 1e-12);
        let v5 = ball_volume_bound(5, 2.0).unwrap();
        let v5h = ball_volume_bound(5, 1.0).unwrap();
        assert!((v5.log_bound - v5h.log_bound - 5.0 * 2f64.ln()).abs() < 1e-12);
        assert!(ball_volume_bound(0, 1.0).is_err());
        assert!(ball_volume_bound(3, 0.0).is_err());
    }

    #[test]
    fn phi1_vanishes_for_huge_m_and_is_monotone() {
        let setup = sobolev_setup(0.1, CenterRule::PosteriorMean);
        let b = McBudget::new(20, 200, 5).unwrap();
        let est = estimate_phi1_grid(&setup, &[0.5, 1.0, 2.0, 1e6], &b).unwrap();
        assert!(est.windows(2).all(|w| w[0].value >= w[1].value));
        assert_eq!(est[3].value, 0.0);
        assert!(est.iter().all(|e| (0.0..=1.0).contains(&e.value)));
    }

    #[test]
    fn fixed_oracle_component_obeys_markov() {
        let setup = sobolev_setup(0.1, CenterRule::TrueParameter);
        let i_o = oracle(&setup.signal, &setup.model).i_star;
        let setup = setup.with_measure(Measure::FixedComponent(i_o));
        let b = McBudget::new(40, 500, 9).unwrap();
        for e in estimate_phi1_grid(&setup, &[1.5, 2.0, 4.0], &b).unwrap() {
            let m = e.argument;
            assert!(e.value <= 2.0 / (m * m) + 3.0 * e.std_error, "{e:?}");
        }
    }

    #[test]
    fn psi_is_zero_at_zero_and_monotone() {
        let setup = sobolev_setup(0.1, CenterRule::PosteriorMean);
        let b = McBudget::new(10, 300, 2).unwrap();
        let est = estimate_psi_grid(&setup, &[0.0, 0.05, 0.5, 2.0], PsiScaling::OracleRate, &b).unwrap();
        assert_eq!(est[0].value, 0.0);
        assert!(est.windows(2).all(|w| w[0].value <= w[1].value));
        let flagged = estimate_psi(&setup, 0.5, PsiScaling::SigmaSumSurrogate, &b).unwrap();
        assert!(flagged.outside_validity);
    }

    #[test]
    fn phi2_decreasing_and_vanishing() {
        let setup = sobolev_setup(0.1, CenterRule::PosteriorMean);
        let est = estimate_phi2_grid(&setup, &[0.5, 1.0, 2.0, 1e6], 60, 3).unwrap();
        assert!(est.windows(2).all(|w| w[0].value >= w[1].value));
        assert_eq!(est[3].value, 0.0);
        let truth = setup.clone();
        let truth = DiagnosticSetup { center: CenterRule::TrueParameter, ..truth };
        assert_eq!(estimate_phi2(&truth, 1e-9, 5, 1).unwrap().value, 0.0);
    }

    #[test]
    fn oversmoothing_checks_and_zero_case() {
        let model = ModelConfig::new(0.05, 0.0, 256).unwrap();
        let s = generate_signal(SignalKind::SobolevBoundary, &SignalParams::sobolev(1.0, 1.0), 256, None).unwrap();
        let p = DdmParams::default();
        let zero = oversmoothing_probability(&model, &s, &p, 0.0, 5, 1).unwrap();
        assert_eq!(zero.estimate, 0.0);
        let k0 = p.kappa0().unwrap();
        assert!(oversmoothing_probability(&model, &s, &p, k0, 5, 1).is_err());
        assert!(oversmoothing_probability(&model, &s, &DdmParams::new(3.0, 0.04).unwrap(), 0.0, 5, 1).is_err());
        let est = oversmoothing_probability(&model, &s, &p, k0 / 2.0, 30, 1).unwrap();
        assert!(est.estimate <= est.bound + 3.0 * est.std_error);
    }
}
