//! Oracle and surrogate-oracle rates, the excessive-bias and polished-tail
//! classes, and projection-style minimax rates over ellipsoids and
//! hyperrectangles.
//!
//! All argmin scans run over `I ∈ {1, …, N}` with `N = model.n_trunc` and
//! return the smallest minimiser.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rng;
use crate::sigma::SigmaConstants;
use crate::signal::Signal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub i_star: usize,
    pub rate_sq: f64,
    pub variance_term: f64,
    pub bias_term: f64,
}

impl OracleResult {
    pub fn rate(&self) -> f64 {
        self.rate_sq.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOracleResult {
    pub i_bar: usize,
    pub surr_rate_sq: f64,
    /// `Σ(Ī_o) = Σ_{i≤Ī_o} σ_i²`.
    pub sigma_sum: f64,
}

/// `r²(I, θ) = Σ_{i≤I} σ_i² + Σ_{i>I} θ_i²`.
pub fn local_rate_sq(signal: &Signal, model: &ModelConfig, upto: usize) -> f64 {
    model.variance_sum(upto) + signal.tail_energy(upto)
}

/// `R²(I, θ) = I·ε² + Σ_{i>I} θ_i²/κ_i²`.
pub fn surrogate_rate_sq(signal: &Signal, model: &ModelConfig, upto: usize) -> f64 {
    let tail: f64 = (upto + 1..=signal.len())
        .map(|i| signal.coeff(i).powi(2) / model.kappa(i).powi(2))
        .sum();
    upto as f64 * model.epsilon * model.epsilon + tail
}

fn argmin_first(values: impl Iterator<Item = (usize, f64)>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Oracle index `I_o` and rate `r²(θ)`.
pub fn oracle(signal: &Signal, model: &ModelConfig) -> OracleResult {
    let var = model.variance_prefix();
    let (i_star, rate_sq) =
        argmin_first((1..=model.n_trunc).map(|k| (k, var[k] + signal.tail_energy(k))));
    OracleResult {
        i_star,
        rate_sq,
        variance_term: var[i_star],
        bias_term: signal.tail_energy(i_star),
    }
}

/// Surrogate oracle `Ī_o`, the oracle of the noise-rescaled direct problem.
pub fn surrogate_oracle(signal: &Signal, model: &ModelConfig) -> SurrogateOracleResult {
    let n = model.n_trunc;
    // weighted[k] = Σ_{i>k} θ_i²/κ_i²
    let mut weighted = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let i = k + 1;
        weighted[k] = weighted[k + 1] + signal.coeff(i).powi(2) / model.kappa(i).powi(2);
    }
    let eps_sq = model.epsilon * model.epsilon;
    let (i_bar, surr_rate_sq) =
        argmin_first((1..=n).map(|k| (k, k as f64 * eps_sq + weighted[k])));
    SurrogateOracleResult { i_bar, surr_rate_sq, sigma_sum: model.variance_sum(i_bar) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EbrCheck {
    pub member: bool,
    /// `Σ_{i>Ī_o} θ_i² / Σ(Ī_o)`.
    pub ratio: f64,
    pub tau: f64,
    pub i_bar: usize,
    pub bias: f64,
    pub variance: f64,
}

/// Excessive-bias restriction at the model's `ε`.
pub fn ebr_check(signal: &Signal, model: &ModelConfig, tau: f64) -> EbrCheck {
    let surr = surrogate_oracle(signal, model);
    let bias = signal.tail_energy(surr.i_bar);
    let variance = surr.sigma_sum;
    let ratio = bias / variance;
    EbrCheck { member: ratio <= tau, ratio, tau, i_bar: surr.i_bar, bias, variance }
}

/// Polished-tail class parameters `(L_0, N_0, ρ_0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PtParams {
    pub l0: f64,
    pub n0: usize,
    pub rho0: f64,
}

impl PtParams {
    pub fn new(l0: f64, n0: usize, rho0: f64) -> Result<Self> {
        if !(l0 >= 1.0) {
            return Err(Error::invalid("l0", format!("must be >= 1, got {l0}")));
        }
        if n0 == 0 {
            return Err(Error::invalid("n0", "must be >= 1"));
        }
        if !(rho0 >= 2.0 && rho0.is_finite()) {
            return Err(Error::invalid("rho0", format!("must be >= 2, got {rho0}")));
        }
        Ok(Self { l0, n0, rho0 })
    }
}

/// `Σ_{i≥N} θ_i² ≤ L_0·Σ_{i=N}^{⌊ρ_0 N⌋} θ_i²` for every `N_0 ≤ N ≤ len`.
pub fn pt_check(signal: &Signal, pt: &PtParams) -> bool {
    let len = signal.len();
    let tails = signal.tail_energies();
    (pt.n0..=len).all(|n| {
        let tail = tails[n - 1];
        let upper = ((pt.rho0 * n as f64).floor() as usize).min(len);
        let window = tail - tails[upper];
        tail <= pt.l0 * window
    })
}

/// `τ = L_0·K_1·K_2(ρ_0 N_0)` such that the polished-tail class sits inside
/// the excessive-bias class.
pub fn pt_to_ebr_tau(pt: &PtParams, p: f64) -> f64 {
    let rho = pt.rho0 * pt.n0 as f64;
    pt.l0 * SigmaConstants::k1(p) * SigmaConstants::k2(p, rho)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassShape {
    Ellipsoid,
    Hyperrectangle,
}

impl ClassShape {
    /// Constant `C` in `sup_θ r²(θ) ≤ C·R²` over the class.
    pub fn covering_constant(&self) -> f64 {
        match self {
            ClassShape::Ellipsoid => (2.0 * std::f64::consts::PI).powi(2),
            ClassShape::Hyperrectangle => 2.5,
        }
    }
}

/// `E(a) = {Σ(θ_i/a_i)² ≤ 1}` or `H(a) = {|θ_i| ≤ a_i}` with `a_i = 0` past
/// the stored length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessClass {
    pub shape: ClassShape,
    pub a: Vec<f64>,
}

/// JSON-facing class definitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassDef {
    SobolevEllipsoid { beta: f64, q: f64 },
    SobolevHyperrectangle { beta: f64, q: f64 },
    AnalyticEllipsoid { c: f64, d: f64, q: f64 },
    ParametricHyperrectangle { n0: usize, q: f64 },
    Ellipsoid { a: Vec<f64> },
    Hyperrectangle { a: Vec<f64> },
}

impl ClassDef {
    pub fn name(&self) -> &'static str {
        match self {
            ClassDef::SobolevEllipsoid { .. } => "sobolev-ellipsoid",
            ClassDef::SobolevHyperrectangle { .. } => "sobolev-hyperrectangle",
            ClassDef::AnalyticEllipsoid { .. } => "analytic-ellipsoid",
            ClassDef::ParametricHyperrectangle { .. } => "parametric-hyperrectangle",
            ClassDef::Ellipsoid { .. } => "ellipsoid",
            ClassDef::Hyperrectangle { .. } => "hyperrectangle",
        }
    }

    /// Semi-axes `a_1..a_n` of the class.
    pub fn materialize(&self, n: usize) -> SmoothnessClass {
        let idx = |i: usize| i as f64;
        match self {
            ClassDef::SobolevEllipsoid { beta, q } => SmoothnessClass {
                shape: ClassShape::Ellipsoid,
                a: (1..=n).map(|i| (q * idx(i).powf(-2.0 * beta)).sqrt()).collect(),
            },
            ClassDef::SobolevHyperrectangle { beta, q } => SmoothnessClass {
                shape: ClassShape::Hyperrectangle,
                a: (1..=n).map(|i| q.sqrt() * idx(i).powf(-(beta + 0.5))).collect(),
            },
            ClassDef::AnalyticEllipsoid { c, d, q } => SmoothnessClass {
                shape: ClassShape::Ellipsoid,
                a: (1..=n).map(|i| (q * (-c * idx(i).powf(*d)).exp()).sqrt()).collect(),
            },
            ClassDef::ParametricHyperrectangle { n0, q } => SmoothnessClass {
                shape: ClassShape::Hyperrectangle,
                a: (1..=n).map(|i| if i <= *n0 { q.sqrt() } else { 0.0 }).collect(),
            },
            ClassDef::Ellipsoid { a } => {
                SmoothnessClass { shape: ClassShape::Ellipsoid, a: a.iter().take(n).copied().collect() }
            }
            ClassDef::Hyperrectangle { a } => SmoothnessClass {
                shape: ClassShape::Hyperrectangle,
                a: a.iter().take(n).copied().collect(),
            },
        }
    }
}

impl SmoothnessClass {
    fn semi_axis(&self, i: usize) -> f64 {
        self.a.get(i - 1).copied().unwrap_or(0.0)
    }

    /// Requires `a` nonnegative, nonincreasing and `a_1 ≥ ε`.
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.a.is_empty() {
            return Err(Error::invalid("a", "must be nonempty"));
        }
        if self.a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("a", "entries must be finite and nonnegative"));
        }
        if self.a.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("a", "must be nonincreasing"));
        }
        if self.a[0] < model.epsilon {
            return Err(Error::invalid(
                "a",
                format!("a_1 = {} is below epsilon = {}", self.a[0], model.epsilon),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, signal: &Signal) -> bool {
        match self.shape {
            ClassShape::Hyperrectangle => {
                (1..=signal.len()).all(|i| signal.coeff(i).abs() <= self.semi_axis(i))
            }
            ClassShape::Ellipsoid => {
                let mut acc = 0.0;
                for i in 1..=signal.len() {
                    let (t, a) = (signal.coeff(i), self.semi_axis(i));
                    if t == 0.0 {
                        continue;
                    }
                    if a == 0.0 {
                        return false;
                    }
                    acc += (t / a).powi(2);
                }
                acc <= 1.0 + 1e-12
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxRate {
    pub rate_sq: f64,
    pub i_star: usize,
}

/// Projection-style minimax rate: `inf_I {Σ(I) + a²_{I+1}}` for ellipsoids and
/// `inf_I {Σ(I) + Σ_{i>I} a_i²}` for hyperrectangles.
pub fn minimax_rate(class: &SmoothnessClass, model: &ModelConfig) -> Result<MinimaxRate> {
    class.validate(model)?;
    let n = model.n_trunc;
    let var = model.variance_prefix();
    let (i_star, rate_sq) = match class.shape {
        ClassShape::Ellipsoid => {
            argmin_first((1..=n).map(|k| (k, var[k] + class.semi_axis(k + 1).powi(2))))
        }
        ClassShape::Hyperrectangle => {
            let m = n.max(class.a.len());
            let mut tail = vec![0.0; m + 1];
            for k in (0..m).rev() {
                tail[k] = tail[k + 1] + class.semi_axis(k + 1).powi(2);
            }
            argmin_first((1..=n).map(|k| (k, var[k] + tail[k])))
        }
    };
    Ok(MinimaxRate { rate_sq, i_star })
}

/// Risk of the linear estimator `λ_i X_i`: `Σ σ_i²λ_i² + (1−λ_i)²θ_i²`.
pub fn linear_risk_sq(lambda: &[f64], signal: &Signal, model: &ModelConfig) -> f64 {
    (1..=model.n_trunc)
        .map(|i| {
            let l = lambda.get(i - 1).copied().unwrap_or(0.0);
            model.sigma_sq(i) * l * l + (1.0 - l).powi(2) * signal.coeff(i).powi(2)
        })
        .sum()
}

/// Checks `R²_lin(λ, θ) ≥ r²(N_λ, θ)/4` with `N_λ = max{i : λ_i ≥ 1/2}`
/// (`r²(0, θ) = ‖θ‖²`). Returns the ratio `R²_lin / (r²(N_λ)/4)`.
pub fn linear_cover_ratio(lambda: &[f64], signal: &Signal, model: &ModelConfig) -> f64 {
    debug_assert!(lambda.windows(2).all(|w| w[0] >= w[1]));
    let n_lambda = lambda.iter().take(model.n_trunc).rposition(|&l| l >= 0.5).map_or(0, |k| k + 1);
    let rhs = local_rate_sq(signal, model, n_lambda) / 4.0;
    linear_risk_sq(lambda, signal, model) / rhs
}

fn random_monotone_weights<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    // Mix in exact ones and zeros so boundary cases are exercised.
    let ones = rng.random_range(0..=n / 4);
    let zeros = rng.random_range(0..=n / 4);
    w.iter_mut().take(ones).for_each(|v| *v = 1.0);
    w.iter_mut().rev().take(zeros).for_each(|v| *v = 0.0);
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCoverReport {
    pub trials: usize,
    /// Smallest observed `R²_lin / (r²(N_λ)/4)`; the inequality needs `≥ 1`.
    pub worst_ratio: f64,
    pub passed: bool,
}

const LINEAR_COVER_TOL: f64 = 1e-12;

/// Random monotone weights against random Gaussian signals of length `n_trunc`.
pub fn linear_cover_check(model: &ModelConfig, trials: usize, seed: u64) -> LinearCoverReport {
    let mut rng = rng::stream(seed);
    let n = model.n_trunc;
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let scale = model.epsilon * 10f64.powf(rng.random_range(-1.0..2.0));
        let coeffs: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        let signal = Signal::custom(coeffs);
        let lambda = random_monotone_weights(n, &mut rng);
        worst = worst.min(linear_cover_ratio(&lambda, &signal, model));
    }
    LinearCoverReport { trials, worst_ratio: worst, passed: worst >= 1.0 - LINEAR_COVER_TOL }
}

/// Draws a member of the class, biased toward the boundary.
pub fn sample_in_class<R: Rng>(class: &SmoothnessClass, n: usize, rng: &mut R) -> Signal {
    let support = class.a.iter().take(n).rposition(|&a| a > 0.0).map_or(0, |k| k + 1);
    if support == 0 {
        return Signal::zero(n);
    }
    let sign = |rng: &mut R| if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut coeffs = vec![0.0; n];
    match class.shape {
        ClassShape::Ellipsoid => {
            if rng.random::<bool>() {
                // single spike on the boundary, log-uniform position
                let j = ((support as f64).powf(rng.random::<f64>()).floor() as usize).clamp(1, support);
                coeffs[j - 1] = sign(rng) * class.a[j - 1];
            } else {
                let len = ((support as f64).powf(rng.random::<f64>()).ceil() as usize).clamp(1, support);
                let u: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = u.iter().sum();
                let radius = if rng.random::<f64>() < 0.8 { 1.0 } else { rng.random::<f64>() };
                for (i, ui) in u.iter().enumerate() {
                    coeffs[i] = sign(rng) * class.a[i] * (radius * ui / total).sqrt();
                }
            }
        }
        ClassShape::Hyperrectangle => {
            let len = if rng.random::<f64>() < 0.7 {
                support
            } else {
                ((support as f64).powf(rng.random::<f64>()).ceil() as usize).clamp(1, support)
            };
            for i in 0..len {
                let mag = if rng.random::<f64>() < 0.8 { 1.0 } else { rng.random::<f64>() };
                coeffs[i] = sign(rng) * mag * class.a[i];
            }
        }
    }
    Signal::custom(coeffs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoversReport {
    pub shape: ClassShape,
    pub minimax_rate_sq: f64,
    pub n_samples: usize,
    /// `sup r²(θ)/R²` over the sampled members.
    pub worst_ratio: f64,
    pub bound_constant: f64,
    pub passed: bool,
    pub linear: LinearCoverReport,
}

/// Samples members of the class and checks that the local oracle rate never
/// exceeds the class-level constant times the minimax rate, and that the
/// monotone-linear-estimator risks are covered by the projection family.
pub fn covers_check(
    class: &SmoothnessClass,
    model: &ModelConfig,
    n_samples: usize,
    seed: u64,
) -> Result<CoversReport> {
    let mm = minimax_rate(class, model)?;
    let mut rng = rng::stream(seed);
    let n = model.n_trunc;
    let mut worst = oracle(&Signal::zero(n), model).rate_sq / mm.rate_sq;
    let mut lin_worst = f64::INFINITY;
    for _ in 0..n_samples {
        let sig = sample_in_class(class, n, &mut rng);
        debug_assert!(class.contains(&sig));
        worst = worst.max(oracle(&sig, model).rate_sq / mm.rate_sq);
        let lambda = random_monotone_weights(n, &mut rng);
        lin_worst = lin_worst.min(linear_cover_ratio(&lambda, &sig, model));
    }
    let bound_constant = class.shape.covering_constant();
    let linear = LinearCoverReport {
        trials: n_samples,
        worst_ratio: lin_worst,
        passed: n_samples == 0 || lin_worst >= 1.0 - LINEAR_COVER_TOL,
    };
    Ok(CoversReport {
        shape: class.shape,
        minimax_rate_sq: mm.rate_sq,
        n_samples,
        worst_ratio: worst,
        bound_constant,
        passed: worst <= bound_constant && linear.passed,
        linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_signal, SignalKind, SignalParams};

    fn brute_argmin(f: impl Fn(usize) -> f64, n: usize) -> (usize, f64) {
        let mut best = (1, f(1));
        for k in 2..=n {
            let v = f(k);
            if v < best.1 {
                best = (k, v);
            }
        }
        best
    }

    #[test]
    fn zero_signal_oracle() {
        let m = ModelConfig::new(0.3, 1.0, 50).unwrap();
        let o = oracle(&Signal::zero(50), &m);
        assert_eq!(o.i_star, 1);
        assert!((o.rate_sq - 0.09).abs() < 1e-15);
        assert_eq!(surrogate_oracle(&Signal::zero(50), &m).i_bar, 1);
    }

    #[test]
    fn spike_at_one() {
        let m = ModelConfig::new(0.1, 0.0, 20).unwrap();
        let mut c = vec![0.0; 20];
        c[0] = 1.0;
        let o = oracle(&Signal::custom(c), &m);
        assert_eq!(o.i_star, 1);
        assert!((o.rate_sq - 0.01).abs() < 1e-15);
        assert_eq!(o.bias_term, 0.0);
    }

    #[test]
    fn harmonic_signal_oracle() {
        // Frozen from an exhaustive scan with direct tail sums of i^{-2}.
        let n = 4096;
        let m = ModelConfig::new(0.4, 0.0, n).unwrap();
        let s = Signal::custom((1..=n).map(|i| 1.0 / i as f64).collect());
        let direct_tail = |k: usize| (k + 1..=n).map(|i| (i as f64).powi(-2)).sum::<f64>();
        let (k, v) = brute_argmin(|k| k as f64 * 0.16 + direct_tail(k), 6);
        assert_eq!(k, 2);
        let o = oracle(&s, &m);
        assert_eq!(o.i_star, 2);
        assert!((o.rate_sq - v).abs() < 1e-12);
        // 0.7149 is the untruncated value; truncation at 4096 removes ~2.4e-4.
        assert!((o.rate_sq - 0.7149).abs() < 5e-4);
        assert!((o.rate_sq - (o.variance_term + o.bias_term)).abs() < 1e-15);
    }

    #[test]
    fn surrogate_is_local_minimum_for_ill_posed_harmonic() {
        let n = 4096;
        let m = ModelConfig::new(0.4, 1.0, n).unwrap();
        let s = Signal::custom((1..=n).map(|i| 1.0 / i as f64).collect());
        let sur = surrogate_oracle(&s, &m);
        let r = |k: usize| surrogate_rate_sq(&s, &m, k);
        assert!(r(sur.i_bar) <= r(sur.i_bar + 1));
        if sur.i_bar > 1 {
            assert!(r(sur.i_bar) <= r(sur.i_bar - 1));
        }
        let (k, _) = brute_argmin(r, 64);
        assert_eq!(k, sur.i_bar);
    }

    #[test]
    fn direct_case_surrogate_equals_oracle() {
        let m = ModelConfig::new(0.05, 0.0, 300).unwrap();
        for beta in [0.5, 1.0, 2.0] {
            let s = generate_signal(SignalKind::SobolevBoundary, &SignalParams::sobolev(beta, 1.0), 300, None)
                .unwrap();
            assert_eq!(surrogate_oracle(&s, &m).i_bar, oracle(&s, &m).i_star);
        }
    }

    #[test]
    fn ebr_ratio_matches_independent_tail_sum() {
        let n = 1024;
        let m = ModelConfig::new(0.1, 0.0, n).unwrap();
        let s = generate_signal(SignalKind::SobolevBoundary, &SignalParams::sobolev(1.0, 1.0), n, None).unwrap();
        let e = ebr_check(&s, &m, 2.0);
        let bias: f64 = (e.i_bar + 1..=n).map(|i| (i as f64).powi(-3)).sum();
        let var = e.i_bar as f64 * 0.01;
        assert!((e.ratio - bias / var).abs() < 1e-12);
        assert_eq!(e.member, bias / var <= 2.0);
        let z = ebr_check(&Signal::zero(n), &m, 0.5);
        assert!(z.member);
        assert_eq!(z.ratio, 0.0);
    }

    #[test]
    fn pt_examples() {
        let pt = PtParams::new(2.0, 1, 2.0).unwrap();
        let geo = Signal::custom((1..=60).map(|i| 0.5f64.powi(i)).collect());
        assert!(pt_check(&geo, &pt));
        let mut spike = vec![0.0; 20];
        spike[9] = 1.0;
        assert!(!pt_check(&Signal::custom(spike), &PtParams::new(50.0, 1, 2.0).unwrap()));
        assert!(pt_check(&Signal::zero(30), &pt));
        assert!(PtParams::new(0.5, 1, 2.0).is_err());
        assert!(PtParams::new(1.0, 0, 2.0).is_err());
        assert!(PtParams::new(1.0, 1, 1.5).is_err());
    }

    #[test]
    fn pt_to_ebr_tau_examples() {
        assert_eq!(pt_to_ebr_tau(&PtParams::new(2.0, 1, 2.0).unwrap(), 0.0), 6.0);
        assert_eq!(pt_to_ebr_tau(&PtParams::new(1.0, 1, 2.0).unwrap(), 0.0), 3.0);
    }

    #[test]
    fn minimax_examples() {
        let m = ModelConfig::new(0.1, 0.0, 1000).unwrap();
        let ell = SmoothnessClass { shape: ClassShape::Ellipsoid, a: (1..=1000).map(|i| 1.0 / i as f64).collect() };
        let r = minimax_rate(&ell, &m).unwrap();
        assert_eq!(r.i_star, 5);
        assert!((r.rate_sq - (0.05 + 1.0 / 36.0)).abs() < 1e-12);

        let mut a = vec![0.0; 1000];
        a[0] = 1.0;
        let hyp = SmoothnessClass { shape: ClassShape::Hyperrectangle, a };
        let r = minimax_rate(&hyp, &m).unwrap();
        assert_eq!(r.i_star, 1);
        assert!((r.rate_sq - 0.01).abs() < 1e-15);
    }

    #[test]
    fn minimax_rejects_bad_sequences() {
        let m = ModelConfig::new(0.1, 0.0, 10).unwrap();
        let bad = SmoothnessClass { shape: ClassShape::Ellipsoid, a: vec![1.0, 2.0] };
        assert!(minimax_rate(&bad, &m).is_err());
        let small = SmoothnessClass { shape: ClassShape::Ellipsoid, a: vec![0.05, 0.01] };
        assert!(minimax_rate(&small, &m).is_err());
        let neg = SmoothnessClass { shape: ClassShape::Hyperrectangle, a: vec![1.0, -0.1] };
        assert!(minimax_rate(&neg, &m).is_err());
    }

    #[test]
    fn sobolev_ellipsoid_slope() {
        // log R² vs log ε² slope ≈ 2β/(2β+2p+1)
        for (beta, p) in [(1.0, 0.0), (2.0, 0.0), (1.0, 1.0)] {
            let eps = [1e-2, 3e-3, 1e-3, 3e-4];
            let pts: Vec<(f64, f64)> = eps
                .iter()
                .map(|&e| {
                    let m = ModelConfig::new(e, p, 20_000).unwrap();
                    let class = ClassDef::SobolevEllipsoid { beta, q: 1.0 }.materialize(20_000);
                    ((e * e).ln(), minimax_rate(&class, &m).unwrap().rate_sq.ln())
                })
                .collect();
            let slope = crate::stats::ols_slope(&pts);
            let expected = 2.0 * beta / (2.0 * beta + 2.0 * p + 1.0);
            assert!((slope - expected).abs() < 0.05, "beta={beta} p={p} slope={slope} expected={expected}");
        }
    }

    #[test]
    fn covers_check_zero_and_sobolev() {
        let m = ModelConfig::new(0.05, 0.0, 256).unwrap();
        for def in [
            ClassDef::SobolevEllipsoid { beta: 1.0, q: 1.0 },
            ClassDef::SobolevHyperrectangle { beta: 1.0, q: 1.0 },
            ClassDef::AnalyticEllipsoid { c: 1.0, d: 1.0, q: 1.0 },
            ClassDef::ParametricHyperrectangle { n0: 5, q: 1.0 },
        ] {
            let class = def.materialize(256);
            let rep = covers_check(&class, &m, 200, 11).unwrap();
            assert!(rep.passed, "{def:?}: {rep:?}");
            assert!(rep.worst_ratio <= rep.bound_constant);
        }
    }

    #[test]
    fn linear_cover_holds_on_random_trials() {
        let m = ModelConfig::new(0.3, 0.5, 50).unwrap();
        let rep = linear_cover_check(&m, 1000, 5);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn class_def_json() {
        let def: ClassDef = serde_json::from_str(r#"{"kind":"sobolev-ellipsoid","beta":1.0,"q":2.0}"#).unwrap();
        assert_eq!(def, ClassDef::SobolevEllipsoid { beta: 1.0, q: 2.0 });
        assert!(serde_json::from_str::<ClassDef>(r#"{"kind":"besov"}"#).is_err());
    }

    #[test]
    fn sobolev_boundary_sits_on_hyperrectangle_boundary() {
        let n = 200;
        let s = generate_signal(SignalKind::SobolevBoundary, &SignalParams::sobolev(1.3, 2.0), n, None).unwrap();
        let class = ClassDef::SobolevHyperrectangle { beta: 1.3, q: 2.0 }.materialize(n);
        assert!(class.contains(&s));
        for i in 1..=n {
            assert_eq!(s.coeff(i).abs(), class.a[i - 1]);
        }
    }
}
