//! The empirical-Bayes mixture measure over truncation levels.
//!
//! For fixed `K, α > 0` the measure is a mixture over `I ≥ 1` of
//!
//! ```text
//! P_I(·|X) = ⊗_i N(X_i 1{i≤I}, L σ_i² 1{i≤I}),    L = K/(K+1),
//! ```
//!
//! weighted by the posterior `P(I|X)` obtained from the prior
//! `λ_I = (e^α − 1) e^{−αI}` and the marginal with prior variances `Kε²`
//! on the first `I` coordinates. Consecutive log-weights differ by
//!
//! ```text
//! log w_{I+1} − log w_I = −α + X²_{I+1}/(2σ²_{I+1}) − ½ log(1 + Kε²/σ²_{I+1}),
//! ```
//!
//! so the weights are built in one pass and normalised by log-sum-exp.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservedData;
use crate::rng;
use crate::sigma::SigmaConstants;

/// Hyperparameters `K` (prior variance multiple) and `α` (prior decay).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdmParams {
    pub k: f64,
    pub alpha: f64,
}

impl Default for DdmParams {
    fn default() -> Self {
        Self { k: 2.0, alpha: 0.04 }
    }
}

impl DdmParams {
    pub fn new(k: f64, alpha: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid("k", format!("must be positive, got {k}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
        }
        Ok(Self { k, alpha })
    }

    /// `L = K/(K+1)`.
    pub fn shrink(&self) -> f64 {
        self.k / (self.k + 1.0)
    }

    /// `C_α = e^α − 1`.
    pub fn c_alpha(&self) -> f64 {
        self.alpha.exp_m1()
    }

    /// `log λ_I = log C_α − αI`.
    pub fn log_prior(&self, i: usize) -> f64 {
        self.c_alpha().ln() - self.alpha * i as f64
    }

    /// `a(K) = 1/4 − ½ log((K+1)/2)`.
    pub fn a_k(&self) -> f64 {
        0.25 - 0.5 * ((self.k + 1.0) / 2.0).ln()
    }

    /// `P(K, α) = log(K+1) + 2α`.
    pub fn penalty(&self) -> f64 {
        (self.k + 1.0).ln() + 2.0 * self.alpha
    }

    /// `κ_0 = (a(K) − α)/a(K)` when `α < a(K)`.
    pub fn kappa0(&self) -> Option<f64> {
        let a = self.a_k();
        (self.alpha < a).then(|| (a - self.alpha) / a)
    }

    /// Largest `δ` covered by the small-ball bound:
    /// `1 ∧ √(K(2p+1)/(K+1)) · ((a(K)−α)/(4e·a(K)))^{p+1/2}`.
    pub fn delta_sb(&self, p: f64) -> Option<f64> {
        let a = self.a_k();
        if self.alpha >= a {
            return None;
        }
        let base = (self.k * (2.0 * p + 1.0) / (self.k + 1.0)).sqrt();
        let v = base * ((a - self.alpha) / (4.0 * std::f64::consts::E * a)).powf(p + 0.5);
        Some(v.min(1.0))
    }

    /// The contraction constant `C_or(K, α)` produced by the upper-bound
    /// argument. It is extremely loose and only reported for reference.
    pub fn c_or(&self, p: f64) -> f64 {
        let a_half = 0.5 * ((self.k + 1.0) / 2.0).ln();
        let s = self.alpha + a_half;
        let k1 = SigmaConstants::k1(p);
        let tau = SigmaConstants::tau(p);
        let c2 = 4.0 + 4.0 * s * k1 / 5.0 + (-(1.0 + s)).exp() / (1.0 - (-s).exp());
        let k5 = SigmaConstants::k5(p, tau);
        let tau2 = 10.0 * tau / (9.0 * self.alpha * (tau - 2.0) * SigmaConstants::K4 * k5);
        let gamma = self.alpha / 20.0;
        c2 + 1.0
            + 2.0 * SigmaConstants::k2(p, tau)
            + 2.0 * (1.0 + tau2)
            + 1.0
            + SigmaConstants::k3(p, gamma)
            + 3f64.sqrt() * SigmaConstants::k3(p, gamma / 2.0)
    }
}

/// Advisory report on a `(K, α)` choice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub k: f64,
    pub alpha: f64,
    pub p: f64,
    pub a_k: f64,
    /// `K ≥ 1.87`, needed by the contraction upper bound.
    pub upper_bound_regime: bool,
    /// `α < a(K)`, needed by the small-ball lower bound.
    pub lower_bound_regime: bool,
    pub penalty: f64,
    pub delta_sb: Option<f64>,
    pub kappa0: Option<f64>,
    pub c_or: f64,
}

pub const K_UPPER_BOUND_MIN: f64 = 1.87;

pub fn validate_params(k: f64, alpha: f64, p: f64) -> Result<ParamDiagnostics> {
    let params = DdmParams::new(k, alpha)?;
    Ok(ParamDiagnostics {
        k,
        alpha,
        p,
        a_k: params.a_k(),
        upper_bound_regime: k >= K_UPPER_BOUND_MIN,
        lower_bound_regime: alpha < params.a_k(),
        penalty: params.penalty(),
        delta_sb: params.delta_sb(p),
        kappa0: params.kappa0(),
        c_or: params.c_or(p),
    })
}

/// Normalised posterior probabilities over `I = 1..=i_max`, stored as logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    /// `log_w[I-1] = log P(I = I | X)`.
    pub log_w: Vec<f64>,
}

impl MixtureWeights {
    /// Normalises unnormalised log-weights with a max shift.
    pub fn from_unnormalized(mut log_w: Vec<f64>) -> Self {
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Shift before taking the log-sum so large offsets do not swallow it.
        log_w.iter_mut().for_each(|l| *l -= max);
        let log_sum = log_w.iter().map(|l| l.exp()).sum::<f64>().ln();
        log_w.iter_mut().for_each(|l| *l -= log_sum);
        Self { log_w }
    }

    /// Point mass at component `i` (1-based).
    pub fn degenerate(i_max: usize, at: usize) -> Self {
        let mut log_w = vec![f64::NEG_INFINITY; i_max];
        log_w[at - 1] = 0.0;
        Self { log_w }
    }

    pub fn i_max(&self) -> usize {
        self.log_w.len()
    }

    /// `w_I` for 1-based `I`.
    pub fn weight(&self, i: usize) -> f64 {
        self.log_w.get(i - 1).map_or(0.0, |l| l.exp())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|l| l.exp()).collect()
    }

    /// `Σ_{J≥i} w_J` for `i = 1..=i_max` (zero-indexed output).
    pub fn tail_weights(&self) -> Vec<f64> {
        let w = self.weights();
        let mut out = vec![0.0; w.len()];
        let mut acc = 0.0;
        for k in (0..w.len()).rev() {
            acc += w[k];
            out[k] = acc.min(1.0);
        }
        out
    }

    /// `P(I ≤ upto | X)`.
    pub fn lower_mass(&self, upto: usize) -> f64 {
        self.log_w.iter().take(upto).map(|l| l.exp()).sum::<f64>().min(1.0)
    }

    pub fn total(&self) -> f64 {
        self.log_w.iter().map(|l| l.exp()).sum()
    }
}

fn check_i_max(data: &ObservedData, i_max: usize) -> Result<()> {
    if i_max == 0 || i_max > data.len() {
        return Err(Error::invalid("i_max", format!("must lie in 1..={}, got {i_max}", data.len())));
    }
    Ok(())
}

/// Unnormalised log-weights, relative to the all-zero-mean baseline.
fn recursive_log_weights(
    data: &ObservedData,
    params: &DdmParams,
    i_max: usize,
    increment: impl Fn(f64, f64, f64) -> f64,
) -> Vec<f64> {
    let eps_sq = data.model.epsilon * data.model.epsilon;
    let k_eps_sq = params.k * eps_sq;
    let mut out = Vec::with_capacity(i_max);
    let mut acc = crate::stats::NeumaierSum::new(params.c_alpha().ln());
    for i in 1..=i_max {
        let s2 = data.model.sigma_sq(i);
        acc.add(-params.alpha + increment(data.x[i - 1], s2, k_eps_sq));
        out.push(acc.value());
    }
    out
}

/// Posterior weights of the mixture measure.
pub fn mixture_weights(data: &ObservedData, params: &DdmParams, i_max: usize) -> Result<MixtureWeights> {
    check_i_max(data, i_max)?;
    let lw = recursive_log_weights(data, params, i_max, |x, s2, ks2| {
        x * x / (2.0 * s2) - 0.5 * (ks2 / s2).ln_1p()
    });
    Ok(MixtureWeights::from_unnormalized(lw))
}

/// Posterior over `I` under the zero-mean prior (all `μ_i(I) = 0`).
pub fn full_bayes_weights(data: &ObservedData, params: &DdmParams, i_max: usize) -> Result<MixtureWeights> {
    check_i_max(data, i_max)?;
    let lw = recursive_log_weights(data, params, i_max, |x, s2, ks2| {
        0.5 * x * x * ks2 / (s2 * (s2 + ks2)) - 0.5 * (ks2 / s2).ln_1p()
    });
    Ok(MixtureWeights::from_unnormalized(lw))
}

/// `Î`, the smallest maximiser of the weights.
pub fn eb_index(weights: &MixtureWeights) -> usize {
    let mut best = (1, f64::NEG_INFINITY);
    for (k, &l) in weights.log_w.iter().enumerate() {
        if l > best.1 {
            best = (k + 1, l);
        }
    }
    best.0
}

/// Penalised projection criterion `−‖X(I)‖² + P(K,α)·ε²·I`.
pub fn crit(data: &ObservedData, params: &DdmParams, upto: usize) -> f64 {
    let energy: f64 = data.x.iter().take(upto).map(|x| x * x).sum();
    let eps_sq = data.model.epsilon * data.model.epsilon;
    -energy + params.penalty() * eps_sq * upto as f64
}

/// Smallest minimiser of [`crit`] over `I = 1..=i_max`.
pub fn crit_argmin(data: &ObservedData, params: &DdmParams, i_max: usize) -> usize {
    let eps_sq = data.model.epsilon * data.model.epsilon;
    let pen = params.penalty() * eps_sq;
    let mut energy = 0.0;
    let mut best = (1, f64::INFINITY);
    for i in 1..=i_max.min(data.len()) {
        energy += data.x[i - 1] * data.x[i - 1];
        let c = -energy + pen * i as f64;
        if c < best.1 {
            best = (i, c);
        }
    }
    best.0
}

/// `θ̃_i = X_i · Σ_{I≥i} w_I`.
pub fn posterior_mean(data: &ObservedData, weights: &MixtureWeights) -> Vec<f64> {
    let tail = weights.tail_weights();
    data.x
        .iter()
        .enumerate()
        .map(|(k, x)| tail.get(k).map_or(0.0, |t| x * t))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorVariant {
    /// Mixture over `I` with component means `X(I)`.
    Mixture,
    /// The single component at `Î`.
    EbIndex,
    /// Zero-mean-prior weights with over-shrunk component means `L·X(I)`.
    FullBayesShrunk,
}

/// A data-dependent measure on `θ`, immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdmPosterior {
    pub data: ObservedData,
    pub params: DdmParams,
    pub weights: MixtureWeights,
    pub variant: PosteriorVariant,
}

/// One draw: the component and its first `component` coordinates; all later
/// coordinates are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraw {
    pub component: usize,
    pub coeffs: Vec<f64>,
}

impl PosteriorDraw {
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        out[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        out
    }
}

impl DdmPosterior {
    pub fn mixture(data: ObservedData, params: DdmParams, i_max: usize) -> Result<Self> {
        let weights = mixture_weights(&data, &params, i_max)?;
        Ok(Self { data, params, weights, variant: PosteriorVariant::Mixture })
    }

    /// The single-component measure at `Î`.
    pub fn at_eb_index(data: ObservedData, params: DdmParams, i_max: usize) -> Result<Self> {
        let w = mixture_weights(&data, &params, i_max)?;
        let weights = MixtureWeights::degenerate(i_max, eb_index(&w));
        Ok(Self { data, params, weights, variant: PosteriorVariant::EbIndex })
    }

    pub fn shrunk_full_bayes(data: ObservedData, params: DdmParams, i_max: usize) -> Result<Self> {
        let weights = full_bayes_weights(&data, &params, i_max)?;
        Ok(Self { data, params, weights, variant: PosteriorVariant::FullBayesShrunk })
    }

    /// Replaces the weights, e.g. to study a fixed mixture.
    pub fn with_weights(mut self, weights: MixtureWeights) -> Result<Self> {
        check_i_max(&self.data, weights.i_max())?;
        self.weights = weights;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Multiplier on `X_i` in the component means: 1, or `L` when over-shrunk.
    pub fn mean_factor(&self) -> f64 {
        match self.variant {
            PosteriorVariant::FullBayesShrunk => self.params.shrink(),
            _ => 1.0,
        }
    }

    /// Mean of component `I`, as a dense vector.
    pub fn component_mean(&self, component: usize) -> Vec<f64> {
        let f = self.mean_factor();
        self.data
            .x
            .iter()
            .enumerate()
            .map(|(k, x)| if k < component { f * x } else { 0.0 })
            .collect()
    }

    /// Posterior mean `Σ_I w_I · E_I θ`.
    pub fn mean(&self) -> Vec<f64> {
        let f = self.mean_factor();
        let mut m = posterior_mean(&self.data, &self.weights);
        m.iter_mut().for_each(|v| *v *= f);
        m
    }

    /// `Î` of this measure's weights.
    pub fn eb_index(&self) -> usize {
        eb_index(&self.weights)
    }

    pub(crate) fn sampler(&self) -> PosteriorSampler<'_> {
        PosteriorSampler::new(self)
    }

    /// `n_draws` independent draws from a seeded stream.
    pub fn sample(&self, n_draws: usize, seed: u64) -> Result<Vec<PosteriorDraw>> {
        if n_draws == 0 {
            return Err(Error::invalid("n_draws", "must be at least 1"));
        }
        let sampler = self.sampler();
        let mut rng = rng::stream(seed);
        Ok((0..n_draws).map(|_| sampler.draw(&mut rng)).collect())
    }
}

/// Precomputed pieces for repeated sampling.
pub(crate) struct PosteriorSampler<'a> {
    post: &'a DdmPosterior,
    index: WeightedIndex<f64>,
    sd: Vec<f64>,
    factor: f64,
}

impl<'a> PosteriorSampler<'a> {
    fn new(post: &'a DdmPosterior) -> Self {
        let w = post.weights.weights();
        let index = WeightedIndex::new(&w).expect("normalised weights are valid");
        let sl = post.params.shrink().sqrt();
        let sd = (1..=post.weights.i_max()).map(|i| sl * post.data.model.sigma(i)).collect();
        Self { post, index, sd, factor: post.mean_factor() }
    }

    #[inline]
    pub fn draw_component<R: Rng>(&self, rng: &mut R) -> usize {
        self.index.sample(rng) + 1
    }

    /// Fills `buf` with coordinates `1..=component` of a draw from component `component`.
    #[inline]
    pub fn fill_component<R: Rng>(&self, component: usize, buf: &mut Vec<f64>, rng: &mut R) {
        buf.clear();
        let x = &self.post.data.x;
        for k in 0..component {
            let z: f64 = StandardNormal.sample(rng);
            buf.push(self.factor * x[k] + self.sd[k] * z);
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> PosteriorDraw {
        let component = self.draw_component(rng);
        let mut coeffs = Vec::with_capacity(component);
        self.fill_component(component, &mut coeffs, rng);
        PosteriorDraw { component, coeffs }
    }
}
