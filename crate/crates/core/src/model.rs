//! The mildly ill-posed Gaussian sequence model `X_i = θ_i + σ_i Z_i`,
//! `σ_i = ε·i^p`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::Signal;

/// Noise level, ill-posedness exponent and truncation level.
///
/// Coordinates are 1-based throughout the public API: `sigma(1) == epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub epsilon: f64,
    pub p: f64,
    pub n_trunc: usize,
}

pub const DEFAULT_N_TRUNC: usize = 4096;

impl ModelConfig {
    pub fn new(epsilon: f64, p: f64, n_trunc: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon", format!("must be positive and finite, got {epsilon}")));
        }
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::invalid("p", format!("must be nonnegative and finite, got {p}")));
        }
        if n_trunc == 0 {
            return Err(Error::invalid("n_trunc", "must be at least 1"));
        }
        Ok(Self { epsilon, p, n_trunc })
    }

    /// Re-checks the invariants, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.epsilon, self.p, self.n_trunc)
    }

    /// `κ_i = i^p`.
    #[inline]
    pub fn kappa(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        (i as f64).powf(self.p)
    }

    /// `σ_i = ε·i^p`, evaluated directly for every `i`.
    #[inline]
    pub fn sigma(&self, i: usize) -> f64 {
        self.epsilon * self.kappa(i)
    }

    #[inline]
    pub fn sigma_sq(&self, i: usize) -> f64 {
        let s = self.sigma(i);
        s * s
    }

    /// `σ_1..σ_N`, zero-indexed.
    pub fn sigmas(&self) -> Vec<f64> {
        (1..=self.n_trunc).map(|i| self.sigma(i)).collect()
    }

    /// Prefix sums `Σ(I) = Σ_{i≤I} σ_i²` for `I = 0..=N` (`out[0] == 0`).
    pub fn variance_prefix(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_trunc + 1);
        let mut acc = 0.0;
        out.push(acc);
        for i in 1..=self.n_trunc {
            acc += self.sigma_sq(i);
            out.push(acc);
        }
        out
    }

    /// `Σ(I)` for a single index; `Σ(0) = 0`.
    pub fn variance_sum(&self, upto: usize) -> f64 {
        (1..=upto).map(|i| self.sigma_sq(i)).sum()
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.p, self.n_trunc)
    }
}

/// One realisation of the sequence model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedData {
    pub x: Vec<f64>,
    pub model: ModelConfig,
    pub seed: u64,
}

impl ObservedData {
    /// Wraps externally supplied observations.
    pub fn new(x: Vec<f64>, model: ModelConfig, seed: u64) -> Result<Self> {
        let model = model.validated()?;
        if x.len() != model.n_trunc {
            return Err(Error::invalid(
                "x",
                format!("length {} does not match n_trunc {}", x.len(), model.n_trunc),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("x", "observations must be finite"));
        }
        Ok(Self { x, model, seed })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// The projection `X(I) = (X_1, …, X_I, 0, …)`.
    pub fn projection(&self, upto: usize) -> Vec<f64> {
        let mut out = self.x.clone();
        out.iter_mut().skip(upto).for_each(|v| *v = 0.0);
        out
    }
}

/// Draws `X_i = θ_i + σ_i Z_i`; signals shorter than `n_trunc` are zero padded.
pub fn simulate(model: &ModelConfig, signal: &Signal, seed: u64) -> Result<ObservedData> {
    if signal.len() > model.n_trunc {
        return Err(Error::invalid(
            "signal",
            format!("length {} exceeds n_trunc {}", signal.len(), model.n_trunc),
        ));
    }
    let mut rng = rng::stream(seed);
    let x = (1..=model.n_trunc)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            signal.coeff(i) + model.sigma(i) * z
        })
        .collect();
    Ok(ObservedData { x, model: *model, seed })
}
