//! Constants for the regularity conditions on `σ_i² = ε² i^{2p}` and a numeric
//! verifier for them.
//!
//! The five conditions, for `ρ, τ_0 ≥ 1` and `γ > 0`:
//!
//! ```text
//! (i)   n σ_n² ≤ K1 Σ(n)
//! (ii)  Σ(ρ n) ≤ K2(ρ) Σ(n)
//! (iii) Σ_n e^{-γ n} Σ(n) ≤ K3(γ) σ_1²
//! (iv)  Σ(⌊m/τ⌋) ≤ (1 − K4) Σ(m)                 for m ≥ τ
//! (v)   l σ²_{⌊l/τ0⌋} ≥ K5(τ0) Σ_{i=⌊l/τ0⌋+1}^{l} σ_i²   for l ≥ τ0
//! ```

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaConstants {
    pub p: f64,
    pub rho: f64,
    pub gamma: f64,
    pub tau0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub tau: f64,
    pub k5: f64,
}

impl SigmaConstants {
    pub fn new(p: f64, rho: f64, gamma: f64, tau0: f64) -> Result<Self> {
        if !(p >= 0.0) {
            return Err(Error::invalid("p", "must be nonnegative"));
        }
        if !(rho >= 1.0) {
            return Err(Error::invalid("rho", "must be >= 1"));
        }
        if !(gamma > 0.0) {
            return Err(Error::invalid("gamma", "must be positive"));
        }
        if !(tau0 >= 1.0) {
            return Err(Error::invalid("tau0", "must be >= 1"));
        }
        Ok(Self {
            p,
            rho,
            gamma,
            tau0,
            k1: Self::k1(p),
            k2: Self::k2(p, rho),
            k3: Self::k3(p, gamma),
            k4: Self::K4,
            tau: Self::tau(p),
            k5: Self::k5(p, tau0),
        })
    }

    pub const K4: f64 = 0.5;

    pub fn k1(p: f64) -> f64 {
        2.0 * p + 1.0
    }

    pub fn k2(p: f64, rho: f64) -> f64 {
        (rho + 1.0).powf(2.0 * p + 1.0)
    }

    pub fn k3(p: f64, gamma: f64) -> f64 {
        4.0 * (8.0 * p + 4.0).powf(2.0 * p)
            / ((E * gamma).powf(2.0 * p + 1.0) * ((gamma / 2.0).exp() - 1.0))
    }

    /// Smallest admissible `τ = 2^{1 + 1/(2p+1)}`.
    pub fn tau(p: f64) -> f64 {
        2f64.powf(1.0 + 1.0 / (2.0 * p + 1.0))
    }

    pub fn k5(p: f64, tau0: f64) -> f64 {
        (2.0 * tau0).powf(-2.0 * p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaViolation {
    pub condition: String,
    /// `n`, `m` or `l`, depending on the condition.
    pub index: usize,
    /// `ρ`, `γ` or `τ0`, when the condition has one.
    pub param: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    pub p: f64,
    pub n_max: usize,
    pub rhos: Vec<f64>,
    pub gammas: Vec<f64>,
    pub tau0s: Vec<f64>,
    pub checks: usize,
    pub violations: Vec<SigmaViolation>,
}

impl SigmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Parameter grids for the verifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaGrid {
    pub rhos: Vec<f64>,
    pub gammas: Vec<f64>,
    pub tau0s: Vec<f64>,
}

impl Default for SigmaGrid {
    fn default() -> Self {
        Self {
            rhos: vec![1.0, 1.5, 2.0, 3.0, 5.5, 10.0],
            // 0.002 = α/20 at α = 0.04, the value the contraction proof uses.
            gammas: vec![0.002, 0.05, 0.5, 1.0, 4.0],
            tau0s: vec![1.0, 1.5, 2.0, 3.0, 7.0],
        }
    }
}

// Relative slack for rounding in the equality cases (e.g. (i) at p = 0).
const REL_TOL: f64 = 1e-10;

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + REL_TOL)
}

/// Checks conditions (i)–(v) with the closed-form constants for every index up
/// to `n_max` and every parameter in `grid`.
///
/// Condition (iv) is checked in its strongest form, over real `m ≥ τ`: for
/// `m ∈ [M, M+1)` the worst case has `Σ(m) = Σ(M)` and `⌊m/τ⌋ = ⌈(M+1)/τ⌉ − 1`.
/// Condition (iii) is summed until the remaining tail is negligible, which may
/// run past `n_max`.
pub fn verify_sigma_conditions(model: &ModelConfig, n_max: usize, grid: &SigmaGrid) -> Result<SigmaReport> {
    if n_max == 0 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    let p = model.p;
    let rho_max = grid.rhos.iter().copied().fold(1.0, f64::max);
    let reach = ((rho_max * n_max as f64).floor() as usize).max(n_max);
    let cfg = ModelConfig::new(model.epsilon, p, reach)?;
    let pre = cfg.variance_prefix();
    let sig_sq = |i: usize| cfg.sigma_sq(i);
    let mut violations = Vec::new();
    let mut checks = 0usize;
    let mut record = |cond: &str, index: usize, param: Option<f64>, lhs: f64, rhs: f64| {
        violations.push(SigmaViolation { condition: cond.to_string(), index, param, lhs, rhs });
    };

    let k1 = SigmaConstants::k1(p);
    for n in 1..=n_max {
        checks += 1;
        let (lhs, rhs) = (n as f64 * sig_sq(n), k1 * pre[n]);
        if !holds(lhs, rhs) {
            record("i", n, None, lhs, rhs);
        }
    }

    for &rho in &grid.rhos {
        let k2 = SigmaConstants::k2(p, rho);
        for n in 1..=n_max {
            checks += 1;
            let upper = (rho * n as f64).floor() as usize;
            let (lhs, rhs) = (pre[upper], k2 * pre[n]);
            if !holds(lhs, rhs) {
                record("ii", n, Some(rho), lhs, rhs);
            }
        }
    }

    for &gamma in &grid.gammas {
        checks += 1;
        let k3 = SigmaConstants::k3(p, gamma);
        let peak = ((2.0 * p + 1.0) / gamma).ceil() as usize;
        let mut acc = 0.0;
        let mut cum = 0.0;
        let mut n = 0usize;
        loop {
            n += 1;
            cum += sig_sq(n);
            let term = (-gamma * n as f64).exp() * cum;
            acc += term;
            if n >= n_max.max(peak) && term <= 1e-17 * acc {
                break;
            }
        }
        let rhs = k3 * sig_sq(1);
        if !holds(acc, rhs) {
            record("iii", n, Some(gamma), acc, rhs);
        }
    }

    let tau = SigmaConstants::tau(p);
    let k4 = SigmaConstants::K4;
    for m in (tau.ceil() as usize)..=n_max {
        checks += 1;
        let worst_low = (((m + 1) as f64 / tau).ceil() as usize).saturating_sub(1);
        let low = worst_low.min(m);
        let (lhs, rhs) = (pre[low], (1.0 - k4) * pre[m]);
        if !holds(lhs, rhs) {
            record("iv", m, Some(tau), lhs, rhs);
        }
    }

    for &tau0 in &grid.tau0s {
        let k5 = SigmaConstants::k5(p, tau0);
        for l in (tau0.ceil() as usize)..=n_max {
            checks += 1;
            let low = (l as f64 / tau0).floor() as usize;
            let lhs = l as f64 * sig_sq(low);
            let rhs = k5 * (pre[l] - pre[low]);
            if !holds(rhs, lhs) {
                record("v", l, Some(tau0), lhs, rhs);
            }
        }
    }

    Ok(SigmaReport {
        p,
        n_max,
        rhos: grid.rhos.clone(),
        gammas: grid.gammas.clone(),
        tau0s: grid.tau0s.clone(),
        checks,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_at_p_zero() {
        let c = SigmaConstants::new(0.0, 3.0, 1.0, 2.0).unwrap();
        assert_eq!(c.k1, 1.0);
        assert_eq!(c.k2, 4.0);
        assert_eq!(c.k4, 0.5);
        assert_eq!(c.tau, 4.0);
        assert_eq!(c.k5, 1.0);
        assert!((c.k3 - 4.0 / (E * ((0.5f64).exp() - 1.0))).abs() < 1e-12);
    }

    #[test]
    fn k2_at_p_one() {
        assert_eq!(SigmaConstants::k2(1.0, 2.0), 27.0);
    }

    #[test]
    fn tau_exceeds_two() {
        for p in [0.0, 0.5, 1.0, 2.0, 10.0] {
            assert!(SigmaConstants::tau(p) > 2.0);
        }
    }

    #[test]
    fn rejects_bad_grid_params() {
        assert!(SigmaConstants::new(0.0, 0.5, 1.0, 1.0).is_err());
        assert!(SigmaConstants::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(SigmaConstants::new(0.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn verify_small_grid() {
        for p in [0.0, 0.5, 1.0] {
            let m = ModelConfig::new(1.0, p, 1).unwrap();
            let rep = verify_sigma_conditions(&m, 2000, &SigmaGrid::default()).unwrap();
            assert!(rep.passed(), "p={p}: {:?}", &rep.violations[..rep.violations.len().min(5)]);
        }
    }
}
