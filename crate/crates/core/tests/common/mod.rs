#![allow(dead_code)]

use ddm_core::{DdmParams, ModelConfig, ObservedData};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Observations with a random signal of random size and decay.
pub fn random_data(n: usize, p: f64, rng: &mut ChaCha8Rng) -> ObservedData {
    let eps = 10f64.powf(rng.random_range(-2.0..0.0));
    let model = ModelConfig::new(eps, p, n).unwrap();
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let decay = rng.random_range(0.5..3.0);
    let x = (1..=n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            scale * (i as f64).powf(-decay) + model.sigma(i) * z
        })
        .collect();
    ObservedData::new(x, model, 0).unwrap()
}

fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean) * (x - mean) / (2.0 * var)
}

/// Posterior over `I` evaluated from the full joint density for each `I`
/// separately: prior `C_α e^{-αI}` times the marginal of all `n`
/// observations, where coordinates `i ≤ I` have mean `X_i` and variance
/// `σ_i² + Kε²` and the rest have mean 0 and variance `σ_i²`.
pub fn direct_weights(data: &ObservedData, params: &DdmParams) -> Vec<f64> {
    let n = data.len();
    let eps_sq = data.model.epsilon * data.model.epsilon;
    // Σ_I λ_I = 1 fixes C_α = e^α − 1 = e^α(1 − e^{−α}).
    let log_c = params.alpha + (1.0 - (-params.alpha).exp()).ln();
    let log_joint: Vec<f64> = (1..=n)
        .map(|big_i| {
            let mut terms = vec![log_c - params.alpha * big_i as f64];
            for i in 1..=n {
                let x = data.x[i - 1];
                let s2 = data.model.sigma_sq(i);
                terms.push(if i <= big_i {
                    log_normal_density(x, x, s2 + params.k * eps_sq)
                } else {
                    log_normal_density(x, 0.0, s2)
                });
            }
            exact_sum(terms)
        })
        .collect();
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_joint.iter().map(|l| (l - max).exp()).sum();
    log_joint.iter().map(|l| (l - max).exp() / z).collect()
}

/// Largest relative deviation, ignoring pairs that both underflow.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x > 1e-300 || **y > 1e-300)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()))
        .fold(0.0, f64::max)
}

/// Compensated sum over terms sorted by magnitude.
fn exact_sum(mut terms: Vec<f64>) -> f64 {
    let mut total = 0.0f64;
    let mut comp = 0.0f64;
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    for t in terms {
        let s = total + t;
        comp += if total.abs() >= t.abs() { (total - s) + t } else { (t - s) + total };
        total = s;
    }
    total + comp
}

/// Random decaying signal drawn from a mix of polynomial, geometric and
/// stepped profiles with multiplicative jitter; most draws have polished
/// tails, some do not.
pub fn decaying_signal(n: usize, rng: &mut ChaCha8Rng) -> ddm_core::Signal {
    let scale = 10f64.powf(rng.random_range(-2.0..1.0));
    let profile = rng.random_range(0..3);
    let beta = rng.random_range(0.3..3.0);
    let rate = rng.random_range(0.01..1.0);
    let step = rng.random_range(2..20usize);
    let jitter = rng.random_range(0.0..0.9);
    let len = if rng.random::<bool>() { n } else { rng.random_range(1..=n) };
    let coeffs = (1..=n)
        .map(|i| {
            if i > len {
                return 0.0;
            }
            let x = i as f64;
            let base = match profile {
                0 => x.powf(-beta - 0.5),
                1 => (-rate * x).exp(),
                _ => (((i - 1) / step + 1) as f64).powf(-beta - 0.5),
            };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * scale * base * (1.0 - jitter * rng.random::<f64>())
        })
        .collect();
    ddm_core::Signal::custom(coeffs)
}
