//! True coefficient sequences `θ` and their generators.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::oracle;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Zero,
    SobolevBoundary,
    SobolevRandom,
    Analytic,
    Parametric,
    Deceptive,
    Custom,
}

impl SignalKind {
    pub const ALL: [SignalKind; 7] = [
        SignalKind::Zero,
        SignalKind::SobolevBoundary,
        SignalKind::SobolevRandom,
        SignalKind::Analytic,
        SignalKind::Parametric,
        SignalKind::Deceptive,
        SignalKind::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SignalKind::Zero => "zero",
            SignalKind::SobolevBoundary => "sobolev-boundary",
            SignalKind::SobolevRandom => "sobolev-random",
            SignalKind::Analytic => "analytic",
            SignalKind::Parametric => "parametric",
            SignalKind::Deceptive => "deceptive",
            SignalKind::Custom => "custom",
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SignalKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownSignalKind(s.to_string()))
    }
}

/// Generator parameters. Only the fields relevant to a kind are read.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    /// Noise level the deceptive spike is tuned against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Ill-posedness exponent the deceptive spike is tuned against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Filled in by the deceptive generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spike_index: Option<usize>,
    /// Energy `θ_j²` of the deceptive spike; filled in by the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spike_mass: Option<f64>,
}

impl SignalParams {
    pub fn sobolev(beta: f64, q: f64) -> Self {
        Self { beta: Some(beta), q: Some(q), ..Self::default() }
    }

    pub fn analytic(c: f64, d: f64, q: f64) -> Self {
        Self { c: Some(c), d: Some(d), q: Some(q), ..Self::default() }
    }

    pub fn parametric(n0: usize, q: f64) -> Self {
        Self { n0: Some(n0), q: Some(q), ..Self::default() }
    }

    pub fn deceptive(epsilon: f64, p: f64) -> Self {
        Self { epsilon: Some(epsilon), p: Some(p), ..Self::default() }
    }

    /// Compact `key=value` rendering used in CSV rows and file names.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        };
        push("beta", self.beta.map(|v| v.to_string()));
        push("q", self.q.map(|v| v.to_string()));
        push("c", self.c.map(|v| v.to_string()));
        push("d", self.d.map(|v| v.to_string()));
        push("n0", self.n0.map(|v| v.to_string()));
        push("eps", self.epsilon.map(|v| v.to_string()));
        push("p", self.p.map(|v| v.to_string()));
        push("j", self.spike_index.map(|v| v.to_string()));
        push("m", self.spike_mass.map(|v| format!("{v:.6e}")));
        parts.join(";")
    }

    fn positive(value: Option<f64>, name: &'static str, kind: SignalKind) -> Result<f64> {
        match value {
            Some(v) if v > 0.0 && v.is_finite() => Ok(v),
            Some(v) => Err(Error::invalid(name, format!("must be positive for {kind}, got {v}"))),
            None => Err(Error::invalid(name, format!("required for {kind}"))),
        }
    }

    fn q_or_default(&self, kind: SignalKind) -> Result<f64> {
        Self::positive(Some(self.q.unwrap_or(1.0)), "q", kind)
    }
}

/// A finitely supported coefficient sequence `θ_1..θ_N`; coefficients past
/// the stored length are exactly zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Signal {
    pub kind: SignalKind,
    #[serde(default)]
    pub params: SignalParams,
    pub coeffs: Vec<f64>,
    #[serde(skip)]
    tail_cache: OnceLock<Vec<f64>>,
}

impl PartialEq for Signal {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.params == other.params && self.coeffs == other.coeffs
    }
}

impl Signal {
    pub fn new(kind: SignalKind, params: SignalParams, coeffs: Vec<f64>) -> Self {
        Self { kind, params, coeffs, tail_cache: OnceLock::new() }
    }

    pub fn custom(coeffs: Vec<f64>) -> Self {
        Self::new(SignalKind::Custom, SignalParams::default(), coeffs)
    }

    pub fn zero(n: usize) -> Self {
        Self::new(SignalKind::Zero, SignalParams::default(), vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `θ_i` (1-based); zero beyond the support.
    #[inline]
    pub fn coeff(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        self.coeffs.get(i - 1).copied().unwrap_or(0.0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.tail_energies()[0]
    }

    /// Reverse cumulative energies: `out[k] = Σ_{i>k} θ_i²` for `k = 0..=len`.
    /// Computed once per signal.
    pub fn tail_energies(&self) -> &[f64] {
        self.tail_cache.get_or_init(|| {
            let mut out = vec![0.0; self.coeffs.len() + 1];
            for k in (0..self.coeffs.len()).rev() {
                out[k] = out[k + 1] + self.coeffs[k] * self.coeffs[k];
            }
            out
        })
    }

    /// `Σ_{i>k} θ_i²` for any `k ≥ 0`.
    pub fn tail_energy(&self, k: usize) -> f64 {
        let t = self.tail_energies();
        t.get(k).copied().unwrap_or(0.0)
    }

    /// `cθ`, keeping the kind tag as custom.
    pub fn scaled(&self, c: f64) -> Signal {
        Signal::custom(self.coeffs.iter().map(|v| c * v).collect())
    }

    /// Copy of the coefficients zero padded (or truncated) to length `n`.
    pub fn padded(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.coeff(i)).collect()
    }

    pub fn label(&self) -> String {
        let params = self.params.label();
        if params.is_empty() {
            self.kind.to_string()
        } else {
            format!("{}[{}]", self.kind, params)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sig: Signal = serde_json::from_str(s)?;
        if sig.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coeffs", "coefficients must be finite"));
        }
        Ok(sig)
    }
}

/// Spike index used by the deceptive generator: `⌈2/ε^{2/(2p+1)}⌉`.
pub fn deceptive_spike_index(epsilon: f64, p: f64) -> usize {
    (2.0 / epsilon.powf(2.0 / (2.0 * p + 1.0))).ceil() as usize
}

/// Builds a signal of the requested kind on `1..=n_trunc`.
///
/// The deceptive kind places a spike of energy `10·ε²·j^{2p}` at
/// `j = ⌈2/ε^{2/(2p+1)}⌉` and then verifies that the excess-bias ratio at the
/// stated `ε, p` exceeds 1; construction fails otherwise.
pub fn generate_signal(
    kind: SignalKind,
    params: &SignalParams,
    n_trunc: usize,
    seed: Option<u64>,
) -> Result<Signal> {
    if n_trunc == 0 {
        return Err(Error::invalid("n_trunc", "must be at least 1"));
    }
    let mut params = params.clone();
    let coeffs: Vec<f64> = match kind {
        SignalKind::Zero => vec![0.0; n_trunc],
        SignalKind::SobolevBoundary | SignalKind::SobolevRandom => {
            let beta = SignalParams::positive(params.beta, "beta", kind)?;
            let q = params.q_or_default(kind)?;
            params.q = Some(q);
            let bound = |i: usize| q.sqrt() * (i as f64).powf(-(beta + 0.5));
            if kind == SignalKind::SobolevBoundary {
                (1..=n_trunc).map(bound).collect()
            } else {
                let seed = seed.ok_or_else(|| Error::invalid("seed", "required for sobolev-random"))?;
                let mut rng = rng::stream(rng::derive_seed(seed, &[rng::tag::SIGNAL]));
                (1..=n_trunc)
                    .map(|i| {
                        let a = bound(i);
                        rng.random_range(-1.0..=1.0) * a
                    })
                    .collect()
            }
        }
        SignalKind::Analytic => {
            let c = SignalParams::positive(params.c, "c", kind)?;
            let d = SignalParams::positive(params.d, "d", kind)?;
            let q = params.q_or_default(kind)?;
            params.q = Some(q);
            (1..=n_trunc).map(|i| (q * (-c * (i as f64).powf(d)).exp()).sqrt()).collect()
        }
        SignalKind::Parametric => {
            let q = params.q_or_default(kind)?;
            params.q = Some(q);
            let n0 = params.n0.ok_or_else(|| Error::invalid("n0", "required for parametric"))?;
            if n0 == 0 || n0 > n_trunc {
                return Err(Error::invalid("n0", format!("must lie in 1..={n_trunc}, got {n0}")));
            }
            (1..=n_trunc).map(|i| if i <= n0 { q.sqrt() } else { 0.0 }).collect()
        }
        SignalKind::Deceptive => {
            let eps = SignalParams::positive(params.epsilon, "epsilon", kind)?;
            let p = params.p.unwrap_or(0.0);
            if !(p >= 0.0) {
                return Err(Error::invalid("p", "must be nonnegative"));
            }
            params.p = Some(p);
            let j = deceptive_spike_index(eps, p);
            if j > n_trunc {
                return Err(Error::DeceptiveConstruction(format!(
                    "spike index {j} exceeds n_trunc {n_trunc}"
                )));
            }
            let mass = 10.0 * eps * eps * (j as f64).powf(2.0 * p);
            params.spike_index = Some(j);
            params.spike_mass = Some(mass);
            let mut coeffs = vec![0.0; n_trunc];
            coeffs[j - 1] = mass.sqrt();
            let sig = Signal::new(kind, params.clone(), coeffs);
            let model = ModelConfig::new(eps, p, n_trunc)?;
            let check = oracle::ebr_check(&sig, &model, 1.0);
            if check.member {
                return Err(Error::DeceptiveConstruction(format!(
                    "excess-bias ratio {:.4} does not exceed 1 at eps={eps}, p={p}",
                    check.ratio
                )));
            }
            return Ok(sig);
        }
        SignalKind::Custom => {
            return Err(Error::invalid("kind", "custom signals are built from explicit coefficients"));
        }
    };
    Ok(Signal::new(kind, params, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sobolev_boundary_example() {
        let s = generate_signal(SignalKind::SobolevBoundary, &SignalParams::sobolev(1.0, 1.0), 5, None).unwrap();
        let expected = [1.0, 2f64.powf(-1.5), 3f64.powf(-1.5), 4f64.powf(-1.5), 5f64.powf(-1.5)];
        for (a, b) in s.coeffs.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_and_parametric_examples() {
        let z = generate_signal(SignalKind::Zero, &SignalParams::default(), 10, None).unwrap();
        assert_eq!(z.coeffs, vec![0.0; 10]);
        let p = generate_signal(SignalKind::Parametric, &SignalParams::parametric(3, 4.0), 8, None).unwrap();
        assert_eq!(p.coeffs, vec![2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn analytic_matches_formula() {
        let s = generate_signal(SignalKind::Analytic, &SignalParams::analytic(1.0, 1.0, 2.0), 6, None).unwrap();
        for i in 1..=6 {
            assert!((s.coeff(i).powi(2) - 2.0 * (-(i as f64)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn sobolev_random_is_seeded_and_bounded() {
        let params = SignalParams::sobolev(1.5, 2.0);
        let a = generate_signal(SignalKind::SobolevRandom, &params, 200, Some(3)).unwrap();
        let b = generate_signal(SignalKind::SobolevRandom, &params, 200, Some(3)).unwrap();
        assert_eq!(a, b);
        for i in 1..=200 {
            let bound = (2.0f64).sqrt() * (i as f64).powf(-2.0);
            assert!(a.coeff(i).abs() <= bound);
        }
        assert!(generate_signal(SignalKind::SobolevRandom, &params, 200, None).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(generate_signal(SignalKind::SobolevBoundary, &SignalParams::default(), 5, None).is_err());
        assert!(generate_signal(SignalKind::SobolevBoundary, &SignalParams::sobolev(-1.0, 1.0), 5, None).is_err());
        assert!(generate_signal(SignalKind::Parametric, &SignalParams::parametric(9, 1.0), 8, None).is_err());
        assert!(generate_signal(SignalKind::Parametric, &SignalParams::parametric(0, 1.0), 8, None).is_err());
        assert!(generate_signal(SignalKind::Analytic, &SignalParams::analytic(1.0, 0.0, 1.0), 8, None).is_err());
        assert!("wavelet".parse::<SignalKind>().is_err());
    }

    #[test]
    fn deceptive_fails_ebr_by_construction() {
        let s = generate_signal(SignalKind::Deceptive, &SignalParams::deceptive(0.1, 0.0), 1024, None).unwrap();
        assert_eq!(s.params.spike_index, Some(200));
        assert!((s.coeff(200).powi(2) - 0.1).abs() < 1e-15);
        assert_eq!(s.coeffs.iter().filter(|v| **v != 0.0).count(), 1);
        let m = ModelConfig::new(0.1, 0.0, 1024).unwrap();
        assert!(!oracle::ebr_check(&s, &m, 1.0).member);
    }

    #[test]
    fn deceptive_aborts_when_check_cannot_fail() {
        // j = 10 at eps = 0.1, p = 1: the surrogate oracle jumps onto the spike.
        let err = generate_signal(SignalKind::Deceptive, &SignalParams::deceptive(0.1, 1.0), 64, None);
        assert!(matches!(err, Err(Error::DeceptiveConstruction(_))));
        let err = generate_signal(SignalKind::Deceptive, &SignalParams::deceptive(0.01, 0.0), 1024, None);
        assert!(matches!(err, Err(Error::DeceptiveConstruction(_))));
    }

    #[test]
    fn json_shape_and_round_trip() {
        let s = generate_signal(SignalKind::Parametric, &SignalParams::parametric(2, 1.0), 3, None).unwrap();
        let json = s.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["kind"], "parametric");
        assert_eq!(v["params"]["n0"], 2);
        assert_eq!(v["coeffs"].as_array().unwrap().len(), 3);
        assert_eq!(Signal::from_json(&json).unwrap(), s);
    }

    #[test]
    fn tail_energies_are_reverse_cumulative() {
        let s = Signal::custom(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.tail_energies(), &[14.0, 13.0, 9.0, 0.0]);
        assert_eq!(s.tail_energy(10), 0.0);
        assert_eq!(s.norm_sq(), 14.0);
    }
}
