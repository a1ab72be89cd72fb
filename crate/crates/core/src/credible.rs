//! DD-radii, the default DD-center and inflated credible balls.
//!
//! Distances are Euclidean over the first `N` coordinates. A draw from
//! component `I` is zero past `I`, so its squared distance to a center `c` is
//! `Σ_{i≤I} (θ_i − c_i)² + Σ_{i>I} c_i²`; the second sum is precomputed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddm::DdmPosterior;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::stats;

/// Minimum Monte-Carlo budget accepted by the radius estimators.
pub const MIN_MC_SAMPLES: usize = 1000;

/// Default credibility level of the center search and slack on its radius.
pub const DEFAULT_P_LEVEL: f64 = 2.0 / 3.0;
pub const DEFAULT_VARSIGMA: f64 = 0.5;

/// Draws are generated in fixed-size chunks with their own seeds so the
/// result does not depend on the number of worker threads.
const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub value: f64,
    /// `κ`: the ball holds posterior mass `1 − κ`.
    pub level: f64,
    pub mc_samples: usize,
    pub std_error: f64,
}

/// `Σ_{i>k} c_i²` for `k = 0..=n`.
pub(crate) fn suffix_norms(center: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let c = center.get(k).copied().unwrap_or(0.0);
        out[k] = out[k + 1] + c * c;
    }
    out
}

/// Distances from `n_draws` posterior draws to each center, on one shared
/// set of draws. `out[j][d]` is the distance of draw `d` to center `j`.
pub fn shared_distances(post: &DdmPosterior, centers: &[&[f64]], n_draws: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = post.len();
    let tails: Vec<Vec<f64>> = centers.iter().map(|c| suffix_norms(c, n)).collect();
    let sampler = post.sampler();
    let n_chunks = n_draws.div_ceil(CHUNK);
    let chunks: Vec<Vec<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let len = CHUNK.min(n_draws - chunk * CHUNK);
            let mut rng = rng::stream(rng::derive_seed(seed, &[chunk as u64]));
            let mut out = vec![Vec::with_capacity(len); centers.len()];
            let mut buf = Vec::new();
            for _ in 0..len {
                let comp = sampler.draw_component(&mut rng);
                sampler.fill_component(comp, &mut buf, &mut rng);
                for (j, c) in centers.iter().enumerate() {
                    let mut d2 = tails[j][comp];
                    for (k, t) in buf.iter().enumerate() {
                        let diff = t - c.get(k).copied().unwrap_or(0.0);
                        d2 += diff * diff;
                    }
                    out[j].push(d2.sqrt());
                }
            }
            out
        })
        .collect();
    let mut merged = vec![Vec::with_capacity(n_draws); centers.len()];
    for chunk in chunks {
        for (j, part) in chunk.into_iter().enumerate() {
            merged[j].extend(part);
        }
    }
    merged
}

/// Quantile radius at level `κ` from a sample of distances.
pub(crate) fn quantile_radius(mut dist: Vec<f64>, kappa: f64) -> RadiusEstimate {
    let n = dist.len();
    dist.sort_by(f64::total_cmp);
    let q = 1.0 - kappa;
    let rank = stats::upper_rank(q, n);
    let h = (n as f64 * q * (1.0 - q)).sqrt().ceil() as usize;
    let lo = rank.saturating_sub(h).max(1);
    let hi = (rank + h).min(n);
    RadiusEstimate {
        value: dist[rank - 1],
        level: kappa,
        mc_samples: n,
        std_error: 0.5 * (dist[hi - 1] - dist[lo - 1]),
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid("kappa", format!("must lie in (0, 1), got {kappa}")));
    }
    Ok(())
}

fn check_mc(mc_samples: usize) -> Result<()> {
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::invalid("mc_samples", format!("must be at least {MIN_MC_SAMPLES}, got {mc_samples}")));
    }
    Ok(())
}

/// DD-radius: the smallest `r` with `P(‖θ − center‖ ≤ r | X) ≥ 1 − κ`,
/// estimated from `mc_samples` draws.
pub fn radius_at_level(
    post: &DdmPosterior,
    center: &[f64],
    kappa: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<RadiusEstimate> {
    check_kappa(kappa)?;
    check_mc(mc_samples)?;
    let seed = rng::derive_seed(seed, &[tag::RADIUS]);
    let dist = shared_distances(post, &[center], mc_samples, seed).pop().unwrap_or_default();
    Ok(quantile_radius(dist, kappa))
}

/// Where a default-center candidate came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "kebab-case")]
pub enum CenterCandidate {
    PosteriorMean,
    /// Mean of the component at `Î`.
    EbIndex(usize),
    /// Mean of component `I`.
    Component(usize),
}

/// Weight threshold for a component mean to enter the candidate set.
pub const CANDIDATE_MIN_WEIGHT: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefaultCenter {
    pub center: Vec<f64>,
    pub candidate: CenterCandidate,
    /// `r̂*`: the smallest level-`p` radius over the candidates.
    pub r_star: f64,
    pub p_level: f64,
    pub varsigma: f64,
    /// Posterior mass of `B(θ̌, (1+ς) r̂*)` re-estimated on fresh draws.
    pub verified_mass: f64,
    pub verified: bool,
    pub candidates_considered: usize,
    /// Level-`p` radius around the posterior mean; `mean_radius − r_star` is
    /// the gain of the search over simply using `θ̃`.
    pub mean_radius: f64,
}

fn candidates(post: &DdmPosterior) -> Vec<(CenterCandidate, Vec<f64>)> {
    let mut out = vec![(CenterCandidate::PosteriorMean, post.mean())];
    let i_hat = post.eb_index();
    out.push((CenterCandidate::EbIndex(i_hat), post.component_mean(i_hat)));
    for (k, l) in post.weights.log_w.iter().enumerate() {
        let i = k + 1;
        if i != i_hat && l.exp() >= CANDIDATE_MIN_WEIGHT {
            out.push((CenterCandidate::Component(i), post.component_mean(i)));
        }
    }
    out
}

/// Default DD-center without failing on the mass check; `verified` records
/// whether it passed.
pub fn default_center_unchecked(
    post: &DdmPosterior,
    p_level: f64,
    varsigma: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<DefaultCenter> {
    if !(p_level > 0.0 && p_level < 1.0) {
        return Err(Error::invalid("p_level", format!("must lie in (0, 1), got {p_level}")));
    }
    if !(varsigma >= 0.0 && varsigma.is_finite()) {
        return Err(Error::invalid("varsigma", format!("must be nonnegative, got {varsigma}")));
    }
    check_mc(mc_samples)?;
    let cands = candidates(post);
    let refs: Vec<&[f64]> = cands.iter().map(|(_, c)| c.as_slice()).collect();
    let dists = shared_distances(post, &refs, mc_samples, rng::derive_seed(seed, &[tag::CENTER]));
    let radii: Vec<f64> = dists.into_iter().map(|d| quantile_radius(d, 1.0 - p_level).value).collect();
    let mut best = 0;
    for (j, r) in radii.iter().enumerate() {
        if *r < radii[best] {
            best = j;
        }
    }
    let r_star = radii[best];
    let (candidate, center) = cands.into_iter().nth(best).expect("candidate index in range");
    let fresh = shared_distances(post, &[&center], mc_samples, rng::derive_seed(seed, &[tag::VERIFY]))
        .pop()
        .unwrap_or_default();
    let limit = (1.0 + varsigma) * r_star;
    let verified_mass = fresh.iter().filter(|d| **d <= limit).count() as f64 / fresh.len() as f64;
    Ok(DefaultCenter {
        center,
        candidate,
        r_star,
        p_level,
        varsigma,
        verified_mass,
        verified: verified_mass >= p_level,
        candidates_considered: radii.len(),
        mean_radius: radii[0],
    })
}

/// Default DD-center `θ̌` with `r̂*`; fails if the `(1+ς) r̂*` ball around
/// `θ̌` does not hold mass `p_level` on fresh draws.
pub fn default_center(
    post: &DdmPosterior,
    p_level: f64,
    varsigma: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<DefaultCenter> {
    let dc = default_center_unchecked(post, p_level, varsigma, mc_samples, seed)?;
    if !dc.verified {
        return Err(Error::CenterVerification { mass: dc.verified_mass, level: p_level });
    }
    Ok(dc)
}

/// Closed ball `{θ : ‖θ − center‖ ≤ inflation · radius}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredibleBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub level: f64,
    pub inflation: f64,
}

pub fn make_confidence_ball(center: Vec<f64>, radius: &RadiusEstimate, inflation: f64) -> Result<CredibleBall> {
    if !(inflation >= 0.0 && inflation.is_finite()) {
        return Err(Error::invalid("inflation", format!("must be nonnegative, got {inflation}")));
    }
    Ok(CredibleBall { center, radius: radius.value, level: radius.level, inflation })
}

impl CredibleBall {
    pub fn effective_radius(&self) -> f64 {
        self.inflation * self.radius
    }

    /// Distance from the center; shorter vectors are zero padded.
    pub fn distance(&self, theta: &[f64]) -> f64 {
        euclidean(&self.center, theta)
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.distance(theta) <= self.effective_radius()
    }
}

/// `‖a − b‖` with the shorter vector zero padded.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| {
            let d = a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// The default ball `B(θ̌, M · r̂_κ(θ̌))` together with the center search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefaultBall {
    pub center: DefaultCenter,
    pub radius: RadiusEstimate,
    pub ball: CredibleBall,
}

pub fn default_ball(
    post: &DdmPosterior,
    kappa: f64,
    inflation: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<DefaultBall> {
    let center = default_center_unchecked(post, DEFAULT_P_LEVEL, DEFAULT_VARSIGMA, mc_samples, seed)?;
    let radius = radius_at_level(post, &center.center, kappa, mc_samples, seed)?;
    let ball = make_confidence_ball(center.center.clone(), &radius, inflation)?;
    Ok(DefaultBall { center, radius, ball })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddm::{DdmParams, MixtureWeights};
    use crate::model::{ModelConfig, ObservedData};

    fn posterior(x: Vec<f64>, eps: f64) -> DdmPosterior {
        let n = x.len();
        let d = ObservedData::new(x, ModelConfig::new(eps, 0.0, n).unwrap(), 0).unwrap();
        DdmPosterior::mixture(d, DdmParams::default(), n).unwrap()
    }

    #[test]
    fn half_normal_radius() {
        let post = posterior(vec![0.7, 0.0, 0.0, 0.0], 1.0).with_weights(MixtureWeights::degenerate(4, 1)).unwrap();
        let c = post.component_mean(1);
        let r = radius_at_level(&post, &c, 0.5, 20_000, 3).unwrap();
        let exact = (2.0f64 / 3.0).sqrt() * 0.674_489_750_196_081_7;
        assert!((r.value - exact).abs() < 3.0 * r.std_error, "{r:?} vs {exact}");
        assert!(r.std_error > 0.0);
    }

    #[test]
    fn radius_monotone_in_kappa_on_shared_draws() {
        let post = posterior(vec![2.0, 1.0, 0.3, 0.1, 0.0, 0.0], 0.5);
        let c = post.mean();
        let r1 = radius_at_level(&post, &c, 0.2, 2000, 1).unwrap();
        let r2 = radius_at_level(&post, &c, 0.6, 2000, 1).unwrap();
        assert!(r1.value >= r2.value);
    }

    #[test]
    fn radius_validates_inputs() {
        let post = posterior(vec![1.0; 3], 1.0);
        let c = post.mean();
        assert!(radius_at_level(&post, &c, 0.0, 2000, 1).is_err());
        assert!(radius_at_level(&post, &c, 1.0, 2000, 1).is_err());
        assert!(radius_at_level(&post, &c, 0.5, 999, 1).is_err());
    }

    #[test]
    fn far_center_radius_is_dominated_by_offset() {
        let post = posterior(vec![1.0, 0.5, 0.0, 0.0], 0.1);
        let mut far = post.mean();
        far[0] += 1e4;
        let r = radius_at_level(&post, &far, 0.5, 2000, 5).unwrap();
        let offset = euclidean(&far, &post.mean());
        assert!((r.value - offset).abs() / offset < 1e-3);
    }

    #[test]
    fn degenerate_posterior_centers_on_component() {
        let post = posterior(vec![3.0, -2.0, 1.0, 0.0, 0.0], 1.0).with_weights(MixtureWeights::degenerate(5, 3)).unwrap();
        let dc = default_center(&post, DEFAULT_P_LEVEL, DEFAULT_VARSIGMA, 2000, 11).unwrap();
        assert_eq!(dc.center, post.component_mean(3));
        assert!(dc.verified_mass >= DEFAULT_P_LEVEL);
    }

    #[test]
    fn r_star_never_exceeds_mean_radius() {
        let post = posterior(vec![1.2, 0.8, -0.4, 0.3, 0.1, 0.0, 0.0, 0.0], 0.4);
        let dc = default_center_unchecked(&post, DEFAULT_P_LEVEL, DEFAULT_VARSIGMA, 2000, 2).unwrap();
        assert!(dc.r_star <= dc.mean_radius);
        assert!(dc.candidates_considered >= 2);
    }

    #[test]
    fn ball_membership() {
        let est = RadiusEstimate { value: 2.0, level: 0.5, mc_samples: 1000, std_error: 0.0 };
        let ball = make_confidence_ball(vec![0.0, 0.0], &est, 1.5).unwrap();
        assert!(ball.contains(&[0.0, 0.0]));
        assert!(ball.contains(&[3.0]));
        assert!(!ball.contains(&[3.0, 0.01]));
        let point = make_confidence_ball(vec![1.0], &est, 0.0).unwrap();
        assert!(point.contains(&[1.0, 0.0]));
        assert!(!point.contains(&[1.0 + 1e-12]));
        assert!(make_confidence_ball(vec![0.0], &est, -1.0).is_err());
    }

    #[test]
    fn radius_is_deterministic() {
        let post = posterior(vec![1.0, 0.2, 0.0], 0.3);
        let c = post.mean();
        assert_eq!(radius_at_level(&post, &c, 0.5, 1500, 4).unwrap(), radius_at_level(&post, &c, 0.5, 1500, 4).unwrap());
    }
}
