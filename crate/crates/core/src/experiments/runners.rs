use crate::credible::{self, DEFAULT_P_LEVEL, DEFAULT_VARSIGMA};
use crate::ddm::DdmPosterior;
use crate::diagnostics::{
    estimate_phi1_grid, estimate_psi_grid, miss_bound, CenterRule, ConditionEstimate, DiagnosticSetup, McBudget,
    PsiScaling,
};
use crate::error::{Error, Result};
use crate::model::{simulate, ModelConfig};
use crate::oracle::{covers_check, ebr_check, oracle, surrogate_oracle, ClassDef};
use crate::rng::{self, tag};
use crate::signal::Signal;
use crate::stats;

use super::spec::{ExperimentKind, ExperimentSpec};
use super::{ordered, CellRecord, Summary};

/// Pilot quantiles that set the inflation and size constants.
const PILOT_COVERAGE_QUANTILE: f64 = 0.97;
const PILOT_SIZE_QUANTILE: f64 = 0.99;
/// Standard errors of headroom on the pilot oracle-ratio bound.
const PILOT_RATIO_SE: f64 = 5.0;

const COVERAGE_TARGET: f64 = 0.90;
const SIZE_TARGET: f64 = 0.05;
const SLOPE_TOLERANCE: f64 = 0.15;
const OVERSHRINK_TOLERANCE: f64 = 0.01;

struct Cell {
    epsilon: f64,
    model: ModelConfig,
    signal: std::result::Result<Signal, String>,
    seed: u64,
    pilot_seed: u64,
    kind: String,
    params: String,
}

impl Cell {
    fn signal(&self) -> Result<&Signal> {
        self.signal.as_ref().map_err(|e| Error::invalid("signal", e.clone()))
    }

    fn label(&self) -> String {
        if self.params.is_empty() {
            format!("{}@eps={}", self.kind, self.epsilon)
        } else {
            format!("{}[{}]@eps={}", self.kind, self.params, self.epsilon)
        }
    }

    fn signal_label(&self) -> String {
        if self.params.is_empty() {
            self.kind.clone()
        } else {
            format!("{}[{}]", self.kind, self.params)
        }
    }

    fn record(&self, metric: &str, grid: Option<f64>, statistic: f64, std_error: f64) -> CellRecord {
        CellRecord {
            metric: metric.to_string(),
            signal_kind: self.kind.clone(),
            signal_params: self.params.clone(),
            epsilon: self.epsilon,
            grid_value: grid,
            statistic,
            std_error,
            seed: self.seed,
            error: None,
        }
    }

    fn failure(&self, metric: &str, err: &Error) -> CellRecord {
        CellRecord { error: Some(err.to_string()), ..self.record(metric, None, f64::NAN, f64::NAN) }
    }
}

fn signal_cells(spec: &ExperimentSpec) -> Result<Vec<Cell>> {
    let mut out = Vec::new();
    for (si, s) in spec.signals.iter().enumerate() {
        for &epsilon in &spec.epsilons {
            let model = spec.model(epsilon)?;
            let signal = s.build(&model, spec.seed).map_err(|e| e.to_string());
            let params = match &signal {
                Ok(sig) => sig.params.label(),
                Err(_) => s.params.label(),
            };
            out.push(Cell {
                epsilon,
                model,
                signal,
                seed: rng::derive_seed(spec.seed, &[si as u64]),
                pilot_seed: rng::derive_seed(spec.seed, &[tag::PILOT, si as u64]),
                kind: s.kind.to_string(),
                params,
            });
        }
    }
    Ok(out)
}

pub(super) fn run(mut spec: ExperimentSpec) -> Result<(ExperimentSpec, Vec<CellRecord>, Summary)> {
    let mut summary = Summary::default();
    let cells = match spec.kind {
        ExperimentKind::Contraction => contraction(&spec, &mut summary)?,
        ExperimentKind::OracleInequality => oracle_inequality(&mut spec, &mut summary)?,
        ExperimentKind::SmallBall => small_ball(&spec, &mut summary)?,
        ExperimentKind::CoverageSize => coverage_size(&mut spec, &mut summary)?,
        ExperimentKind::Overshrinkage => overshrinkage(&spec, &mut summary)?,
        ExperimentKind::ScaleAdaptation => scale_adaptation(&spec, &mut summary)?,
    };
    Ok((spec, cells, summary))
}

fn setup(spec: &ExperimentSpec, cell: &Cell, signal: &Signal) -> DiagnosticSetup {
    DiagnosticSetup::new(cell.model, signal.clone(), spec.params, spec.center())
}

fn contraction(spec: &ExperimentSpec, summary: &mut Summary) -> Result<Vec<CellRecord>> {
    let cells = signal_cells(spec)?;
    let results: Vec<Result<Vec<ConditionEstimate>>> = ordered(cells.len(), |k| {
        let cell = &cells[k];
        let signal = cell.signal()?;
        let budget = McBudget::new(spec.reps, spec.inner_mc, cell.seed)?;
        estimate_phi1_grid(&setup(spec, cell, signal), &spec.m_grid, &budget)
    });
    let mut records = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        let est = match res {
            Ok(e) => e,
            Err(e) => {
                summary.check(format!("phi1:{}", cell.label()), false, e.to_string());
                records.push(cell.failure("phi1", &e));
                continue;
            }
        };
        for e in &est {
            records.push(cell.record("phi1", Some(e.argument), e.value, e.std_error));
        }
        let monotone = est.windows(2).all(|w| w[1].value <= w[0].value);
        summary.check(format!("phi1-nonincreasing:{}", cell.label()), monotone, format_values(&est));
        // φ1(M') ≤ 2·φ1(M)·(M/M')²: decay at least like M^{-2}, up to a factor 2.
        let decay = est.windows(2).all(|w| {
            let allowed = 2.0 * w[0].value * (w[0].argument / w[1].argument).powi(2);
            w[1].value <= allowed
        });
        summary.check(format!("phi1-decay:{}", cell.label()), decay, format_values(&est));
        let pts: Vec<(f64, f64)> =
            est.iter().filter(|e| e.value > 0.0).map(|e| (e.argument.ln(), e.value.ln())).collect();
        summary.fit(format!("log-phi1-vs-log-m:{}", cell.label()), &pts);
    }
    Ok(records)
}

fn format_values(est: &[ConditionEstimate]) -> String {
    est.iter().map(|e| format!("{}:{:.4e}±{:.1e}", e.argument, e.value, e.std_error)).collect::<Vec<_>>().join(" ")
}

/// `‖θ̃ − θ0‖²/r²(θ0)` on `reps` simulated datasets.
fn estimator_ratios(spec: &ExperimentSpec, cell: &Cell, signal: &Signal, reps: usize, seed: u64) -> Result<Vec<f64>> {
    let rate_sq = oracle(signal, &cell.model).rate_sq;
    let truth = signal.padded(cell.model.n_trunc);
    ordered(reps, |rep| {
        let data = simulate(&cell.model, signal, rng::derive_seed(seed, &[tag::DATA, rep as u64]))?;
        let n = data.len();
        let post = DdmPosterior::mixture(data, spec.params, n)?;
        Ok(credible::euclidean(&post.mean(), &truth).powi(2) / rate_sq)
    })
    .into_iter()
    .collect()
}

fn oracle_inequality(spec: &mut ExperimentSpec, summary: &mut Summary) -> Result<Vec<CellRecord>> {
    let cells = signal_cells(spec)?;
    let s: &ExperimentSpec = spec;
    let main: Vec<Result<(f64, f64)>> = ordered(cells.len(), |k| {
        let c = &cells[k];
        let sig = c.signal()?;
        Ok(stats::mean_and_se(&estimator_ratios(s, c, sig, s.reps, c.seed)?))
    });
    let bound = match spec.calibration.ratio_bound {
        Some(b) => b,
        None => {
            let s: &ExperimentSpec = spec;
            let pilot: Vec<Result<(f64, f64)>> = ordered(cells.len(), |k| {
                let c = &cells[k];
                let sig = c.signal()?;
                Ok(stats::mean_and_se(&estimator_ratios(s, c, sig, s.pilot_reps, c.pilot_seed)?))
            });
            let b = pilot.iter().flatten().map(|(m, se)| m + PILOT_RATIO_SE * se).fold(0.0, f64::max);
            summary.notes.push(format!(
                "ratio bound {b:.6} calibrated on a pilot of {} reps per cell (mean + {PILOT_RATIO_SE} SE, max over cells)",
                spec.pilot_reps
            ));
            spec.calibration.ratio_bound = Some(b);
            b
        }
    };
    let mut records = Vec::new();
    let mut max_ratio: f64 = 0.0;
    let mut by_signal: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for (cell, res) in cells.iter().zip(main) {
        match res {
            Ok((mean, se)) => {
                records.push(cell.record("ratio", None, mean, se));
                max_ratio = max_ratio.max(mean);
                let key = cell.signal_label();
                match by_signal.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, pts)) => pts.push((cell.epsilon.ln(), mean.ln())),
                    None => by_signal.push((key, vec![(cell.epsilon.ln(), mean.ln())])),
                }
            }
            Err(e) => {
                summary.check(format!("ratio:{}", cell.label()), false, e.to_string());
                records.push(cell.failure("ratio", &e));
            }
        }
    }
    for (key, pts) in by_signal {
        let slope = summary.fit(format!("log-ratio-vs-log-eps:{key}"), &pts);
        if pts.len() >= 2 {
            summary.check(
                format!("ratio-slope:{key}"),
                slope.abs() <= SLOPE_TOLERANCE,
                format!("slope {slope:.4}, tolerance ±{SLOPE_TOLERANCE}"),
            );
        }
    }
    summary.check("ratio-bounded", max_ratio <= bound, format!("max ratio {max_ratio:.4}, bound {bound:.4}"));
    Ok(records)
}

/// `δ·log(1/δ)^{p+1/2}`.
fn small_ball_envelope(delta: f64, p: f64) -> f64 {
    delta * (1.0 / delta).ln().powf(p + 0.5)
}

fn small_ball(spec: &ExperimentSpec, summary: &mut Summary) -> Result<Vec<CellRecord>> {
    let cells = signal_cells(spec)?;
    let scalings = [(PsiScaling::SigmaSumSurrogate, "psi-sigma-sum"), (PsiScaling::OracleRate, "psi-oracle-rate")];
    let results: Vec<Result<Vec<Vec<ConditionEstimate>>>> = ordered(cells.len(), |k| {
        let cell = &cells[k];
        let signal = cell.signal()?;
        let budget = McBudget::new(spec.reps, spec.inner_mc, cell.seed)?;
        let st = setup(spec, cell, signal);
        scalings.iter().map(|(sc, _)| estimate_psi_grid(&st, &spec.delta_grid, *sc, &budget)).collect()
    });
    let mut records = Vec::new();
    let mut ebr_max: Vec<f64> = vec![0.0; spec.delta_grid.len()];
    let mut deceptive: Vec<(String, Vec<f64>)> = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        let per_scaling = match res {
            Ok(r) => r,
            Err(e) => {
                summary.check(format!("psi:{}", cell.label()), false, e.to_string());
                records.push(cell.failure("psi", &e));
                continue;
            }
        };
        for ((_, metric), est) in scalings.iter().zip(&per_scaling) {
            for e in est {
                records.push(cell.record(metric, Some(e.argument), e.value, e.std_error));
            }
        }
        let signal = cell.signal.as_ref().expect("signal built");
        let ebr = ebr_check(signal, &cell.model, spec.tau);
        let est = &per_scaling[0];
        if !ebr.member {
            deceptive.push((cell.label(), est.iter().map(|e| e.value).collect()));
            continue;
        }
        for (k, e) in est.iter().enumerate() {
            ebr_max[k] = ebr_max[k].max(e.value);
        }
        let usable: Vec<&ConditionEstimate> = est.iter().filter(|e| e.argument > 0.0 && e.argument < 1.0).collect();
        let Some(anchor) = usable.iter().max_by(|a, b| a.argument.total_cmp(&b.argument)) else {
            continue;
        };
        if usable.iter().all(|e| e.value == 0.0) {
            summary.notes.push(format!(
                "{}: no posterior draw fell within delta*s for any delta; psi is below {:.1e} and the envelope holds trivially",
                cell.label(),
                1.0 / (spec.reps * spec.inner_mc) as f64
            ));
        }
        let c_hat = anchor.value / small_ball_envelope(anchor.argument, spec.p);
        let dominated = usable
            .iter()
            .all(|e| e.value <= c_hat * small_ball_envelope(e.argument, spec.p) + 3.0 * e.std_error);
        summary.check(
            format!("psi-envelope:{}", cell.label()),
            dominated,
            format!("C_hat {c_hat:.4e} at delta {}; {}", anchor.argument, format_values(est)),
        );
    }
    for (label, values) in deceptive {
        let larger = values.iter().zip(&ebr_max).filter(|(d, e)| d > e).count();
        summary.notes.push(format!(
            "{label}: psi above the EBR maximum at {larger} of {} deltas ({values:?} vs {ebr_max:?})",
            values.len()
        ));
    }
    Ok(records)
}

/// One coverage replication.
struct CoverageRep {
    /// `‖θ0 − θ̌‖`.
    err: f64,
    /// `r̂_κ` around `θ̌`.
    rhat: f64,
    /// `P(‖θ − θ̌‖ ≤ δ r | X)` on the radius draws, one per `δ`.
    psi: Vec<f64>,
    verified: bool,
}

fn coverage_reps(spec: &ExperimentSpec, cell: &Cell, signal: &Signal, reps: usize, seed: u64) -> Result<Vec<CoverageRep>> {
    let rate = oracle(signal, &cell.model).rate();
    let truth = signal.padded(cell.model.n_trunc);
    ordered(reps, |rep| {
        let r = rep as u64;
        let data = simulate(&cell.model, signal, rng::derive_seed(seed, &[tag::DATA, r]))?;
        let n = data.len();
        let post = DdmPosterior::mixture(data, spec.params, n)?;
        let (center, verified) = match spec.center() {
            CenterRule::DefaultCenter => {
                let s = rng::derive_seed(seed, &[tag::CENTER, r]);
                let dc = credible::default_center_unchecked(&post, DEFAULT_P_LEVEL, DEFAULT_VARSIGMA, spec.inner_mc, s)?;
                (dc.center, dc.verified)
            }
            CenterRule::PosteriorMean => (post.mean(), true),
            CenterRule::TrueParameter => (truth.clone(), true),
        };
        let s = rng::derive_seed(seed, &[tag::RADIUS, r]);
        let dist = credible::shared_distances(&post, &[&center], spec.inner_mc, s).pop().unwrap_or_default();
        let psi = spec
            .delta_grid
            .iter()
            .map(|d| dist.iter().filter(|x| **x <= d * rate).count() as f64 / dist.len() as f64)
            .collect();
        let rhat = credible::quantile_radius(dist, spec.kappa).value;
        Ok(CoverageRep { err: credible::euclidean(&center, &truth), rhat, psi, verified })
    })
    .into_iter()
    .collect()
}

fn upper_quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[stats::upper_rank(q, v.len()) - 1]
}

fn coverage_size(spec: &mut ExperimentSpec, summary: &mut Summary) -> Result<Vec<CellRecord>> {
    let cells = signal_cells(spec)?;
    let member: Vec<Option<bool>> = cells
        .iter()
        .map(|c| c.signal.as_ref().ok().map(|s| ebr_check(s, &c.model, spec.tau).member))
        .collect();
    if spec.calibration.inflation.is_none() || spec.calibration.size_threshold.is_none() {
        let s: &ExperimentSpec = spec;
        let pilot: Vec<Option<Vec<CoverageRep>>> = ordered(cells.len(), |k| {
            let c = &cells[k];
            let sig = c.signal.as_ref().ok()?;
            coverage_reps(s, c, sig, s.pilot_reps, c.pilot_seed).ok()
        });
        let any_member = member.contains(&Some(true));
        let mut inflation: f64 = 0.0;
        let mut size: f64 = 0.0;
        for (k, reps) in pilot.iter().enumerate() {
            let Some(reps) = reps else { continue };
            let rate = oracle(cells[k].signal.as_ref().expect("built"), &cells[k].model).rate();
            if member[k] == Some(true) || !any_member {
                let ratios = reps.iter().map(|r| r.err / r.rhat).collect();
                inflation = inflation.max(upper_quantile(ratios, PILOT_COVERAGE_QUANTILE));
            }
            size = size.max(upper_quantile(reps.iter().map(|r| r.rhat / rate).collect(), PILOT_SIZE_QUANTILE));
        }
        if spec.calibration.inflation.is_none() {
            spec.calibration.inflation = Some(inflation);
            summary.notes.push(format!(
                "inflation C = {inflation:.6} from the pilot {PILOT_COVERAGE_QUANTILE}-quantile of |theta0 - center|/r_hat over EBR cells ({} reps each)",
                spec.pilot_reps
            ));
        }
        if spec.calibration.size_threshold.is_none() {
            spec.calibration.size_threshold = Some(size);
            summary.notes.push(format!(
                "size threshold c = {size:.6} from the pilot {PILOT_SIZE_QUANTILE}-quantile of r_hat/r over all cells"
            ));
        }
    }
    let inflation = spec.calibration.inflation.expect("set above");
    let size_c = spec.calibration.size_threshold.expect("set above");
    let s: &ExperimentSpec = spec;
    let main: Vec<Result<Vec<CoverageRep>>> = ordered(cells.len(), |k| {
        let c = &cells[k];
        let sig = c.signal()?;
        coverage_reps(s, c, sig, s.reps, c.seed)
    });

    let mut records = Vec::new();
    let mut ebr_cov: Vec<(f64, f64)> = Vec::new();
    let mut non_ebr: Vec<(String, f64, f64)> = Vec::new();
    for ((cell, res), is_member) in cells.iter().zip(main).zip(&member) {
        let reps = match res {
            Ok(r) => r,
            Err(e) => {
                summary.check(format!("coverage:{}", cell.label()), false, e.to_string());
                records.push(cell.failure("coverage", &e));
                continue;
            }
        };
        let n = reps.len();
        let signal = cell.signal.as_ref().expect("built");
        let rate = oracle(signal, &cell.model).rate();
        let ebr = ebr_check(signal, &cell.model, spec.tau);
        records.push(cell.record("ebr-ratio", None, ebr.ratio, 0.0));
        let covered = reps.iter().filter(|r| r.err <= inflation * r.rhat).count();
        let (cov, cov_se) = stats::proportion(covered, n);
        records.push(cell.record("coverage", Some(inflation), cov, cov_se));
        let (miss, miss_se) = (1.0 - cov, cov_se);
        let (ver, ver_se) = stats::proportion(reps.iter().filter(|r| r.verified).count(), n);
        records.push(cell.record("center-verified", None, ver, ver_se));
        let (sz, sz_se) = stats::proportion(reps.iter().filter(|r| r.rhat >= size_c * rate).count(), n);
        records.push(cell.record("size-calibrated", Some(size_c), sz, sz_se));
        summary.check(
            format!("size:{}", cell.label()),
            sz <= SIZE_TARGET,
            format!("P(r_hat >= {size_c:.4} r) = {sz:.4} ± {sz_se:.4}"),
        );
        for &c in &spec.c_grid {
            let (f, se) = stats::proportion(reps.iter().filter(|r| r.rhat >= c * rate).count(), n);
            records.push(cell.record("size", Some(c), f, se));
        }
        for (k, &delta) in spec.delta_grid.iter().enumerate() {
            let md = inflation * delta;
            let (phi2, phi2_se) = stats::proportion(reps.iter().filter(|r| r.err >= md * rate).count(), n);
            let (psi, psi_se) = stats::mean_and_se(&reps.iter().map(|r| r.psi[k]).collect::<Vec<_>>());
            let bound = miss_bound(phi2, psi, spec.kappa);
            records.push(cell.record("phi2", Some(delta), phi2, phi2_se));
            records.push(cell.record("psi", Some(delta), psi, psi_se));
            records.push(cell.record("miss-bound", Some(delta), bound, 0.0));
            let se = (miss_se.powi(2) + phi2_se.powi(2) + (psi_se / (1.0 - spec.kappa)).powi(2)).sqrt();
            summary.check(
                format!("miss-vs-bound:{}:delta={delta}", cell.label()),
                miss <= bound + 3.0 * se,
                format!("miss {miss:.4}, bound {bound:.4} (phi2 {phi2:.4}, psi {psi:.4})"),
            );
        }
        if *is_member == Some(true) {
            summary.check(
                format!("coverage:{}", cell.label()),
                cov >= COVERAGE_TARGET,
                format!("coverage {cov:.4} ± {cov_se:.4} at C = {inflation:.4}"),
            );
            ebr_cov.push((cov, cov_se));
        } else {
            non_ebr.push((cell.label(), cov, cov_se));
        }
    }
    if let Some(&(min_cov, min_se)) = ebr_cov.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
        for (label, cov, se) in non_ebr {
            let gap = min_cov - cov;
            let combined = (se * se + min_se * min_se).sqrt();
            summary.check(
                format!("deceptive-breakdown:{label}"),
                gap > 3.0 * combined,
                format!("coverage {cov:.4} vs EBR minimum {min_cov:.4}; gap {gap:.4}, 3 SE {:.4}", 3.0 * combined),
            );
        }
    }
    Ok(records)
}

struct ShrinkGaps {
    mixture_vs_truth: f64,
    shrunk_vs_scaled: f64,
    shrunk_vs_truth: f64,
}

fn overshrinkage(spec: &ExperimentSpec, summary: &mut Summary) -> Result<Vec<CellRecord>> {
    let cells = signal_cells(spec)?;
    let l = spec.params.shrink();
    let results: Vec<Result<(usize, Vec<ShrinkGaps>)>> = ordered(cells.len(), |k| {
        let cell = &cells[k];
        let signal = cell.signal()?;
        let i_bar = surrogate_oracle(signal, &cell.model).i_bar;
        let gaps = ordered(spec.reps, |rep| {
            let data = simulate(&cell.model, signal, rng::derive_seed(cell.seed, &[tag::DATA, rep as u64]))?;
            let n = data.len();
            let mix = DdmPosterior::mixture(data.clone(), spec.params, n)?.mean();
            let shrunk = DdmPosterior::shrunk_full_bayes(data, spec.params, n)?.mean();
            let mut g = ShrinkGaps { mixture_vs_truth: 0.0, shrunk_vs_scaled: 0.0, shrunk_vs_truth: 0.0 };
            for i in 1..=i_bar {
                let t = signal.coeff(i);
                if t == 0.0 {
                    continue;
                }
                g.mixture_vs_truth = g.mixture_vs_truth.max(((mix[i - 1] - t) / t).abs());
                g.shrunk_vs_scaled = g.shrunk_vs_scaled.max(((shrunk[i - 1] - l * t) / (l * t)).abs());
                g.shrunk_vs_truth = g.shrunk_vs_truth.max(((shrunk[i - 1] - t) / t).abs());
            }
            Ok(g)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok((i_bar, gaps))
    });
    let mut records = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        let (i_bar, gaps) = match res {
            Ok(r) => r,
            Err(e) => {
                summary.check(format!("overshrinkage:{}", cell.label()), false, e.to_string());
                records.push(cell.failure("mixture-gap", &e));
                continue;
            }
        };
        records.push(cell.record("i-bar", None, i_bar as f64, 0.0));
        let pick: [(&str, fn(&ShrinkGaps) -> f64); 3] = [
            ("mixture-gap", |g| g.mixture_vs_truth),
            ("shrunk-gap-scaled", |g| g.shrunk_vs_scaled),
            ("shrunk-gap-truth", |g| g.shrunk_vs_truth),
        ];
        let mut worst = [0.0f64; 3];
        for (k, (metric, f)) in pick.iter().enumerate() {
            let v: Vec<f64> = gaps.iter().map(f).collect();
            worst[k] = v.iter().copied().fold(0.0, f64::max);
            let (m, se) = stats::mean_and_se(&v);
            records.push(cell.record(metric, None, m, se));
        }
        summary.check(
            format!("mixture-near-truth:{}", cell.label()),
            worst[0] <= OVERSHRINK_TOLERANCE,
            format!("worst relative gap {:.3e} on i <= {i_bar}", worst[0]),
        );
        summary.check(
            format!("shrunk-near-scaled-truth:{}", cell.label()),
            worst[1] <= OVERSHRINK_TOLERANCE,
            format!("worst relative gap to L*theta0 {:.3e}, to theta0 {:.4} (1 - L = {:.4})", worst[1], worst[2], 1.0 - l),
        );
    }
    Ok(records)
}

fn class_params(def: &ClassDef) -> String {
    match def {
        ClassDef::SobolevEllipsoid { beta, q } | ClassDef::SobolevHyperrectangle { beta, q } => format!("beta={beta};q={q}"),
        ClassDef::AnalyticEllipsoid { c, d, q } => format!("c={c};d={d};q={q}"),
        ClassDef::ParametricHyperrectangle { n0, q } => format!("n0={n0};q={q}"),
        ClassDef::Ellipsoid { a } | ClassDef::Hyperrectangle { a } => format!("len={}", a.len()),
    }
}

fn scale_adaptation(spec: &ExperimentSpec, summary: &mut Summary) -> Result<Vec<CellRecord>> {
    let mut cells = Vec::new();
    for (ci, def) in spec.classes.iter().enumerate() {
        for (ei, &epsilon) in spec.epsilons.iter().enumerate() {
            cells.push((def, spec.model(epsilon)?, rng::derive_seed(spec.seed, &[ci as u64, ei as u64])));
        }
    }
    let results: Vec<Result<crate::oracle::CoversReport>> = ordered(cells.len(), |k| {
        let (def, model, seed) = &cells[k];
        covers_check(&def.materialize(model.n_trunc), model, spec.reps, *seed)
    });
    let mut records = Vec::new();
    for ((def, model, seed), res) in cells.iter().zip(results) {
        let base = CellRecord {
            metric: String::new(),
            signal_kind: def.name().to_string(),
            signal_params: class_params(def),
            epsilon: model.epsilon,
            grid_value: None,
            statistic: f64::NAN,
            std_error: 0.0,
            seed: *seed,
            error: None,
        };
        let label = format!("{}[{}]@eps={}", base.signal_kind, base.signal_params, model.epsilon);
        match res {
            Ok(rep) => {
                records.push(CellRecord { metric: "worst-ratio".into(), statistic: rep.worst_ratio, ..base.clone() });
                records.push(CellRecord { metric: "linear-cover".into(), statistic: rep.linear.worst_ratio, ..base });
                summary.check(
                    format!("covers:{label}"),
                    rep.passed,
                    format!(
                        "worst r^2/R^2 {:.4} (bound {}), linear ratio {:.4}",
                        rep.worst_ratio, rep.bound_constant, rep.linear.worst_ratio
                    ),
                );
            }
            Err(e) => {
                summary.check(format!("covers:{label}"), false, e.to_string());
                records.push(CellRecord { metric: "worst-ratio".into(), error: Some(e.to_string()), ..base });
            }
        }
    }
    Ok(records)
}
