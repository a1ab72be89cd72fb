//! `ddm`: simulate data, inspect posteriors and balls, classify signals and
//! run the seeded experiment suite.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ddm_core::diagnostics::ball_volume_bound;
use ddm_core::oracle::PtParams;
use ddm_core::{
    default_ball, ebr_check, generate_signal, oracle, pt_check, pt_to_ebr_tau, run_experiment, simulate,
    surrogate_oracle, validate_params, verify_sigma_conditions, write_outputs, DdmParams, DdmPosterior,
    ExperimentKind, ExperimentSpec, ModelConfig, ObservedData, Signal, SignalKind, SignalParams, SigmaGrid,
};

/// Exit code for a failed check, as opposed to bad input (1).
const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ddm", version, about = "Data-dependent-measure confidence balls for the Gaussian sequence model")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "DDM_THREADS")]
    threads: Option<usize>,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a signal and print it as JSON.
    Signal(SignalArgs),
    /// Simulate observations for a signal.
    Simulate(SimulateArgs),
    /// Posterior weights, Î and posterior mean for observed data.
    Posterior(PosteriorArgs),
    /// Default credible ball for observed data.
    Ball(BallArgs),
    /// Oracle, surrogate oracle and class membership of a signal.
    Classify(ClassifyArgs),
    /// Run an experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Check the noise-sequence conditions, the hyperparameter regimes and the
    /// ball-volume bound.
    VerifyConstants(VerifyArgs),
}

#[derive(Args, Debug)]
struct SignalArgs {
    #[arg(long)]
    kind: SignalKind,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    n0: Option<usize>,
    /// Noise level a deceptive signal is tuned against.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1024)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Truncation level; defaults to the signal length.
    #[arg(long)]
    n: Option<usize>,
}

impl ModelArgs {
    fn model(&self, signal_len: usize) -> Result<ModelConfig> {
        Ok(ModelConfig::new(self.eps, self.p, self.n.unwrap_or(signal_len))?)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    signal: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    #[arg(long, default_value_t = 0.04)]
    alpha: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<DdmParams> {
        Ok(DdmParams::new(self.k, self.alpha)?)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Mixture,
    EbIndex,
    FullBayesShrunk,
}

#[derive(Args, Debug)]
struct PosteriorArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value_t = Variant::Mixture)]
    variant: Variant,
    /// Largest truncation level; defaults to the data length.
    #[arg(long)]
    i_max: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BallArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    /// Inflation factor M.
    #[arg(long, default_value_t = 1.0)]
    inflation: f64,
    #[arg(long, default_value_t = 2000)]
    mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    signal: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// EBR threshold.
    #[arg(long, default_value_t = 2.0)]
    tau: f64,
    #[arg(long, default_value_t = 2.0)]
    l0: f64,
    #[arg(long, default_value_t = 1)]
    n0: usize,
    #[arg(long, default_value_t = 2.0)]
    rho0: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the default spec of this kind when no config is given.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Output root; results go to `<out>/<kind>/<timestamp>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 unless every check passes.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    #[arg(long, default_value_t = 10_000)]
    nmax: usize,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn load_signal(path: &Path) -> Result<Signal> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Signal::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_data(path: &Path) -> Result<ObservedData> {
    let raw: ObservedData = read_json(path)?;
    Ok(ObservedData::new(raw.x, raw.model, raw.seed)?)
}

fn cmd_signal(a: &SignalArgs) -> Result<()> {
    let params = SignalParams {
        beta: a.beta,
        q: a.q,
        c: a.c,
        d: a.d,
        n0: a.n0,
        epsilon: a.eps,
        p: a.p,
        ..SignalParams::default()
    };
    let signal = generate_signal(a.kind, &params, a.n, a.seed)?;
    emit(&signal, a.out.as_deref())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let signal = load_signal(&a.signal)?;
    let model = a.model.model(signal.len())?;
    emit(&simulate(&model, &signal, a.seed)?, a.out.as_deref())
}

#[derive(Serialize)]
struct PosteriorSummary {
    variant: &'static str,
    i_max: usize,
    eb_index: usize,
    weights: Vec<f64>,
    mean: Vec<f64>,
}

fn cmd_posterior(a: &PosteriorArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let i_max = a.i_max.unwrap_or(data.len());
    let params = a.params.params()?;
    let (post, variant) = match a.variant {
        Variant::Mixture => (DdmPosterior::mixture(data, params, i_max)?, "mixture"),
        Variant::EbIndex => (DdmPosterior::at_eb_index(data, params, i_max)?, "eb-index"),
        Variant::FullBayesShrunk => (DdmPosterior::shrunk_full_bayes(data, params, i_max)?, "full-bayes-shrunk"),
    };
    let summary = PosteriorSummary {
        variant,
        i_max,
        eb_index: post.eb_index(),
        weights: post.weights.weights(),
        mean: post.mean(),
    };
    emit(&summary, a.out.as_deref())
}

fn cmd_ball(a: &BallArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let n = data.len();
    let post = DdmPosterior::mixture(data, a.params.params()?, n)?;
    let ball = default_ball(&post, a.kappa, a.inflation, a.mc, a.seed)?;
    if !ball.center.verified {
        log::warn!(
            "center check failed: mass {:.4} below {:.4}",
            ball.center.verified_mass,
            ball.center.p_level
        );
    }
    emit(&ball, a.out.as_deref())
}

#[derive(Serialize)]
struct Classification {
    oracle: ddm_core::OracleResult,
    surrogate: ddm_core::SurrogateOracleResult,
    ebr: ddm_core::EbrCheck,
    pt: PtReport,
}

#[derive(Serialize)]
struct PtReport {
    params: PtParams,
    member: bool,
    implied_ebr_tau: f64,
}

fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    let signal = load_signal(&a.signal)?;
    let model = a.model.model(signal.len())?;
    if signal.len() > model.n_trunc {
        bail!("signal length {} exceeds n = {}", signal.len(), model.n_trunc);
    }
    let pt = PtParams::new(a.l0, a.n0, a.rho0)?;
    let report = Classification {
        oracle: oracle(&signal, &model),
        surrogate: surrogate_oracle(&signal, &model),
        ebr: ebr_check(&signal, &model, a.tau),
        pt: PtReport { params: pt, member: pt_check(&signal, &pt), implied_ebr_tau: pt_to_ebr_tau(&pt, model.p) },
    };
    emit(&report, a.out.as_deref())
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<bool> {
    let mut spec = match (&a.config, &a.kind) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentSpec::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(kind)) => ExperimentSpec::new(kind.parse::<ExperimentKind>()?),
        (None, None) => bail!("either --config or --kind is required"),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(reps) = a.reps {
        spec.reps = reps;
    }
    if let Some(out) = &a.out {
        spec.output = Some(out.clone());
    }
    let report = run_experiment(&spec)?;
    let root = report.spec.output.clone().unwrap_or_else(|| PathBuf::from("results"));
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S").to_string();
    let dir = root.join(report.spec.kind.as_str()).join(stamp);
    write_outputs(&report, &dir).with_context(|| format!("writing results to {}", dir.display()))?;

    let mut stdout = std::io::stdout().lock();
    for check in &report.summary.checks {
        let tag = if check.passed { "PASS" } else { "FAIL" };
        writeln!(stdout, "{tag} {} ({})", check.name, check.detail)?;
    }
    for note in &report.summary.notes {
        writeln!(stdout, "note: {note}")?;
    }
    writeln!(stdout, "results: {}", dir.display())?;
    Ok(report.summary.passed())
}

#[derive(Serialize)]
struct VerifyReport {
    sigma: ddm_core::SigmaReport,
    params: ddm_core::ParamDiagnostics,
    ball_volume_checks: usize,
    ball_volume_violations: Vec<(usize, f64)>,
}

fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let model = ModelConfig::new(1.0, a.p, 1)?;
    let sigma = verify_sigma_conditions(&model, a.nmax, &SigmaGrid::default())?;
    let params = validate_params(a.params.k, a.params.alpha, a.p)?;
    let mut violations = Vec::new();
    let mut checks = 0;
    for k in 1..=200 {
        for r in [0.1, 1.0, 10.0] {
            checks += 1;
            if !ball_volume_bound(k, r)?.holds() {
                violations.push((k, r));
            }
        }
    }
    let ok = sigma.passed() && violations.is_empty();
    let report = VerifyReport { sigma, params, ball_volume_checks: checks, ball_volume_violations: violations };
    emit(&report, a.out.as_deref())?;
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Signal(a) => cmd_signal(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Posterior(a) => cmd_posterior(a).map(|_| true),
        Command::Ball(a) => cmd_ball(a).map(|_| true),
        Command::Classify(a) => cmd_classify(a).map(|_| true),
        Command::Experiment(a) => {
            let ok = cmd_experiment(a)?;
            Ok(ok || !a.check)
        }
        Command::VerifyConstants(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
