//! Data-dependent-measure confidence balls for the mildly ill-posed Gaussian
//! sequence model `X_i = θ_i + ε i^p Z_i`.
//!
//! The crate covers the observation model and signal generators, oracle rates
//! and signal classes, the empirical-Bayes mixture measure over truncation
//! levels, credible balls built from it, Monte-Carlo condition diagnostics and
//! seeded experiment runners.

// `!(x >= lo)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod credible;
pub mod ddm;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sigma;
pub mod signal;
pub mod stats;

pub use credible::{
    default_ball, default_center, make_confidence_ball, radius_at_level, CredibleBall, DefaultBall, DefaultCenter,
    RadiusEstimate,
};
pub use ddm::{
    crit, crit_argmin, eb_index, full_bayes_weights, mixture_weights, posterior_mean, validate_params, DdmParams,
    DdmPosterior, MixtureWeights, ParamDiagnostics, PosteriorDraw, PosteriorVariant,
};
pub use diagnostics::{
    ball_volume_bound, estimate_phi1, estimate_phi2, estimate_psi, oversmoothing_probability, proposition_bounds,
    CenterRule, ConditionEstimate, DiagnosticSetup, McBudget, Measure, PsiScaling,
};
pub use error::{Error, Result};
pub use experiments::{
    emit_plot_data, read_report, run_experiment, write_outputs, write_report, CellRecord, ExperimentKind,
    ExperimentReport, ExperimentSpec, ReportFormat, SignalSpec,
};
pub use model::{simulate, ModelConfig, ObservedData, DEFAULT_N_TRUNC};
pub use oracle::{
    covers_check, ebr_check, minimax_rate, oracle, pt_check, pt_to_ebr_tau, surrogate_oracle, ClassDef, ClassShape,
    EbrCheck, OracleResult, PtParams, SmoothnessClass, SurrogateOracleResult,
};
pub use sigma::{verify_sigma_conditions, SigmaConstants, SigmaGrid, SigmaReport};
pub use signal::{generate_signal, Signal, SignalKind, SignalParams};
