//! Personalized two-sided therapeutic dose intervals.
//!
//! Learns covariate-dependent dose intervals `[f_L(x), f_U(x)]` that keep
//! the probability of a favorable outcome above a chosen level, by
//! empirical risk minimization of a doubly-robust surrogate loss over a
//! product Gaussian-kernel function space, solved with a
//! difference-of-convex algorithm. Includes the indirect plug-in baseline,
//! cross-validation and cross-fitting pipelines, a simulation suite with a
//! closed-form oracle, and the full evaluation-metric battery.

pub mod data;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod nuisance;
pub mod optimizer;
pub mod pipeline;
pub mod simulation;
pub mod stats;

pub use data::{Dataset, HyperParams, IntervalRule, Observation, SolverControls, TaskSpec};
pub use error::{Error, Result};
pub use kernel::{eval_rule, gaussian_kernel, gram, rkhs_penalty, GramMatrix};
pub use loss::{
    loss_aipw, loss_indicator, loss_ipw, loss_surrogate, loss_surrogate_parts, objective_q,
    objective_q_parts, phi_eps, phi_parts, psi_eps, psi_parts, LossContext,
};
pub use metrics::{
    classification_metrics, contingency, interval_errors, invalid_proportion, Contingency,
    MetricsReport, RawInterval,
};
pub use nuisance::{
    fit_dose_probability, fit_propensity, g_plus_minus, integral_alpha_minus_mu, mu_eval,
    mu_split, propensity_density, DoseCurve, DoseProbModel, MuSplit, NuisanceModels,
    PropensityModel,
};
pub use optimizer::{
    convex_subproblem, dc_fit, dc_fit_constant_width, init_internal_division, DcTrace,
    InitCoefficients,
};
pub use pipeline::{
    cross_fit, cross_validate, fit_direct, indirect_pdi, postprocess, CrossFitEstimator,
    CvRecord, DirectVariant, FitConfig, FittedEstimator, IndirectPdi,
};
pub use simulation::{
    generate_dataset, oracle_pdi, run_experiment, DgpParams, EstimatorKind, ExperimentConfig,
    ExperimentTable,
};
