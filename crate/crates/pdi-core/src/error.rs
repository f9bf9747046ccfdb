//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by dataset validation, model fitting, and evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dose out of range at row {index}: {value} is not in [0,1]")]
    DoseOutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("range indicator mismatch at row {index}: r does not equal 1(y in [t_lo, t_hi])")]
    IndicatorMismatch { index: usize },
    #[error("invalid desired range at row {index}: t_lo > t_hi")]
    InvalidThresholds { index: usize },
    #[error("non-finite field `{field}` at row {index}")]
    NonFinite { index: usize, field: &'static str },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperParam(String),
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("degenerate residual variance (sigma2 < 1e-12)")]
    DegenerateVariance,
    #[error("nonpositive dose {0} with log-dose propensity model")]
    NonpositiveDose(f64),
    #[error("logistic fit requires both indicator classes")]
    SingleClass,
    #[error("invalid interval: lower bound {ell} exceeds upper bound {u}")]
    InvalidInterval { ell: f64, u: f64 },
    #[error("surrogate bandwidth epsilon must be positive")]
    NonpositiveEpsilon,
    #[error("loss is only defined on monotone pairs (ell <= u)")]
    MonotonicityViolated,
    #[error("linear solve failed: matrix ill-conditioned beyond jitter")]
    SolveFailure,
    #[error("too few rows: {0}")]
    TooFewRows(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("oracle interval undefined for row {index}")]
    OracleUndefined { index: usize },
    #[error("contingency table is empty")]
    EmptyContingency,
    #[error("empty input")]
    EmptyInput,
    #[error("no dose interval attains the requested probability level")]
    NoInterval,
}

pub type Result<T> = std::result::Result<T, Error>;
