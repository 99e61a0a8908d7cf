//! Shared error type for solver, problem, and harness operations.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SqpError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Constraint Jacobian is numerically rank deficient (LICQ violated).
    #[error("LICQ failure: smallest singular value {smallest:.3e} vs largest {largest:.3e}")]
    LicqFailure { smallest: f64, largest: f64 },

    /// Regularization exceeded its cap without making the reduced Hessian
    /// positive definite.
    #[error("ill-posed subproblem: regularization {lambda:.3e} exceeded cap {cap:.3e}")]
    IllPosed { lambda: f64, cap: f64 },

    #[error("singular KKT system: dense factorization failed")]
    SingularSystem,

    #[error("line search failed after {backtracks} backtracks (alpha = {alpha:.3e})")]
    LineSearchFailure { backtracks: usize, alpha: f64 },

    #[error(
        "MINRES breakdown at iteration {iteration}: zero Lanczos beta with residual {residual:.3e}"
    )]
    MinresBreakdown { iteration: usize, residual: f64 },

    #[error("operator is not symmetric: |u'Mv - v'Mu| = {defect:.3e} exceeds tolerance")]
    AsymmetricOperator { defect: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("rank-deficient matrix: {0}")]
    RankDeficient(String),

    #[error("sample size {size} out of range [1, {n}]")]
    SampleSizeOutOfRange { size: usize, n: usize },

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("schedule violates condition: {0}")]
    ScheduleViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown key: {0}")]
    UnknownKey(String),

    #[error("missing reference solution for {0}")]
    MissingReference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SqpError>;
