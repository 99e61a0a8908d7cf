//! Solvers for nonlinear equality-constrained optimization built on the
//! line-search SQP paradigm, with a modified sufficient-decrease condition
//! that admits unit steps near a solution, subsampled finite-sum objectives,
//! and a matrix-free MINRES variant of the step computation.
//!
//! The crate also ships the comparison methods (classical ℓ1-merit SQP,
//! second-order correction, watchdog, augmented-Lagrangian merit), a bank of
//! small analytic test problems, constrained logistic regression on
//! LIBSVM-format data, and a benchmark harness producing Dolan-Moré and
//! Morales performance profiles.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod kkt;
pub mod linalg;
pub mod merit;
pub mod minres;
pub mod problem;
pub mod sampling;
pub mod solver;
pub mod suite;

pub use error::SqpError;
pub use problem::{
    FiniteSumOracle, FiniteSumProblem, OracleCounters, OracleCounts, PrimalDual, Problem,
    ProblemOracle,
};
pub use solver::{SolveOutcome, SolveStatus, SolverConfig};
