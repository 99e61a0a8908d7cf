//! Evaluation interfaces for equality-constrained problems, deterministic and
//! finite-sum, with instrumented oracle-call counters.
//!
//! Problem definitions are immutable and shareable; every solver run wraps a
//! definition in its own oracle so counters are owned per run. Evaluation has
//! no side effect other than counter increments.

use std::cell::Cell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SqpError};
use crate::linalg;

/// Deterministic problem: min f(x) s.t. c(x) = 0 with m <= n.
pub trait Problem: Send + Sync {
    fn primal_dim(&self) -> usize;
    fn constraint_dim(&self) -> usize;
    fn objective(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Jacobian of c, laid out m x n.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Hessian of the i-th constraint, i in 0..m.
    fn constraint_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Finite-sum objective f = (1/N) sum f_i with shared deterministic constraints.
pub trait FiniteSumProblem: Send + Sync {
    fn primal_dim(&self) -> usize;
    fn constraint_dim(&self) -> usize;
    fn component_count(&self) -> usize;
    fn component_objective(&self, i: usize, x: &DVector<f64>) -> f64;
    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64>;
    fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64>;
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn constraint_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Per-run evaluation counters. Finite-sum batches add fractional weights
/// (a batch of size |S| counts |S|/N full-evaluation equivalents).
#[derive(Debug, Default)]
pub struct OracleCounters {
    function: Cell<f64>,
    gradient: Cell<f64>,
    hessian: Cell<f64>,
    constraint: Cell<f64>,
    jacobian: Cell<f64>,
    constraint_hessian: Cell<f64>,
}

/// Immutable snapshot of [`OracleCounters`].
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleCounts {
    pub function: f64,
    pub gradient: f64,
    pub hessian: f64,
    pub constraint: f64,
    pub jacobian: f64,
    pub constraint_hessian: f64,
}

impl OracleCounts {
    pub fn delta(&self, earlier: &OracleCounts) -> OracleCounts {
        OracleCounts {
            function: self.function - earlier.function,
            gradient: self.gradient - earlier.gradient,
            hessian: self.hessian - earlier.hessian,
            constraint: self.constraint - earlier.constraint,
            jacobian: self.jacobian - earlier.jacobian,
            constraint_hessian: self.constraint_hessian - earlier.constraint_hessian,
        }
    }
}

impl OracleCounters {
    pub fn snapshot(&self) -> OracleCounts {
        OracleCounts {
            function: self.function.get(),
            gradient: self.gradient.get(),
            hessian: self.hessian.get(),
            constraint: self.constraint.get(),
            jacobian: self.jacobian.get(),
            constraint_hessian: self.constraint_hessian.get(),
        }
    }

    pub fn reset(&self) {
        self.function.set(0.0);
        self.gradient.set(0.0);
        self.hessian.set(0.0);
        self.constraint.set(0.0);
        self.jacobian.set(0.0);
        self.constraint_hessian.set(0.0);
    }

    fn bump(cell: &Cell<f64>, weight: f64) {
        cell.set(cell.get() + weight);
    }
}

/// Primal-dual iterate w = (x, y).
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDual {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl PrimalDual {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            y: DVector::zeros(m),
        }
    }

    /// Stacked vector [x; y] of length n + m.
    pub fn stacked(&self) -> DVector<f64> {
        let mut w = DVector::zeros(self.x.len() + self.y.len());
        w.rows_mut(0, self.x.len()).copy_from(&self.x);
        w.rows_mut(self.x.len(), self.y.len()).copy_from(&self.y);
        w
    }

    /// Euclidean distance to another iterate in the stacked space.
    pub fn distance(&self, other: &PrimalDual) -> f64 {
        ((&self.x - &other.x).norm_squared() + (&self.y - &other.y).norm_squared()).sqrt()
    }
}

/// Counted evaluation wrapper around a deterministic problem definition.
pub struct ProblemOracle {
    problem: Arc<dyn Problem>,
    counters: OracleCounters,
}

impl ProblemOracle {
    pub fn new(problem: Arc<dyn Problem>) -> Self {
        Self {
            problem,
            counters: OracleCounters::default(),
        }
    }

    /// Same problem definition with fresh zeroed counters.
    pub fn fresh(&self) -> Self {
        Self::new(self.problem.clone())
    }

    pub fn problem(&self) -> &Arc<dyn Problem> {
        &self.problem
    }

    pub fn primal_dim(&self) -> usize {
        self.problem.primal_dim()
    }

    pub fn constraint_dim(&self) -> usize {
        self.problem.constraint_dim()
    }

    pub fn counters(&self) -> &OracleCounters {
        &self.counters
    }

    pub fn f(&self, x: &DVector<f64>) -> f64 {
        OracleCounters::bump(&self.counters.function, 1.0);
        self.problem.objective(x)
    }

    pub fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        OracleCounters::bump(&self.counters.gradient, 1.0);
        self.problem.gradient(x)
    }

    /// Objective Hessian, symmetrized.
    pub fn h(&self, x: &DVector<f64>) -> DMatrix<f64> {
        OracleCounters::bump(&self.counters.hessian, 1.0);
        linalg::symmetrize(&self.problem.hessian(x))
    }

    pub fn c(&self, x: &DVector<f64>) -> DVector<f64> {
        OracleCounters::bump(&self.counters.constraint, 1.0);
        self.problem.constraints(x)
    }

    pub fn jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        OracleCounters::bump(&self.counters.jacobian, 1.0);
        self.problem.jacobian(x)
    }

    pub fn c_hess(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        OracleCounters::bump(&self.counters.constraint_hessian, 1.0);
        linalg::symmetrize(&self.problem.constraint_hessian(i, x))
    }
}

/// Counted evaluation wrapper around a finite-sum problem definition.
pub struct FiniteSumOracle {
    problem: Arc<dyn FiniteSumProblem>,
    counters: OracleCounters,
}

impl FiniteSumOracle {
    pub fn new(problem: Arc<dyn FiniteSumProblem>) -> Self {
        Self {
            problem,
            counters: OracleCounters::default(),
        }
    }

    pub fn fresh(&self) -> Self {
        Self::new(self.problem.clone())
    }

    pub fn problem(&self) -> &Arc<dyn FiniteSumProblem> {
        &self.problem
    }

    pub fn primal_dim(&self) -> usize {
        self.problem.primal_dim()
    }

    pub fn constraint_dim(&self) -> usize {
        self.problem.constraint_dim()
    }

    pub fn component_count(&self) -> usize {
        self.problem.component_count()
    }

    pub fn counters(&self) -> &OracleCounters {
        &self.counters
    }

    fn weight(&self, batch: usize) -> f64 {
        batch as f64 / self.problem.component_count() as f64
    }

    /// Mean of f_i over the index set. Indices are folded in the given order.
    pub fn batch_f(&self, set: &[usize], x: &DVector<f64>) -> Result<f64> {
        if set.is_empty() {
            return Err(SqpError::EmptySampleSet);
        }
        OracleCounters::bump(&self.counters.function, self.weight(set.len()));
        let sum = set
            .iter()
            .fold(0.0, |acc, &i| acc + self.problem.component_objective(i, x));
        Ok(sum / set.len() as f64)
    }

    pub fn batch_g(&self, set: &[usize], x: &DVector<f64>) -> Result<DVector<f64>> {
        if set.is_empty() {
            return Err(SqpError::EmptySampleSet);
        }
        OracleCounters::bump(&self.counters.gradient, self.weight(set.len()));
        let mut sum = DVector::zeros(self.primal_dim());
        for &i in set {
            sum += self.problem.component_gradient(i, x);
        }
        Ok(sum / set.len() as f64)
    }

    pub fn batch_h(&self, set: &[usize], x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if set.is_empty() {
            return Err(SqpError::EmptySampleSet);
        }
        OracleCounters::bump(&self.counters.hessian, self.weight(set.len()));
        let n = self.primal_dim();
        let mut sum = DMatrix::zeros(n, n);
        for &i in set {
            sum += self.problem.component_hessian(i, x);
        }
        Ok(linalg::symmetrize(&(sum / set.len() as f64)))
    }

    pub fn c(&self, x: &DVector<f64>) -> DVector<f64> {
        OracleCounters::bump(&self.counters.constraint, 1.0);
        self.problem.constraints(x)
    }

    pub fn jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        OracleCounters::bump(&self.counters.jacobian, 1.0);
        self.problem.jacobian(x)
    }

    pub fn c_hess(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        OracleCounters::bump(&self.counters.constraint_hessian, 1.0);
        linalg::symmetrize(&self.problem.constraint_hessian(i, x))
    }

    /// Deterministic view of the summed problem. Means are folded over the
    /// full index set in ascending order, so full-batch estimates and this
    /// view produce bit-identical values.
    pub fn to_deterministic(&self) -> ProblemOracle {
        ProblemOracle::new(Arc::new(MeanProblem {
            inner: self.problem.clone(),
        }))
    }
}

/// Deterministic adapter averaging all components of a finite-sum problem.
struct MeanProblem {
    inner: Arc<dyn FiniteSumProblem>,
}

impl MeanProblem {
    fn full_set(&self) -> Vec<usize> {
        (0..self.inner.component_count()).collect()
    }
}

impl Problem for MeanProblem {
    fn primal_dim(&self) -> usize {
        self.inner.primal_dim()
    }

    fn constraint_dim(&self) -> usize {
        self.inner.constraint_dim()
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let set = self.full_set();
        let sum = set
            .iter()
            .fold(0.0, |acc, &i| acc + self.inner.component_objective(i, x));
        sum / set.len() as f64
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let set = self.full_set();
        let mut sum = DVector::zeros(self.inner.primal_dim());
        for &i in &set {
            sum += self.inner.component_gradient(i, x);
        }
        sum / set.len() as f64
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let set = self.full_set();
        let n = self.inner.primal_dim();
        let mut sum = DMatrix::zeros(n, n);
        for &i in &set {
            sum += self.inner.component_hessian(i, x);
        }
        sum / set.len() as f64
    }

    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.constraints(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.jacobian(x)
    }

    fn constraint_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.constraint_hessian(i, x)
    }
}

/// Gradient of the Lagrangian L(x, y) = f(x) + y'c(x): returns g + J'y.
pub fn evaluate_lagrangian_gradient(
    oracle: &ProblemOracle,
    w: &PrimalDual,
) -> Result<DVector<f64>> {
    check_dims(oracle, w)?;
    let g = oracle.g(&w.x);
    let j = oracle.jac(&w.x);
    Ok(g + j.transpose() * &w.y)
}

/// Hessian of the Lagrangian: W = H + sum_i y_i (grad^2 c_i), symmetrized.
pub fn evaluate_lagrangian_hessian(oracle: &ProblemOracle, w: &PrimalDual) -> Result<DMatrix<f64>> {
    check_dims(oracle, w)?;
    let mut total = oracle.h(&w.x);
    for i in 0..oracle.constraint_dim() {
        let ci = oracle.c_hess(i, &w.x);
        total += ci * w.y[i];
    }
    Ok(linalg::symmetrize(&total))
}

fn check_dims(oracle: &ProblemOracle, w: &PrimalDual) -> Result<()> {
    if w.x.len() != oracle.primal_dim() {
        return Err(SqpError::DimensionMismatch {
            context: "primal vector",
            expected: oracle.primal_dim(),
            got: w.x.len(),
        });
    }
    if w.y.len() != oracle.constraint_dim() {
        return Err(SqpError::DimensionMismatch {
            context: "dual vector",
            expected: oracle.constraint_dim(),
            got: w.y.len(),
        });
    }
    Ok(())
}

/// Maximum relative errors of the analytic derivatives against central finite
/// differences at `x` with step `step`.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    pub gradient: f64,
    pub hessian: f64,
    pub jacobian: f64,
    pub constraint_hessian: f64,
}

impl FdReport {
    pub fn max_first_order(&self) -> f64 {
        self.gradient.max(self.jacobian)
    }

    pub fn max_second_order(&self) -> f64 {
        self.hessian.max(self.constraint_hessian)
    }
}

/// Central-difference audit of g, H, J and all constraint Hessians.
///
/// Relative errors are measured entrywise in the max norm, scaled by
/// max(1, analytic max-norm). The report is deterministic given (x, step).
pub fn finite_difference_check(
    oracle: &ProblemOracle,
    x: &DVector<f64>,
    step: f64,
) -> Result<FdReport> {
    if step <= 0.0 {
        return Err(SqpError::InvalidConfig(
            "finite-difference step must be positive".into(),
        ));
    }
    let n = oracle.primal_dim();
    let m = oracle.constraint_dim();
    if x.len() != n {
        return Err(SqpError::DimensionMismatch {
            context: "finite-difference point",
            expected: n,
            got: x.len(),
        });
    }

    let g = oracle.g(x);
    let h = oracle.h(x);
    let jac = oracle.jac(x);
    let c_hess: Vec<DMatrix<f64>> = (0..m).map(|i| oracle.c_hess(i, x)).collect();

    let mut g_fd = DVector::zeros(n);
    let mut h_fd = DMatrix::zeros(n, n);
    let mut j_fd = DMatrix::zeros(m, n);
    let mut ch_fd: Vec<DMatrix<f64>> = (0..m).map(|_| DMatrix::zeros(n, n)).collect();

    for col in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[col] += step;
        xm[col] -= step;

        g_fd[col] = (oracle.f(&xp) - oracle.f(&xm)) / (2.0 * step);

        let dg = (oracle.g(&xp) - oracle.g(&xm)) / (2.0 * step);
        h_fd.set_column(col, &dg);

        let dc = (oracle.c(&xp) - oracle.c(&xm)) / (2.0 * step);
        j_fd.set_column(col, &dc);

        let dj = (oracle.jac(&xp) - oracle.jac(&xm)) / (2.0 * step);
        // row i of dJ/dx_col is column `col` of the i-th constraint Hessian
        for (i, target) in ch_fd.iter_mut().enumerate() {
            target.set_column(col, &dj.row(i).transpose());
        }
    }

    let rel = |diff: f64, scale: f64| diff / scale.max(1.0);
    let gradient = rel(linalg::inf_norm(&(&g_fd - &g)), linalg::inf_norm(&g));
    let hessian = rel(linalg::max_abs(&(&h_fd - &h)), linalg::max_abs(&h));
    let jacobian = rel(linalg::max_abs(&(&j_fd - &jac)), linalg::max_abs(&jac));
    let constraint_hessian = (0..m)
        .map(|i| {
            rel(
                linalg::max_abs(&(&ch_fd[i] - &c_hess[i])),
                linalg::max_abs(&c_hess[i]),
            )
        })
        .fold(0.0, f64::max);

    Ok(FdReport {
        gradient,
        hessian,
        jacobian,
        constraint_hessian,
    })
}
