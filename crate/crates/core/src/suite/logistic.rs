//! Constrained binary logistic regression: a finite-sum log-loss objective
//! with one affine constraint block A1 x = a1 and one quadratic constraint
//! x' A2 x = a2.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SqpError};
use crate::problem::{FiniteSumOracle, FiniteSumProblem};

/// Data and constraint specification for one logistic instance.
#[derive(Debug, Clone)]
pub struct LogisticProblemSpec {
    /// N x n feature matrix.
    pub x_data: DMatrix<f64>,
    /// Labels in {-1, +1}.
    pub labels: DVector<f64>,
    /// Full-row-rank linear constraint block, m x n.
    pub a1: DMatrix<f64>,
    pub a1_rhs: DVector<f64>,
    /// Symmetric positive-definite quadratic constraint matrix with
    /// eigenvalues evenly spread over [1, 10].
    pub a2: DMatrix<f64>,
    pub a2_rhs: f64,
    pub seed: u64,
}

impl LogisticProblemSpec {
    /// Constraints generated from the seed: A1 and a1 with independent normal
    /// entries (configurable standard deviation), A2 = Q' D Q with Q a random
    /// orthogonal factor and D = diag(linspace(1, 10, n)), a2 = 5.
    pub fn from_data(
        x_data: DMatrix<f64>,
        labels: DVector<f64>,
        m_linear: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::from_data_with_std(x_data, labels, m_linear, seed, 1.0)
    }

    pub fn from_data_with_std(
        x_data: DMatrix<f64>,
        labels: DVector<f64>,
        m_linear: usize,
        seed: u64,
        linear_std: f64,
    ) -> Result<Self> {
        let n = x_data.ncols();
        if labels.len() != x_data.nrows() {
            return Err(SqpError::DimensionMismatch {
                context: "label count",
                expected: x_data.nrows(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(SqpError::InvalidConfig("labels must be -1 or +1".into()));
        }
        if m_linear >= n {
            return Err(SqpError::InvalidConfig(format!(
                "m_linear = {m_linear} must be < n = {n} to leave room for the quadratic row"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = DMatrix::from_fn(m_linear, n, |_, _| {
            linear_std * rng.sample::<f64, _>(StandardNormal)
        });
        let a1_rhs = DVector::from_fn(m_linear, |_, _| {
            linear_std * rng.sample::<f64, _>(StandardNormal)
        });

        // A2 = Q' D Q from a seeded QR of a Gaussian matrix
        let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = gauss.qr().q();
        let spread = DVector::from_fn(n, |i, _| {
            if n == 1 {
                1.0
            } else {
                1.0 + 9.0 * i as f64 / (n - 1) as f64
            }
        });
        let d = DMatrix::from_diagonal(&spread);
        let a2 = q.transpose() * d * &q;
        let a2 = (&a2 + a2.transpose()) * 0.5;

        let spec = Self {
            x_data,
            labels,
            a1,
            a1_rhs,
            a2,
            a2_rhs: 5.0,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Fully synthetic instance: standardized Gaussian features and labels
    /// from a noisy random linear separator.
    pub fn synthetic(n_samples: usize, n_features: usize, m_linear: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
        let scale = 1.0 / (n_features as f64).sqrt();
        let x_data = DMatrix::from_fn(n_samples, n_features, |_, _| {
            scale * rng.sample::<f64, _>(StandardNormal)
        });
        let beta = DVector::from_fn(n_features, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels = DVector::from_fn(n_samples, |i, _| {
            let noise: f64 = rng.sample::<f64, _>(StandardNormal);
            if x_data.row(i).transpose().dot(&beta) + 0.1 * noise >= 0.0 {
                1.0
            } else {
                -1.0
            }
        });
        Self::from_data(x_data, labels, m_linear, seed)
            .expect("synthetic generation satisfies the constructor invariants")
    }

    pub fn n_features(&self) -> usize {
        self.x_data.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.x_data.nrows()
    }

    fn validate(&self) -> Result<()> {
        let m = self.a1.nrows();
        if m > 0 {
            let svd = self.a1.clone().svd(false, false);
            let max_sv = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
            let min_sv = svd
                .singular_values
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            if svd.singular_values.len() < m || min_sv <= 1e-12 * max_sv.max(1.0) {
                return Err(SqpError::RankDeficient(format!(
                    "A1 rank deficient: singular values in [{min_sv:.3e}, {max_sv:.3e}]"
                )));
            }
        }
        Ok(())
    }
}

struct LogisticProblem {
    spec: LogisticProblemSpec,
}

impl LogisticProblem {
    fn margin(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.spec.labels[i] * self.spec.x_data.row(i).transpose().dot(x)
    }
}

/// log(1 + exp(-z)) computed without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Logistic sigmoid computed without overflow.
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl FiniteSumProblem for LogisticProblem {
    fn primal_dim(&self) -> usize {
        self.spec.n_features()
    }

    fn constraint_dim(&self) -> usize {
        self.spec.a1.nrows() + 1
    }

    fn component_count(&self) -> usize {
        self.spec.n_samples()
    }

    fn component_objective(&self, i: usize, x: &DVector<f64>) -> f64 {
        log1p_exp_neg(self.margin(i, x))
    }

    fn component_gradient(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let z = self.margin(i, x);
        let coef = -self.spec.labels[i] * sigmoid(-z);
        self.spec.x_data.row(i).transpose() * coef
    }

    fn component_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let z = self.margin(i, x);
        let coef = sigmoid(z) * sigmoid(-z);
        let row = self.spec.x_data.row(i);
        row.transpose() * row * coef
    }

    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.spec.a1.nrows();
        let mut c = DVector::zeros(m + 1);
        let lin = &self.spec.a1 * x - &self.spec.a1_rhs;
        c.rows_mut(0, m).copy_from(&lin);
        c[m] = (x.transpose() * &self.spec.a2 * x)[(0, 0)] - self.spec.a2_rhs;
        c
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let m = self.spec.a1.nrows();
        let n = self.primal_dim();
        let mut j = DMatrix::zeros(m + 1, n);
        j.rows_mut(0, m).copy_from(&self.spec.a1);
        let quad = (&self.spec.a2 * x) * 2.0;
        j.row_mut(m).copy_from(&quad.transpose());
        j
    }

    fn constraint_hessian(&self, i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.primal_dim();
        if i < self.spec.a1.nrows() {
            DMatrix::zeros(n, n)
        } else {
            &self.spec.a2 * 2.0
        }
    }
}

/// Build the finite-sum oracle for a logistic instance. The affine block
/// occupies the first m constraint rows; the quadratic row is appended last.
pub fn make_logistic_problem(spec: &LogisticProblemSpec) -> Result<FiniteSumOracle> {
    spec.validate()?;
    Ok(FiniteSumOracle::new(Arc::new(LogisticProblem {
        spec: spec.clone(),
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    fn spec() -> LogisticProblemSpec {
        LogisticProblemSpec::synthetic(20, 6, 2, 3)
    }

    #[test]
    fn loss_at_zero_is_log_two_and_quadratic_row_is_minus_five() {
        let oracle = make_logistic_problem(&spec()).unwrap();
        let x = DVector::zeros(6);
        for i in 0..oracle.component_count() {
            let fi = oracle.problem().component_objective(i, &x);
            assert!((fi - std::f64::consts::LN_2).abs() < 1e-15);
        }
        let c = oracle.c(&x);
        assert!((c[c.len() - 1] - (-5.0)).abs() < 1e-12);
    }

    #[test]
    fn component_gradients_match_finite_differences() {
        let oracle = make_logistic_problem(&spec()).unwrap();
        let x = DVector::from_fn(6, |i, _| {
            0.05 * (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 }
        });
        let h = 1e-6;
        for i in [0usize, 7, 19] {
            let g = oracle.problem().component_gradient(i, &x);
            for dim in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[dim] += h;
                xm[dim] -= h;
                let fd = (oracle.problem().component_objective(i, &xp)
                    - oracle.problem().component_objective(i, &xm))
                    / (2.0 * h);
                assert!(
                    (fd - g[dim]).abs() <= 1e-5 * g[dim].abs().max(1.0),
                    "component {i} dim {dim}: fd {fd} vs analytic {}",
                    g[dim]
                );
            }
        }
    }

    #[test]
    fn a2_eigenvalues_span_one_to_ten() {
        let s = spec();
        let eig = s.a2.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
        assert!(min >= 1.0 - 1e-8, "min eigenvalue {min}");
        assert!(max <= 10.0 + 1e-8, "max eigenvalue {max}");
    }

    #[test]
    fn a1_rank_is_checked() {
        let mut s = spec();
        let doubled = s.a1.row(0) * 2.0;
        s.a1.row_mut(1).copy_from(&doubled);
        assert!(matches!(
            make_logistic_problem(&s),
            Err(SqpError::RankDeficient(_))
        ));
    }

    #[test]
    fn constraint_layout_affine_then_quadratic() {
        let s = spec();
        let oracle = make_logistic_problem(&s).unwrap();
        assert_eq!(oracle.constraint_dim(), 3);
        let x = DVector::from_fn(6, |i, _| 0.1 * i as f64);
        let hess_affine = oracle.c_hess(0, &x);
        assert_eq!(linalg::max_abs(&hess_affine), 0.0);
        let hess_quad = oracle.c_hess(2, &x);
        assert!(linalg::max_abs(&(&hess_quad - &s.a2 * 2.0)) < 1e-14);
    }

    #[test]
    fn stable_logistic_extremes() {
        assert!(log1p_exp_neg(800.0) >= 0.0);
        assert!(log1p_exp_neg(800.0) < 1e-300);
        assert!((log1p_exp_neg(-800.0) - 800.0).abs() < 1e-9);
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
    }
}
