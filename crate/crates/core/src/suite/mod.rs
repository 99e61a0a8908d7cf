//! Concrete test problems and dataset ingestion: the quadratic-penalty
//! counterexample on a circle, constrained Rosenbrock, a bank of small
//! analytic equality-constrained problems with reference solutions, and
//! constrained logistic regression over LIBSVM-format data.

mod bank;
mod libsvm;
mod logistic;

pub use bank::{
    analytic_bank, bank_entry, constrained_rosenbrock, maratos_counterexample, BankEntry,
};
pub use libsvm::{parse_libsvm, write_libsvm};
pub use logistic::{make_logistic_problem, LogisticProblemSpec};

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg;
use crate::problem::{PrimalDual, ProblemOracle};

/// Initial iterate: an explicit primal point plus a rule for the duals.
#[derive(Debug, Clone)]
pub struct StartSpec {
    pub x0: DVector<f64>,
    pub y0_rule: Y0Rule,
}

#[derive(Debug, Clone)]
pub enum Y0Rule {
    Explicit(DVector<f64>),
    /// y0 = argmin_y ||g(x0) + J(x0)' y||_2, via the normal equations.
    LeastSquares,
}

impl StartSpec {
    pub fn explicit(x0: DVector<f64>, y0: DVector<f64>) -> Self {
        Self {
            x0,
            y0_rule: Y0Rule::Explicit(y0),
        }
    }

    pub fn least_squares(x0: DVector<f64>) -> Self {
        Self {
            x0,
            y0_rule: Y0Rule::LeastSquares,
        }
    }

    /// Materialize the primal-dual start, evaluating g and J if needed.
    pub fn resolve(&self, oracle: &ProblemOracle) -> Result<PrimalDual> {
        let y0 = match &self.y0_rule {
            Y0Rule::Explicit(y) => y.clone(),
            Y0Rule::LeastSquares => {
                let g = oracle.g(&self.x0);
                let j = oracle.jac(&self.x0);
                linalg::least_squares_multipliers(&g, &j)?
            }
        };
        Ok(PrimalDual::new(self.x0.clone(), y0))
    }
}

/// Random start: a normal vector scaled to norm 0.1, duals by least squares.
/// Deterministic given the seed.
pub fn default_start(primal_dim: usize, seed: u64) -> StartSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x0 = DVector::from_iterator(
        primal_dim,
        (0..primal_dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    let norm = x0.norm();
    if norm > 0.0 {
        x0 *= 0.1 / norm;
    } else {
        x0[0] = 0.1;
    }
    StartSpec::least_squares(x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_start_has_norm_point_one_and_is_deterministic() {
        let a = default_start(14, 42);
        let b = default_start(14, 42);
        assert!((a.x0.norm() - 0.1).abs() <= 1e-12);
        assert_eq!(a.x0, b.x0);
        let c = default_start(14, 43);
        assert_ne!(a.x0, c.x0);
    }

    #[test]
    fn least_squares_duals_satisfy_normal_equations() {
        let oracle = maratos_counterexample();
        let start = default_start(2, 7);
        let w = start.resolve(&oracle).unwrap();
        let g = oracle.g(&w.x);
        let j = oracle.jac(&w.x);
        let residual = &g + j.transpose() * &w.y;
        assert!(
            linalg::inf_norm(&(&j * residual)) <= 1e-8 * g.norm().max(1.0),
            "least-squares optimality violated"
        );
    }
}
