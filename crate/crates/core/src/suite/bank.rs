//! Built-in analytic equality-constrained problems with known solutions.
//!
//! The bank covers the shapes exercised by the solver scenarios: quadratic
//! objectives on quadratic constraints, Rosenbrock-type valleys, cubic slack
//! penalties, exponential data fitting, trigonometric couplings, orthogonal
//! regression, and a degree-four polynomial system. Every entry carries a
//! hand-derived primal-dual solution used by convergence diagnostics, and
//! every start point is infeasible or non-stationary.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::problem::{PrimalDual, Problem, ProblemOracle};

use super::StartSpec;

/// A bank problem: definition, start point, and reference solution.
pub struct BankEntry {
    pub key: &'static str,
    problem: Arc<dyn Problem>,
    pub start: StartSpec,
    pub solution: PrimalDual,
    pub objective_at_solution: f64,
}

impl BankEntry {
    pub fn oracle(&self) -> ProblemOracle {
        ProblemOracle::new(self.problem.clone())
    }
}

/// min z1^2 + z2^2  s.t. (z1+1)^2 + z2^2 = 4, started on the circle at
/// (sqrt(2)-1, sqrt(2)). Unit steps are rejected by the classical l1 line
/// search arbitrarily close to the solution (1, 0).
pub fn maratos_counterexample() -> ProblemOracle {
    ProblemOracle::new(Arc::new(CirclePenalty))
}

/// min (1-z1)^2 + 100(z2-z1^2)^2  s.t. (z1+2)^2 + (z2-1)^2 = 9, from (-1.1, 1).
pub fn constrained_rosenbrock() -> ProblemOracle {
    ProblemOracle::new(Arc::new(RosenbrockCircle))
}

/// The full bank, in a fixed order.
pub fn analytic_bank() -> Vec<BankEntry> {
    let sqrt2 = std::f64::consts::SQRT_2;
    vec![
        BankEntry {
            key: "maratos",
            problem: Arc::new(CirclePenalty),
            start: StartSpec::least_squares(DVector::from_vec(vec![sqrt2 - 1.0, sqrt2])),
            solution: PrimalDual::new(
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![-0.5]),
            ),
            objective_at_solution: 1.0,
        },
        BankEntry {
            key: "rosenbrock-circle",
            problem: Arc::new(RosenbrockCircle),
            start: StartSpec::least_squares(DVector::from_vec(vec![-1.1, 1.0])),
            solution: PrimalDual::new(
                DVector::from_vec(vec![1.0, 1.0]),
                DVector::from_vec(vec![0.0]),
            ),
            objective_at_solution: 0.0,
        },
        BankEntry {
            key: "rosen-parabola",
            problem: Arc::new(RosenParabola),
            start: StartSpec::least_squares(DVector::from_vec(vec![-1.2, 1.0])),
            solution: PrimalDual::new(
                DVector::from_vec(vec![1.0, 1.0]),
                DVector::from_vec(vec![0.0]),
            ),
            objective_at_solution: 0.0,
        },
        BankEntry {
            key: "penalty-cubic",
            problem: Arc::new(PenaltyCubic),
            start: StartSpec::least_squares(DVector::from_vec(vec![2.0, 2.0, 2.0])),
            solution: PrimalDual::new(
                DVector::from_vec(vec![-1.0, 1.0, 0.0]),
                DVector::from_vec(vec![0.04]),
            ),
            objective_at_solution: 0.04,
        },
        BankEntry {
            key: "sphere-distance",
            problem: Arc::new(SphereDistance),
            start: StartSpec::least_squares(DVector::from_vec(vec![2.0, 2.0, 2.0])),
            solution: PrimalDual::new(
                DVector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]),
                DVector::from_vec(vec![1.0]),
            ),
            objective_at_solution: 2.0,
        },
        BankEntry {
            key: "rosen-sphere",
            problem: Arc::new(RosenSphere),
            start: StartSpec::least_squares(DVector::from_vec(vec![-1.2, 1.0, 2.0, 0.5, 1.5])),
            solution: PrimalDual::new(DVector::repeat(5, 1.0), DVector::zeros(2)),
            objective_at_solution: 0.0,
        },
        BankEntry {
            key: "quartic-trig",
            problem: Arc::new(QuarticTrig),
            start: StartSpec::least_squares(DVector::from_vec(vec![
                0.5 * sqrt2,
                1.75,
                0.5,
                2.0,
                2.0,
            ])),
            solution: PrimalDual::new(DVector::repeat(5, 1.0), DVector::zeros(2)),
            objective_at_solution: 0.0,
        },
        BankEntry {
            key: "exp-fit",
            problem: Arc::new(ExpFit::new()),
            start: StartSpec::least_squares(DVector::from_vec(vec![0.5, 1.5, 3.5])),
            solution: PrimalDual::new(
                DVector::from_vec(vec![1.0, 2.0, 3.0]),
                DVector::from_vec(vec![0.0]),
            ),
            objective_at_solution: 0.0,
        },
        circle_fit_entry(),
        poly7_entry(),
    ]
}

/// Look up a bank entry by its key.
pub fn bank_entry(key: &str) -> Option<BankEntry> {
    analytic_bank().into_iter().find(|e| e.key == key)
}

struct CirclePenalty;

impl Problem for CirclePenalty {
    fn primal_dim(&self) -> usize {
        2
    }
    fn constraint_dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        x[0] * x[0] + x[1] * x[1]
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![2.0 * x[0], 2.0 * x[1]])
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * 2.0
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![(x[0] + 1.0).powi(2) + x[1] * x[1] - 4.0])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[2.0 * (x[0] + 1.0), 2.0 * x[1]])
    }
    fn constraint_hessian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * 2.0
    }
}

struct RosenbrockCircle;

impl Problem for RosenbrockCircle {
    fn primal_dim(&self) -> usize {
        2
    }
    fn constraint_dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = x[1] - x[0] * x[0];
        DVector::from_vec(vec![-2.0 * (1.0 - x[0]) - 400.0 * x[0] * t, 200.0 * t])
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let t = x[1] - x[0] * x[0];
        DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 - 400.0 * t + 800.0 * x[0] * x[0],
                -400.0 * x[0],
                -400.0 * x[0],
                200.0,
            ],
        )
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![(x[0] + 2.0).powi(2) + (x[1] - 1.0).powi(2) - 9.0])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[2.0 * (x[0] + 2.0), 2.0 * (x[1] - 1.0)])
    }
    fn constraint_hessian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * 2.0
    }
}

/// Rosenbrock objective against a scaled parabola constraint.
struct RosenParabola;

impl Problem for RosenParabola {
    fn primal_dim(&self) -> usize {
        2
    }
    fn constraint_dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = x[1] - x[0] * x[0];
        DVector::from_vec(vec![-2.0 * (1.0 - x[0]) - 400.0 * x[0] * t, 200.0 * t])
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let t = x[1] - x[0] * x[0];
        DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 - 400.0 * t + 800.0 * x[0] * x[0],
                -400.0 * x[0],
                -400.0 * x[0],
                200.0,
            ],
        )
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0])])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[-20.0 * x[0], 10.0])
    }
    fn constraint_hessian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-20.0, 0.0, 0.0, 0.0])
    }
}

/// Small quadratic penalty with a cubic slack constraint x1 + x3^2 + 1 = 0.
struct PenaltyCubic;

impl Problem for PenaltyCubic {
    fn primal_dim(&self) -> usize {
        3
    }
    fn constraint_dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.01 * (x[0] - 1.0).powi(2) + (x[1] - x[0] * x[0]).powi(2)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = x[1] - x[0] * x[0];
        DVector::from_vec(vec![0.02 * (x[0] - 1.0) - 4.0 * x[0] * t, 2.0 * t, 0.0])
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let t = x[1] - x[0] * x[0];
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 0)] = 0.02 - 4.0 * t + 8.0 * x[0] * x[0];
        h[(0, 1)] = -4.0 * x[0];
        h[(1, 0)] = -4.0 * x[0];
        h[(1, 1)] = 2.0;
        h
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0] + x[2] * x[2] + 1.0])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 2.0 * x[2]])
    }
    fn constraint_hessian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(3, 3);
        h[(2, 2)] = 2.0;
        h
    }
}

/// Closest point on the unit sphere to p = (2, 1, 2).
struct SphereDistance;

impl SphereDistance {
    const P: [f64; 3] = [2.0, 1.0, 2.0];
}

impl Problem for SphereDistance {
    fn primal_dim(&self) -> usize {
        3
    }
    fn constraint_dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (0..3).map(|i| (x[i] - Self::P[i]).powi(2)).sum::<f64>()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(3, |i, _| x[i] - Self::P[i])
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x.norm_squared() - 1.0])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(1, 3, |_, j| 2.0 * x[j])
    }
    fn constraint_hessian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 3) * 2.0
    }
}

/// Rosenbrock valley in (x1, x2) plus quadratic tails, constrained by a
/// sphere through the first three coordinates and a product coupling.
struct RosenSphere;

impl Problem for RosenSphere {
    fn primal_dim(&self) -> usize {
        5
    }
    fn constraint_dim(&self) -> usize {
        2
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        100.0 * (x[1] - x[0] * x[0]).powi(2)
            + (x[0] - 1.0).powi(2)
            + (x[2] - 1.0).powi(2)
            + (x[3] - 1.0).powi(2)
            + (x[4] - 1.0).powi(2)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = x[1] - x[0] * x[0];
        DVector::from_vec(vec![
            -400.0 * x[0] * t + 2.0 * (x[0] - 1.0),
            200.0 * t,
            2.0 * (x[2] - 1.0),
            2.0 * (x[3] - 1.0),
            2.0 * (x[4] - 1.0),
        ])
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let t = x[1] - x[0] * x[0];
        let mut h = DMatrix::zeros(5, 5);
        h[(0, 0)] = -400.0 * t + 800.0 * x[0] * x[0] + 2.0;
        h[(0, 1)] = -400.0 * x[0];
        h[(1, 0)] = -400.0 * x[0];
        h[(1, 1)] = 200.0;
        h[(2, 2)] = 2.0;
        h[(3, 3)] = 2.0;
        h[(4, 4)] = 2.0;
        h
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - 3.0,
            x[3] * x[4] - 1.0,
        ])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            5,
            &[
                2.0 * x[0],
                2.0 * x[1],
                2.0 * x[2],
                0.0,
                0.0,
                0.0,
                0.0,
                0.0,
                x[4],
                x[3],
            ],
        )
    }
    fn constraint_hessian(&self, i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(5, 5);
        if i == 0 {
            h[(0, 0)] = 2.0;
            h[(1, 1)] = 2.0;
            h[(2, 2)] = 2.0;
        } else {
            h[(3, 4)] = 1.0;
            h[(4, 3)] = 1.0;
        }
        h
    }
}

/// Quartic/sextic tails with trigonometric and polynomial constraint coupling.
struct QuarticTrig;

impl Problem for QuarticTrig {
    fn primal_dim(&self) -> usize {
        5
    }
    fn constraint_dim(&self) -> usize {
        2
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        (x[0] - x[1]).powi(2)
            + (x[2] - 1.0).powi(2)
            + (x[3] - 1.0).powi(2)
            + (x[3] - 1.0).powi(4)
            + (x[4] - 1.0).powi(2)
            + (x[4] - 1.0).powi(6)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            2.0 * (x[0] - x[1]),
            -2.0 * (x[0] - x[1]),
            2.0 * (x[2] - 1.0),
            2.0 * (x[3] - 1.0) + 4.0 * (x[3] - 1.0).powi(3),
            2.0 * (x[4] - 1.0) + 6.0 * (x[4] - 1.0).powi(5),
        ])
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(5, 5);
        h[(0, 0)] = 2.0;
        h[(0, 1)] = -2.0;
        h[(1, 0)] = -2.0;
        h[(1, 1)] = 2.0;
        h[(2, 2)] = 2.0;
        h[(3, 3)] = 2.0 + 12.0 * (x[3] - 1.0).powi(2);
        h[(4, 4)] = 2.0 + 30.0 * (x[4] - 1.0).powi(4);
        h
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            x[0] * x[0] * x[3] + (x[3] - x[4]).sin() - 1.0,
            x[1] + x[2].powi(4) * x[3] * x[3] - 2.0,
        ])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let u = (x[3] - x[4]).cos();
        DMatrix::from_row_slice(
            2,
            5,
            &[
                2.0 * x[0] * x[3],
                0.0,
                0.0,
                x[0] * x[0] + u,
                -u,
                0.0,
                1.0,
                4.0 * x[2].powi(3) * x[3] * x[3],
                2.0 * x[2].powi(4) * x[3],
                0.0,
            ],
        )
    }
    fn constraint_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(5, 5);
        if i == 0 {
            let s = (x[3] - x[4]).sin();
            h[(0, 0)] = 2.0 * x[3];
            h[(0, 3)] = 2.0 * x[0];
            h[(3, 0)] = 2.0 * x[0];
            h[(3, 3)] = -s;
            h[(3, 4)] = s;
            h[(4, 3)] = s;
            h[(4, 4)] = -s;
        } else {
            h[(2, 2)] = 12.0 * x[2] * x[2] * x[3] * x[3];
            h[(2, 3)] = 8.0 * x[2].powi(3) * x[3];
            h[(3, 2)] = 8.0 * x[2].powi(3) * x[3];
            h[(3, 3)] = 2.0 * x[2].powi(4);
        }
        h
    }
}

/// Two-exponential model fit with residuals vanishing at (1, 2, 3), under a
/// linear budget constraint.
struct ExpFit {
    t: Vec<f64>,
    data: Vec<f64>,
}

impl ExpFit {
    fn new() -> Self {
        let t: Vec<f64> = (1..=6).map(|j| 0.2 * j as f64).collect();
        let data = t
            .iter()
            .map(|&tj| 3.0 * (-tj).exp() - 4.0 * (-2.0 * tj).exp())
            .collect();
        Self { t, data }
    }

    fn residuals(&self, x: &DVector<f64>) -> Vec<f64> {
        self.t
            .iter()
            .zip(&self.data)
            .map(|(&t, &d)| x[2] * (-t * x[0]).exp() - 4.0 * (-t * x[1]).exp() - d)
            .collect()
    }
}

impl Problem for ExpFit {
    fn primal_dim(&self) -> usize {
        3
    }
    fn constraint_dim(&self) -> usize {
        1
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        self.residuals(x).iter().map(|r| r * r).sum()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(3);
        for (j, r) in self.residuals(x).iter().enumerate() {
            let t = self.t[j];
            let e1 = (-t * x[0]).exp();
            let e2 = (-t * x[1]).exp();
            g[0] += 2.0 * r * (-t * x[2] * e1);
            g[1] += 2.0 * r * (4.0 * t * e2);
            g[2] += 2.0 * r * e1;
        }
        g
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(3, 3);
        for (j, r) in self.residuals(x).iter().enumerate() {
            let t = self.t[j];
            let e1 = (-t * x[0]).exp();
            let e2 = (-t * x[1]).exp();
            let grad = [-t * x[2] * e1, 4.0 * t * e2, e1];
            for a in 0..3 {
                for b in 0..3 {
                    h[(a, b)] += 2.0 * grad[a] * grad[b];
                }
            }
            // second derivatives of the model
            h[(0, 0)] += 2.0 * r * (t * t * x[2] * e1);
            h[(1, 1)] += 2.0 * r * (-4.0 * t * t * e2);
            h[(0, 2)] += 2.0 * r * (-t * e1);
            h[(2, 0)] += 2.0 * r * (-t * e1);
        }
        h
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0] + x[1] + x[2] - 6.0])
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0])
    }
    fn constraint_hessian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }
}

/// Orthogonal regression of three points onto a unit circle with unknown
/// center: variables (h, p_1, p_2, p_3), one membership constraint per point.
struct CircleFit {
    data: Vec<[f64; 2]>,
}

impl CircleFit {
    fn new() -> Self {
        let angles = [
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::FRAC_PI_3,
            std::f64::consts::FRAC_PI_2 + 4.0 * std::f64::consts::FRAC_PI_3,
        ];
        Self {
            data: angles
                .iter()
                .map(|a| [1.5 * a.cos(), 1.5 * a.sin()])
                .collect(),
        }
    }
}

impl Problem for CircleFit {
    fn primal_dim(&self) -> usize {
        8
    }
    fn constraint_dim(&self) -> usize {
        3
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        (0..3)
            .map(|j| {
                let px = x[2 + 2 * j];
                let py = x[3 + 2 * j];
                (px - self.data[j][0]).powi(2) + (py - self.data[j][1]).powi(2)
            })
            .sum()
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(8);
        for j in 0..3 {
            g[2 + 2 * j] = 2.0 * (x[2 + 2 * j] - self.data[j][0]);
            g[3 + 2 * j] = 2.0 * (x[3 + 2 * j] - self.data[j][1]);
        }
        g
    }
    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(8, 8);
        for i in 2..8 {
            h[(i, i)] = 2.0;
        }
        h
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(3, |j, _| {
            let dx = x[2 + 2 * j] - x[0];
            let dy = x[3 + 2 * j] - x[1];
            dx * dx + dy * dy - 1.0
        })
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jm = DMatrix::zeros(3, 8);
        for j in 0..3 {
            let dx = x[2 + 2 * j] - x[0];
            let dy = x[3 + 2 * j] - x[1];
            jm[(j, 0)] = -2.0 * dx;
            jm[(j, 1)] = -2.0 * dy;
            jm[(j, 2 + 2 * j)] = 2.0 * dx;
            jm[(j, 3 + 2 * j)] = 2.0 * dy;
        }
        jm
    }
    fn constraint_hessian(&self, i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(8, 8);
        for a in 0..2 {
            h[(a, a)] = 2.0;
            h[(2 + 2 * i + a, 2 + 2 * i + a)] = 2.0;
            h[(a, 2 + 2 * i + a)] = -2.0;
            h[(2 + 2 * i + a, a)] = -2.0;
        }
        h
    }
}

fn circle_fit_entry() -> BankEntry {
    let problem = CircleFit::new();
    let mut x_star = DVector::zeros(8);
    let mut x_start = DVector::zeros(8);
    x_start[0] = 0.3;
    x_start[1] = -0.1;
    for j in 0..3 {
        let [zx, zy] = problem.data[j];
        let norm = (zx * zx + zy * zy).sqrt();
        x_star[2 + 2 * j] = zx / norm;
        x_star[3 + 2 * j] = zy / norm;
        x_start[2 + 2 * j] = zx;
        x_start[3 + 2 * j] = zy;
    }
    BankEntry {
        key: "circle-fit",
        problem: Arc::new(problem),
        start: StartSpec::least_squares(x_start),
        solution: PrimalDual::new(x_star, DVector::repeat(3, 0.5)),
        objective_at_solution: 0.75,
    }
}

/// Seven-variable polynomial problem with two quartic/quadratic constraints
/// and a nonzero multiplier pair. Constructed so that the Lagrangian Hessian
/// at the solution is 2I.
struct Poly7;

impl Poly7 {
    const Y1: f64 = 0.5;
    const Y2: f64 = -0.5;

    fn c1(x: &DVector<f64>) -> f64 {
        2.0 * x[0] * x[0] + 3.0 * x[1].powi(4) + x[2] + 4.0 * x[3] * x[3] + 5.0 * x[4] - 15.0
    }

    fn c2(x: &DVector<f64>) -> f64 {
        -4.0 * x[0] * x[0] - x[1] * x[1] - 3.0 * x[0] * x[1] - 2.0 * x[2] * x[2] - 5.0 * x[5]
            + 11.0 * x[6]
            + 4.0
    }

    fn grad_c1(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            4.0 * x[0],
            12.0 * x[1].powi(3),
            1.0,
            8.0 * x[3],
            5.0,
            0.0,
            0.0,
        ])
    }

    fn grad_c2(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![
            -8.0 * x[0] - 3.0 * x[1],
            -2.0 * x[1] - 3.0 * x[0],
            -4.0 * x[2],
            0.0,
            0.0,
            -5.0,
            11.0,
        ])
    }

    fn hess_c1(x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(7, 7);
        h[(0, 0)] = 4.0;
        h[(1, 1)] = 36.0 * x[1] * x[1];
        h[(3, 3)] = 8.0;
        h
    }

    fn hess_c2(_x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(7, 7);
        h[(0, 0)] = -8.0;
        h[(0, 1)] = -3.0;
        h[(1, 0)] = -3.0;
        h[(1, 1)] = -2.0;
        h[(2, 2)] = -4.0;
        h
    }

    fn shift(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(7, |i, _| x[i] - 1.0)
    }
}

impl Problem for Poly7 {
    fn primal_dim(&self) -> usize {
        7
    }
    fn constraint_dim(&self) -> usize {
        2
    }
    fn objective(&self, x: &DVector<f64>) -> f64 {
        let t = Self::shift(x).norm_squared();
        t + 2.0 * t * t - Self::Y1 * Self::c1(x) - Self::Y2 * Self::c2(x)
    }
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let v = Self::shift(x);
        let t = v.norm_squared();
        v * (2.0 * (1.0 + 4.0 * t)) - Self::grad_c1(x) * Self::Y1 - Self::grad_c2(x) * Self::Y2
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let v = Self::shift(x);
        let t = v.norm_squared();
        let mut h = DMatrix::identity(7, 7) * (2.0 * (1.0 + 4.0 * t));
        h += &v * v.transpose() * 16.0;
        h -= Self::hess_c1(x) * Self::Y1;
        h -= Self::hess_c2(x) * Self::Y2;
        h
    }
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![Self::c1(x), Self::c2(x)])
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jm = DMatrix::zeros(2, 7);
        jm.row_mut(0).copy_from(&Self::grad_c1(x).transpose());
        jm.row_mut(1).copy_from(&Self::grad_c2(x).transpose());
        jm
    }
    fn constraint_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        if i == 0 {
            Self::hess_c1(x)
        } else {
            Self::hess_c2(x)
        }
    }
}

fn poly7_entry() -> BankEntry {
    BankEntry {
        key: "poly7",
        problem: Arc::new(Poly7),
        start: StartSpec::least_squares(DVector::repeat(7, 2.0)),
        solution: PrimalDual::new(
            DVector::repeat(7, 1.0),
            DVector::from_vec(vec![Poly7::Y1, Poly7::Y2]),
        ),
        objective_at_solution: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::problem::{evaluate_lagrangian_gradient, finite_difference_check};

    #[test]
    fn maratos_start_values() {
        let oracle = maratos_counterexample();
        let sqrt2 = std::f64::consts::SQRT_2;
        let x0 = DVector::from_vec(vec![sqrt2 - 1.0, sqrt2]);
        let f0 = oracle.f(&x0);
        assert!((f0 - (5.0 - 2.0 * sqrt2)).abs() < 1e-14);
        assert!(oracle.c(&x0)[0].abs() < 1e-14);
        // the optimum is feasible
        assert!(oracle.c(&DVector::from_vec(vec![1.0, 0.0]))[0].abs() < 1e-15);
    }

    #[test]
    fn rosenbrock_circle_values() {
        let oracle = constrained_rosenbrock();
        let start = DVector::from_vec(vec![-1.1, 1.0]);
        assert!((oracle.c(&start)[0] - (-8.19)).abs() < 1e-12);
        let opt = DVector::from_vec(vec![1.0, 1.0]);
        assert!(oracle.c(&opt)[0].abs() < 1e-15);
        assert_eq!(oracle.f(&opt), 0.0);
        assert!(linalg::inf_norm(&oracle.g(&opt)) < 1e-15);
    }

    #[test]
    fn bank_has_at_least_eight_problems() {
        assert!(analytic_bank().len() >= 8);
    }

    #[test]
    fn bank_contains_counterexample_with_reference() {
        let bank = analytic_bank();
        let entry = bank.iter().find(|e| e.key == "maratos").unwrap();
        assert_eq!(entry.solution.x, DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(entry.solution.y, DVector::from_vec(vec![-0.5]));
    }

    #[test]
    fn every_reference_solution_is_a_kkt_point() {
        for entry in analytic_bank() {
            let oracle = entry.oracle();
            let lg = evaluate_lagrangian_gradient(&oracle, &entry.solution).unwrap();
            let c = oracle.c(&entry.solution.x);
            assert!(
                linalg::inf_norm(&lg) < 1e-10,
                "{}: stationarity residual {:.3e}",
                entry.key,
                linalg::inf_norm(&lg)
            );
            assert!(
                linalg::inf_norm(&c) < 1e-10,
                "{}: feasibility residual {:.3e}",
                entry.key,
                linalg::inf_norm(&c)
            );
            let f = oracle.f(&entry.solution.x);
            assert!(
                (f - entry.objective_at_solution).abs() <= 1e-10 * f.abs().max(1.0),
                "{}: objective {f} vs reference {}",
                entry.key,
                entry.objective_at_solution
            );
        }
    }

    #[test]
    fn every_start_is_infeasible_or_nonstationary() {
        for entry in analytic_bank() {
            let oracle = entry.oracle();
            let w0 = entry.start.resolve(&oracle).unwrap();
            let c = oracle.c(&w0.x);
            let lg = evaluate_lagrangian_gradient(&oracle, &w0).unwrap();
            assert!(
                linalg::inf_norm(&c) > 1e-8 || linalg::inf_norm(&lg) > 1e-8,
                "{}: start already solves the problem",
                entry.key
            );
        }
    }

    #[test]
    fn bank_derivatives_pass_finite_differences_at_start() {
        for entry in analytic_bank() {
            let oracle = entry.oracle();
            let report = finite_difference_check(&oracle, &entry.start.x0, 1e-5).unwrap();
            assert!(
                report.max_first_order() <= 1e-5,
                "{}: first-order fd error {:?}",
                entry.key,
                report
            );
            assert!(
                report.max_second_order() <= 1e-4,
                "{}: second-order fd error {:?}",
                entry.key,
                report
            );
        }
    }

    #[test]
    fn first_order_derivatives_match_at_twenty_random_points() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x20f);
        for entry in analytic_bank() {
            let oracle = entry.oracle();
            for _ in 0..20 {
                let point = DVector::from_fn(entry.start.x0.len(), |i, _| {
                    entry.start.x0[i] + rng.random_range(-1.0..1.0)
                });
                let report = finite_difference_check(&oracle, &point, 1e-5).unwrap();
                assert!(
                    report.max_first_order() <= 1e-5,
                    "{}: fd mismatch {:?} at {point}",
                    entry.key,
                    report
                );
            }
        }
    }

    #[test]
    fn bank_keys_are_unique_and_resolvable() {
        let bank = analytic_bank();
        for e in &bank {
            assert_eq!(
                bank.iter().filter(|other| other.key == e.key).count(),
                1,
                "duplicate key {}",
                e.key
            );
            assert!(bank_entry(e.key).is_some());
        }
        assert!(bank_entry("no-such-problem").is_none());
    }
}
