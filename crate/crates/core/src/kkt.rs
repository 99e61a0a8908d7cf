//! Assembly and dense solution of the SQP Newton-KKT system
//!
//! ```text
//! [ W  J' ] [ d     ]   [ -(g + J'y) ]
//! [ J  0  ] [ delta ] = [ -c         ]
//! ```
//!
//! with positive definiteness of the reduced Hessian Z'WZ enforced by a
//! doubling diagonal regularization of W only, which keeps the second block
//! row exact (J d + c = 0 holds for the regularized system as well). Also
//! provides the orthogonal splitting of the search direction into null-space
//! and range-space components.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SqpError};
use crate::linalg;
use crate::problem::{PrimalDual, ProblemOracle};

/// Relative singular-value threshold below which J is declared rank deficient.
pub const LICQ_TOL: f64 = 1e-12;

/// Default floor for the smallest reduced-Hessian eigenvalue.
pub const ZETA_MIN_DEFAULT: f64 = 1e-8;

/// First element of the doubling regularization sequence.
pub const LAMBDA0_DEFAULT: f64 = 1e-6;

/// Cap on the regularization magnitude.
pub const LAMBDA_CAP_DEFAULT: f64 = 1e8;

/// Where the curvature matrix of the subproblem comes from.
pub enum HessianSource {
    /// Lagrangian Hessian evaluated exactly at the iterate.
    Exact,
    /// Caller-provided matrix (subsampled Lagrangian Hessian, or the identity
    /// for first-order variants).
    Provided(DMatrix<f64>),
}

/// Assembled (not yet regularized) KKT system.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub w: DMatrix<f64>,
    pub j: DMatrix<f64>,
    /// -(g + J'y)
    pub rhs_top: DVector<f64>,
    /// -c
    pub rhs_bottom: DVector<f64>,
    /// Regularization actually applied to W so far.
    pub lambda: f64,
}

/// Solution of a KKT system with explicitly recomputed residuals.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub d: DVector<f64>,
    pub delta: DVector<f64>,
    pub residual_top: DVector<f64>,
    pub residual_bottom: DVector<f64>,
    pub solver_kind: SolverKind,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Dense,
    Minres,
}

impl KktSystem {
    pub fn primal_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn dual_dim(&self) -> usize {
        self.j.nrows()
    }

    /// Stacked right-hand side [rhs_top; rhs_bottom].
    pub fn rhs(&self) -> DVector<f64> {
        let (n, m) = (self.primal_dim(), self.dual_dim());
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&self.rhs_top);
        rhs.rows_mut(n, m).copy_from(&self.rhs_bottom);
        rhs
    }

    /// Blockwise product of the KKT matrix with a stacked vector, computed
    /// without forming the (n+m)^2 matrix.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let (n, m) = (self.primal_dim(), self.dual_dim());
        let d = v.rows(0, n).into_owned();
        let delta = v.rows(n, m).into_owned();
        let top = &self.w * &d + self.j.transpose() * &delta;
        let bottom = &self.j * &d;
        let mut out = DVector::zeros(n + m);
        out.rows_mut(0, n).copy_from(&top);
        out.rows_mut(n, m).copy_from(&bottom);
        out
    }

    /// Residual blocks (rho, r) = M [d; delta] - rhs for a candidate solution.
    pub fn residual(&self, d: &DVector<f64>, delta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let top = &self.w * d + self.j.transpose() * delta - &self.rhs_top;
        let bottom = &self.j * d - &self.rhs_bottom;
        (top, bottom)
    }

    /// Dense (n+m) x (n+m) block matrix; used by the dense factorization path.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.primal_dim(), self.dual_dim());
        let mut mat = DMatrix::zeros(n + m, n + m);
        mat.view_mut((0, 0), (n, n)).copy_from(&self.w);
        mat.view_mut((0, n), (n, m)).copy_from(&self.j.transpose());
        mat.view_mut((n, 0), (m, n)).copy_from(&self.j);
        mat
    }
}

/// Assemble the KKT system at the iterate `w`, with the curvature matrix from
/// `hessian` and an optional gradient estimate replacing the exact gradient.
///
/// Fails with an LICQ error when the Jacobian is numerically rank deficient;
/// runs hitting this are excluded rather than recovered.
pub fn assemble(
    oracle: &ProblemOracle,
    w: &PrimalDual,
    hessian: HessianSource,
    gradient: Option<&DVector<f64>>,
) -> Result<KktSystem> {
    let n = oracle.primal_dim();
    let m = oracle.constraint_dim();
    if w.x.len() != n || w.y.len() != m {
        return Err(SqpError::DimensionMismatch {
            context: "kkt assembly iterate",
            expected: n + m,
            got: w.x.len() + w.y.len(),
        });
    }

    let j = oracle.jac(&w.x);
    check_licq(&j)?;

    let g = match gradient {
        Some(g) => g.clone(),
        None => oracle.g(&w.x),
    };
    let c = oracle.c(&w.x);

    let w_mat = match hessian {
        HessianSource::Exact => {
            let mut total = oracle.h(&w.x);
            for i in 0..m {
                total += oracle.c_hess(i, &w.x) * w.y[i];
            }
            linalg::symmetrize(&total)
        }
        HessianSource::Provided(mat) => {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(SqpError::DimensionMismatch {
                    context: "provided curvature matrix",
                    expected: n,
                    got: mat.nrows(),
                });
            }
            linalg::symmetrize(&mat)
        }
    };

    let rhs_top = -(&g + j.transpose() * &w.y);
    let rhs_bottom = -c;
    Ok(KktSystem {
        w: w_mat,
        j,
        rhs_top,
        rhs_bottom,
        lambda: 0.0,
    })
}

/// Build a system from already-evaluated pieces (curvature matrix, Jacobian,
/// gradient estimate, duals, constraint values), with the same LICQ check as
/// [`assemble`]. Used by solver loops that manage their own evaluations.
pub fn build_system(
    w_mat: DMatrix<f64>,
    j: DMatrix<f64>,
    g: &DVector<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<KktSystem> {
    check_licq(&j)?;
    let rhs_top = -(g + j.transpose() * y);
    let rhs_bottom = -c;
    Ok(KktSystem {
        w: w_mat,
        j,
        rhs_top,
        rhs_bottom,
        lambda: 0.0,
    })
}

fn check_licq(j: &DMatrix<f64>) -> Result<()> {
    let m = j.nrows();
    if m == 0 {
        return Ok(());
    }
    let svd = j.clone().svd(false, false);
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let min_sv = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if svd.singular_values.len() < m || min_sv <= LICQ_TOL * max_sv {
        return Err(SqpError::LicqFailure {
            smallest: min_sv,
            largest: max_sv,
        });
    }
    Ok(())
}

/// Regularization parameters for [`regularize_with`].
#[derive(Debug, Clone, Copy)]
pub struct RegularizationConfig {
    pub zeta_min: f64,
    pub lambda0: f64,
    pub cap: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self {
            zeta_min: ZETA_MIN_DEFAULT,
            lambda0: LAMBDA0_DEFAULT,
            cap: LAMBDA_CAP_DEFAULT,
        }
    }
}

/// W <- W + lambda I for the smallest lambda in {0, l0, 2 l0, 4 l0, ...} such
/// that the reduced Hessian Z'WZ has minimum eigenvalue >= zeta_min.
pub fn regularize(system: KktSystem, zeta_min: f64) -> Result<KktSystem> {
    regularize_with(
        system,
        RegularizationConfig {
            zeta_min,
            ..RegularizationConfig::default()
        },
    )
}

pub fn regularize_with(mut system: KktSystem, cfg: RegularizationConfig) -> Result<KktSystem> {
    if cfg.zeta_min <= 0.0 {
        return Err(SqpError::InvalidConfig("zeta_min must be positive".into()));
    }
    let z = linalg::null_space_basis(&system.j);
    if z.ncols() == 0 {
        return Ok(system); // trivial null space: nothing to enforce
    }
    let reduced = z.transpose() * &system.w * &z;
    let min_eig = linalg::min_symmetric_eigenvalue(&linalg::symmetrize(&reduced));
    if min_eig >= cfg.zeta_min {
        return Ok(system);
    }

    let needed = cfg.zeta_min - min_eig;
    let mut lambda = cfg.lambda0;
    while lambda < needed {
        lambda *= 2.0;
        if lambda > cfg.cap {
            return Err(SqpError::IllPosed {
                lambda,
                cap: cfg.cap,
            });
        }
    }
    if lambda > cfg.cap {
        return Err(SqpError::IllPosed {
            lambda,
            cap: cfg.cap,
        });
    }
    for i in 0..system.w.nrows() {
        system.w[(i, i)] += lambda;
    }
    system.lambda += lambda;
    Ok(system)
}

/// Solve the assembled system by a dense LU factorization with iterative
/// refinement. Residuals are recomputed by explicit multiplication.
pub fn solve_dense(system: &KktSystem) -> Result<KktSolution> {
    let n = system.primal_dim();
    let m = system.dual_dim();
    let mat = system.dense_matrix();
    let rhs = system.rhs();
    let sol = linalg::lu_solve_refined(&mat, &rhs)?;
    let d = sol.rows(0, n).into_owned();
    let delta = sol.rows(n, m).into_owned();
    let (residual_top, residual_bottom) = system.residual(&d, &delta);
    Ok(KktSolution {
        d,
        delta,
        residual_top,
        residual_bottom,
        solver_kind: SolverKind::Dense,
        iterations: 0,
    })
}

/// Split d into u + v with u in Null(J) and v = -J'(JJ')^{-1} c in Range(J').
pub fn decompose_direction(
    system: &KktSystem,
    sol: &KktSolution,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = system.dual_dim();
    if m == 0 {
        return Ok((sol.d.clone(), DVector::zeros(sol.d.len())));
    }
    let jjt = &system.j * system.j.transpose();
    // rhs_bottom = -c, so v = -J'(JJ')^{-1} c = J'(JJ')^{-1} rhs_bottom
    let t = linalg::lu_solve_refined(&jjt, &system.rhs_bottom)?;
    let v = system.j.transpose() * t;
    let u = &sol.d - &v;
    Ok((u, v))
}
