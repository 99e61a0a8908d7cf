//! Matrix-free MINRES for the symmetric (indefinite) KKT system.
//!
//! The solver runs the Lanczos process with Givens rotations and minimizes
//! the residual 2-norm over the growing Krylov subspace. Residuals used for
//! the stopping rule and the report are recomputed by explicit operator
//! application every iteration instead of trusting the recurrence estimates.
//! The stopping rule is relative in the infinity norm:
//! stop once ||r||_inf <= max(kappa * ||rhs||_inf, floor).

use nalgebra::DVector;

use crate::error::{Result, SqpError};
use crate::kkt::KktSystem;
use crate::linalg;

/// Symmetric linear operator over R^dim.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for nalgebra::DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

/// Blockwise KKT operator v -> M v that never forms the (n+m)^2 matrix.
pub struct KktOperator<'a> {
    system: &'a KktSystem,
}

impl<'a> LinearOperator for KktOperator<'a> {
    fn dim(&self) -> usize {
        self.system.primal_dim() + self.system.dual_dim()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.system.apply(v)
    }
}

/// Operator view of a (regularized) KKT system.
pub fn kkt_operator(system: &KktSystem) -> KktOperator<'_> {
    KktOperator { system }
}

#[derive(Debug, Clone)]
pub struct MinresConfig {
    /// Relative residual tolerance in (0, 1].
    pub kappa: f64,
    /// Maximum iterations; `None` means the operator dimension.
    pub max_iterations: Option<usize>,
    /// Absolute residual floor in the stopping rule.
    pub absolute_floor: f64,
    /// Spot-check operator symmetry on random probes before solving.
    pub validate_symmetry: bool,
}

impl MinresConfig {
    /// Tolerance used by the "exact" runs: kappa = 1e-12.
    pub fn exact() -> Self {
        Self {
            kappa: 1e-12,
            ..Self::default()
        }
    }

    /// Tolerance used by the "inexact" runs: kappa = 1e-1.
    pub fn inexact() -> Self {
        Self {
            kappa: 1e-1,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(SqpError::InvalidConfig(format!(
                "kappa must lie in (0, 1], got {}",
                self.kappa
            )));
        }
        if let Some(0) = self.max_iterations {
            return Err(SqpError::InvalidConfig(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for MinresConfig {
    fn default() -> Self {
        Self {
            kappa: 1e-12,
            max_iterations: None,
            absolute_floor: 1e-12,
            validate_symmetry: false,
        }
    }
}

/// Per-solve report. Histories hold one entry per iteration, measured on the
/// explicitly recomputed residual.
#[derive(Debug, Clone, Default)]
pub struct MinresReport {
    pub iterations_used: usize,
    /// Residual infinity norms, one per iteration (the stopping-rule metric).
    pub residual_history: Vec<f64>,
    /// Residual 2-norms, one per iteration (nonincreasing by the
    /// minimum-residual property, up to round-off).
    pub residual_two_history: Vec<f64>,
    pub converged: bool,
}

/// Geometric-mean per-iteration 2-norm residual ratio of a report.
pub fn measure_contraction(report: &MinresReport) -> Result<f64> {
    let h = &report.residual_two_history;
    if h.len() < 2 {
        return Err(SqpError::InsufficientData(
            "contraction needs at least two residual history entries",
        ));
    }
    let first = h[0];
    let last = h[h.len() - 1];
    if first == 0.0 || last == 0.0 {
        return Ok(0.0);
    }
    Ok((last / first).powf(1.0 / (h.len() - 1) as f64))
}

/// Solve M z = rhs for a symmetric operator M.
pub fn minres_solve(
    op: &dyn LinearOperator,
    rhs: &DVector<f64>,
    config: &MinresConfig,
) -> Result<(DVector<f64>, MinresReport)> {
    config.validate()?;
    let n = op.dim();
    if rhs.len() != n {
        return Err(SqpError::DimensionMismatch {
            context: "minres right-hand side",
            expected: n,
            got: rhs.len(),
        });
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(SqpError::InvalidConfig("minres rhs must be finite".into()));
    }
    if config.validate_symmetry {
        check_symmetry(op)?;
    }

    let max_iterations = config.max_iterations.unwrap_or(n);
    let threshold = (config.kappa * linalg::inf_norm(rhs)).max(config.absolute_floor);

    let mut x = DVector::zeros(n);
    let mut report = MinresReport::default();

    let beta1 = rhs.norm();
    if beta1 <= config.absolute_floor {
        report.converged = true;
        return Ok((x, report));
    }

    // Lanczos + Givens state (Paige-Saunders recurrences).
    let mut r1 = rhs.clone();
    let mut r2 = rhs.clone();
    let mut y = rhs.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs: f64 = -1.0;
    let mut sn = 0.0;
    let mut w = DVector::zeros(n);
    let mut w2 = DVector::zeros(n);

    for itn in 1..=max_iterations {
        let v = &y / beta;
        y = op.apply(&v);
        if itn >= 2 {
            y -= &r1 * (beta / oldb);
        }
        let alfa = v.dot(&y);
        y -= &r2 * (alfa / beta);
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = y.norm();

        let lanczos_breakdown = beta <= f64::EPSILON * beta1;

        // previous rotation
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;

        // next rotation
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, w.clone());
        w = (&v - &w1 * oldeps - &w2 * delta) / gamma;
        x += &w * phi;

        // explicit residual, not the recurrence estimate
        let residual = rhs - op.apply(&x);
        let res_inf = linalg::inf_norm(&residual);
        report.residual_history.push(res_inf);
        report.residual_two_history.push(residual.norm());
        report.iterations_used = itn;

        if res_inf <= threshold {
            report.converged = true;
            return Ok((x, report));
        }
        if lanczos_breakdown {
            // Krylov space exhausted; the iterate should be exact by now.
            return Err(SqpError::MinresBreakdown {
                iteration: itn,
                residual: res_inf,
            });
        }
    }

    Ok((x, report))
}

fn check_symmetry(op: &dyn LinearOperator) -> Result<()> {
    use rand::Rng;
    use rand::SeedableRng;
    let n = op.dim();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5ca1ab1e);
    for _ in 0..2 {
        let u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let defect = (u.dot(&op.apply(&v)) - v.dot(&op.apply(&u))).abs();
        if defect > 1e-8 * u.norm() * v.norm() {
            return Err(SqpError::AsymmetricOperator { defect });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::{self, HessianSource};
    use crate::problem::PrimalDual;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_regularized_system(seed: u64, n: usize, m: usize) -> KktSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = crate::linalg::symmetrize(&a);
        let j = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rhs_top = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rhs_bottom = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let system = KktSystem {
            w,
            j,
            rhs_top,
            rhs_bottom,
            lambda: 0.0,
        };
        kkt::regularize(system, 1e-8).unwrap()
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let m = DMatrix::<f64>::identity(6, 6);
        let rhs = DVector::from_vec(vec![1.0, -2.0, 0.5, 4.0, 0.0, -1.5]);
        let (x, report) = minres_solve(&m, &rhs, &MinresConfig::exact()).unwrap();
        assert_eq!(report.iterations_used, 1);
        assert!(report.converged);
        assert!(linalg::inf_norm(&(x - rhs)) < 1e-12);
    }

    #[test]
    fn symmetric_nonsingular_converges_within_dimension() {
        for seed in [3u64, 17, 99] {
            let system = random_regularized_system(seed, 9, 4);
            let op = kkt_operator(&system);
            let rhs = system.rhs();
            let (x, report) = minres_solve(&op, &rhs, &MinresConfig::exact()).unwrap();
            assert!(report.iterations_used <= 13);
            let res = &rhs - system.apply(&x);
            assert!(
                linalg::inf_norm(&res) <= 1e-8 * linalg::inf_norm(&rhs).max(1.0),
                "seed {seed}: residual {:.3e}",
                linalg::inf_norm(&res)
            );
        }
    }

    #[test]
    fn scalar_kkt_solution_matches_dense() {
        // W = [1], J = [1], rhs = (0, 1): solution (1, -1)
        let system = KktSystem {
            w: DMatrix::identity(1, 1),
            j: DMatrix::identity(1, 1),
            rhs_top: DVector::zeros(1),
            rhs_bottom: DVector::from_vec(vec![1.0]),
            lambda: 0.0,
        };
        let op = kkt_operator(&system);
        let (x, report) = minres_solve(&op, &system.rhs(), &MinresConfig::exact()).unwrap();
        assert!(report.iterations_used <= 2);
        assert!((x[0] - 1.0).abs() < 1e-8);
        assert!((x[1] + 1.0).abs() < 1e-8);
        let dense = kkt::solve_dense(&system).unwrap();
        assert!((x[0] - dense.d[0]).abs() < 1e-8);
        assert!((x[1] - dense.delta[0]).abs() < 1e-8);
    }

    #[test]
    fn exactness_at_full_dimension_battery() {
        for seed in 0..100u64 {
            let n = 2 + (seed as usize * 5) % 19;
            let m = 1 + (seed as usize * 3) % n.min(8);
            let system = random_regularized_system(seed.wrapping_add(1000), n, m);
            let op = kkt_operator(&system);
            let rhs = system.rhs();
            let cfg = MinresConfig {
                max_iterations: Some(n + m),
                ..MinresConfig::exact()
            };
            let (x, _) = minres_solve(&op, &rhs, &cfg).unwrap();
            let dense = kkt::solve_dense(&system).unwrap();
            let mut stacked = DVector::zeros(n + m);
            stacked.rows_mut(0, n).copy_from(&dense.d);
            stacked.rows_mut(n, m).copy_from(&dense.delta);
            let diff = linalg::inf_norm(&(&x - &stacked));
            let scale = linalg::inf_norm(&stacked).max(1.0);
            assert!(
                diff <= 1e-6 * scale,
                "seed {seed} (n={n}, m={m}): minres vs dense diff {diff:.3e}"
            );
        }
    }

    #[test]
    fn residual_two_norm_history_is_monotone() {
        for seed in [11u64, 42, 333] {
            let system = random_regularized_system(seed, 12, 5);
            let op = kkt_operator(&system);
            let (_, report) = minres_solve(&op, &system.rhs(), &MinresConfig::exact()).unwrap();
            for pair in report.residual_two_history.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-12,
                    "seed {seed}: 2-norm residual increased {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn kkt_operator_matches_dense_product() {
        let system = random_regularized_system(5, 7, 3);
        let op = kkt_operator(&system);
        assert_eq!(op.dim(), 10);
        assert!(linalg::inf_norm(&op.apply(&DVector::zeros(10))) == 0.0);
        let dense = system.dense_matrix();
        // basis probe: first column
        let mut e1 = DVector::zeros(10);
        e1[0] = 1.0;
        let col = op.apply(&e1);
        assert!(linalg::inf_norm(&(&col - dense.column(0).clone_owned())) <= 1e-12);
        // random probe
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let v = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let blockwise = op.apply(&v);
        let explicit = &dense * &v;
        assert!(linalg::inf_norm(&(blockwise - explicit)) <= 1e-12);
    }

    #[test]
    fn asymmetric_operator_rejected_in_validation_mode() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 0.0, 1.0]);
        let cfg = MinresConfig {
            validate_symmetry: true,
            ..MinresConfig::exact()
        };
        let rhs = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            minres_solve(&m, &rhs, &cfg),
            Err(SqpError::AsymmetricOperator { .. })
        ));
    }

    #[test]
    fn contraction_measurement() {
        let mut report = MinresReport {
            residual_two_history: vec![1.0],
            ..Default::default()
        };
        assert!(matches!(
            measure_contraction(&report),
            Err(SqpError::InsufficientData(_))
        ));
        report.residual_two_history = vec![1.0, 0.5, 0.25];
        assert!((measure_contraction(&report).unwrap() - 0.5).abs() < 1e-14);
        report.residual_two_history = vec![1.0, 1.0, 1.0];
        assert!((measure_contraction(&report).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_history_too_short_for_contraction() {
        let m = DMatrix::<f64>::identity(4, 4);
        let rhs = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let (_, report) = minres_solve(&m, &rhs, &MinresConfig::exact()).unwrap();
        assert_eq!(report.residual_two_history.len(), 1);
        assert!(measure_contraction(&report).is_err());
    }

    #[test]
    fn kkt_operator_on_assembled_problem() {
        let oracle = crate::suite::maratos_counterexample();
        let w = PrimalDual::new(
            DVector::from_vec(vec![0.4, 1.2]),
            DVector::from_vec(vec![-0.3]),
        );
        let system = kkt::assemble(&oracle, &w, HessianSource::Exact, None).unwrap();
        let system = kkt::regularize(system, 1e-8).unwrap();
        let op = kkt_operator(&system);
        let (z, report) = minres_solve(&op, &system.rhs(), &MinresConfig::exact()).unwrap();
        assert!(report.converged || report.iterations_used == 3);
        let dense = kkt::solve_dense(&system).unwrap();
        assert!((z[0] - dense.d[0]).abs() < 1e-7);
        assert!((z[2] - dense.delta[0]).abs() < 1e-7);
    }
}
