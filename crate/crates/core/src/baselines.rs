//! Comparison methods sharing the step machinery of [`crate::solver`]:
//! classical l1-merit line-search SQP, second-order correction, watchdog,
//! and SQP with an augmented-Lagrangian merit function. All emit the same
//! trace schema and use the same termination rule, KKT solve, and counters,
//! so benchmark profiles compare methods rather than plumbing.

use nalgebra::DVector;

use crate::error::{Result, SqpError};
use crate::linalg;
use crate::merit::{self, MeritState};
use crate::problem::{PrimalDual, ProblemOracle};
use crate::solver::{
    prepare_step, Branch, DeterministicSource, IterationRecord, IterationSource, Prepared,
    SolveOutcome, SolveStatus, SolverConfig, StepContext, TerminationReference,
};
use crate::suite::StartSpec;

/// Method selector, addressable by string key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// The modified line-search method.
    Ours,
    SqpL1,
    SecondOrderCorrection,
    Watchdog,
    AugLag,
}

impl Method {
    pub fn key(&self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::SqpL1 => "sqp-l1",
            Method::SecondOrderCorrection => "soc",
            Method::Watchdog => "watchdog",
            Method::AugLag => "auglag",
        }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        Ok(match key {
            "ours" => Method::Ours,
            "sqp-l1" => Method::SqpL1,
            "soc" => Method::SecondOrderCorrection,
            "watchdog" => Method::Watchdog,
            "auglag" => Method::AugLag,
            other => return Err(SqpError::UnknownKey(format!("method {other}"))),
        })
    }

    pub fn all() -> [Method; 5] {
        [
            Method::Ours,
            Method::SqpL1,
            Method::SecondOrderCorrection,
            Method::Watchdog,
            Method::AugLag,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub method: Method,
    /// Relaxed unit steps tolerated before a watchdog restart.
    pub watchdog_relaxed_steps: usize,
    /// Force a restart at the end of every relaxed window (ablation switch,
    /// reduces the watchdog to a strict line search).
    pub watchdog_restart_always: bool,
    /// Initial augmented-Lagrangian penalty.
    pub auglag_penalty_init: f64,
    /// Penalty growth cap.
    pub auglag_penalty_cap: f64,
    /// Ablation switch: with the correction step zeroed, the arc search
    /// degenerates to the classical backtracking.
    pub soc_correction_enabled: bool,
    pub solver: SolverConfig,
}

impl BaselineConfig {
    pub fn new(method: Method) -> Self {
        Self::with_solver(method, SolverConfig::default())
    }

    /// The classical methods (l1 and augmented-Lagrangian SQP) solve the raw
    /// Newton-KKT system of their original formulations; the remedy methods
    /// share the safeguarded (curvature-regularized) subproblem.
    pub fn with_solver(method: Method, mut solver: SolverConfig) -> Self {
        solver.regularize = !matches!(method, Method::SqpL1 | Method::AugLag);
        Self {
            method,
            watchdog_relaxed_steps: 5,
            watchdog_restart_always: false,
            auglag_penalty_init: 1e6,
            auglag_penalty_cap: 1e12,
            soc_correction_enabled: true,
            solver,
        }
    }

    fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.watchdog_relaxed_steps == 0 {
            return Err(SqpError::InvalidConfig(
                "watchdog_relaxed_steps must be >= 1".into(),
            ));
        }
        if self.auglag_penalty_init <= 0.0 {
            return Err(SqpError::InvalidConfig(
                "auglag_penalty_init must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dispatch a method on a deterministic problem.
pub fn solve_with_method(
    oracle: &ProblemOracle,
    start: &StartSpec,
    config: &BaselineConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    match config.method {
        Method::Ours => crate::solver::solve(oracle, start, &config.solver),
        Method::SqpL1 => solve_sqp_l1(oracle, start, config),
        Method::SecondOrderCorrection => solve_second_order_correction(oracle, start, config),
        Method::Watchdog => solve_watchdog(oracle, start, config),
        Method::AugLag => solve_auglag_merit(oracle, start, config),
    }
}

struct Loop<'a> {
    src: DeterministicSource<'a>,
    cfg: &'a SolverConfig,
    w: PrimalDual,
    merit_state: MeritState,
    term_ref: Option<TerminationReference>,
    minres_total: usize,
    trace: Vec<IterationRecord>,
    status: SolveStatus,
    last_residuals: (f64, f64),
}

impl<'a> Loop<'a> {
    fn new(oracle: &'a ProblemOracle, start: &StartSpec, cfg: &'a SolverConfig) -> Result<Self> {
        let w = start.resolve(oracle)?;
        Ok(Self {
            src: DeterministicSource {
                oracle,
                first_order: cfg.first_order,
            },
            cfg,
            w,
            merit_state: MeritState::new(cfg.tau_init, cfg.sigma, cfg.eps_tau)?,
            term_ref: None,
            minres_total: 0,
            trace: Vec::new(),
            status: SolveStatus::IterationLimit,
            last_residuals: (f64::NAN, f64::NAN),
        })
    }

    fn prepare(&mut self, k: usize) -> Result<Option<Box<StepContext>>> {
        match prepare_step(
            &mut self.src,
            self.cfg,
            k,
            &self.w,
            &mut self.term_ref,
            &mut self.minres_total,
        )? {
            Prepared::Step(ctx) => {
                self.last_residuals = (ctx.stationarity, ctx.feasibility);
                Ok(Some(ctx))
            }
            Prepared::Done {
                status,
                stationarity,
                feasibility,
            } => {
                self.status = status;
                self.last_residuals = (stationarity, feasibility);
                Ok(None)
            }
        }
    }

    /// Update the merit parameter for this step and return (tau, trial).
    fn update_tau(&mut self, ctx: &StepContext) -> (f64, f64) {
        let (next, trial) = merit::update_merit_parameter(
            self.merit_state,
            ctx.est.g.dot(&ctx.d),
            ctx.d_w_d(),
            ctx.c_l1(),
            ctx.update_scale(),
        );
        self.merit_state = next;
        (self.merit_state.tau, trial)
    }

    fn phi_at(&self, x: &DVector<f64>, tau: f64) -> f64 {
        merit::merit_phi(self.src.f_trial(x), &self.src.c(x), tau)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_record(
        &mut self,
        ctx: &StepContext,
        tau: f64,
        tau_trial: f64,
        delta_l: f64,
        phi_current: f64,
        alpha: f64,
        backtracks: usize,
        branch: Branch,
        lhs: f64,
        rhs: f64,
        penalty_r: f64,
    ) {
        self.trace.push(IterationRecord {
            k: ctx.k,
            x: self.w.x.clone(),
            y: self.w.y.clone(),
            d: ctx.d.clone(),
            delta: ctx.delta.clone(),
            d_norm: ctx.d.norm(),
            gamma: f64::NAN,
            tau,
            tau_trial,
            alpha,
            branch,
            backtracks,
            feasibility: ctx.feasibility,
            stationarity: ctx.stationarity,
            sample_sizes: ctx.est.sizes,
            counters_delta: self.src.counts().delta(&ctx.counts_before),
            lambda: ctx.system.lambda,
            minres_iterations: ctx.minres_iterations,
            delta_l,
            d_w_d: ctx.d_w_d(),
            c_l1: ctx.c_l1(),
            phi_current,
            phi_trial: lhs,
            lhs,
            rhs,
            penalty_r,
            eps_a: 0.0,
        });
    }

    fn finish(self) -> SolveOutcome {
        SolveOutcome {
            status: self.status,
            iterations: self.trace.len(),
            final_iterate: self.w,
            trace: self.trace,
            counters: self.src.counts(),
            minres_total: self.minres_total,
            final_stationarity: self.last_residuals.0,
            final_feasibility: self.last_residuals.1,
        }
    }
}

/// Classical line-search SQP on the l1 merit function: the adaptive gate is
/// disabled and every iteration backtracks the classical condition from the
/// unit trial step.
pub fn solve_sqp_l1(
    oracle: &ProblemOracle,
    start: &StartSpec,
    config: &BaselineConfig,
) -> Result<SolveOutcome> {
    let cfg = &config.solver;
    let mut lp = Loop::new(oracle, start, cfg)?;
    let mut k = 0;
    while let Some(ctx) = lp.prepare(k)? {
        let (tau, tau_trial) = lp.update_tau(&ctx);
        let delta_l = merit::model_reduction(tau, &ctx.est.g, &ctx.d, &ctx.c);
        let phi_current = merit::merit_phi(ctx.est.f, &ctx.c, tau);
        let res = merit::backtrack(
            |alpha| {
                let xt = &lp.w.x + &ctx.d * alpha;
                (
                    lp.phi_at(&xt, tau),
                    merit::classical_rhs(phi_current, alpha, delta_l, cfg.eta, 0.0),
                )
            },
            cfg.nu_alpha,
            1.0,
            cfg.max_backtracks,
        );
        let ls = match res {
            Ok(r) => r,
            Err(SqpError::LineSearchFailure { .. }) => {
                lp.status = SolveStatus::LinesearchFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        lp.push_record(
            &ctx,
            tau,
            tau_trial,
            delta_l,
            phi_current,
            ls.alpha,
            ls.backtracks,
            Branch::Classical,
            ls.lhs,
            ls.rhs,
            f64::NAN,
        );
        lp.w = PrimalDual::new(&lp.w.x + &ctx.d * ls.alpha, &lp.w.y + &ctx.delta);
        k += 1;
    }
    Ok(lp.finish())
}

/// Second-order correction: when the unit step fails the classical test, a
/// correction step cancelling constraint curvature is computed from the
/// constraint values at the trial point,
/// d_hat = -J'(JJ')^{-1} c(x + d), and the arc x + alpha d + alpha^2 d_hat is
/// searched under the classical condition.
pub fn solve_second_order_correction(
    oracle: &ProblemOracle,
    start: &StartSpec,
    config: &BaselineConfig,
) -> Result<SolveOutcome> {
    let cfg = &config.solver;
    let mut lp = Loop::new(oracle, start, cfg)?;
    let mut k = 0;
    while let Some(ctx) = lp.prepare(k)? {
        let (tau, tau_trial) = lp.update_tau(&ctx);
        let delta_l = merit::model_reduction(tau, &ctx.est.g, &ctx.d, &ctx.c);
        let phi_current = merit::merit_phi(ctx.est.f, &ctx.c, tau);

        // plain unit trial first
        let x_unit = &lp.w.x + &ctx.d;
        let f_unit = lp.src.f_trial(&x_unit);
        let c_unit = lp.src.c(&x_unit);
        let phi_unit = merit::merit_phi(f_unit, &c_unit, tau);
        let rhs_unit = merit::classical_rhs(phi_current, 1.0, delta_l, cfg.eta, 0.0);

        let (step_to, alpha, backtracks, branch, lhs, rhs);
        if phi_unit <= rhs_unit {
            step_to = x_unit;
            alpha = 1.0;
            backtracks = 0;
            branch = Branch::Classical;
            lhs = phi_unit;
            rhs = rhs_unit;
        } else {
            // correction from the constraint values at the trial point
            let d_hat = if config.soc_correction_enabled {
                let jjt = &ctx.jac * ctx.jac.transpose();
                let t = linalg::lu_solve_refined(&jjt, &c_unit)?;
                -(ctx.jac.transpose() * t)
            } else {
                DVector::zeros(ctx.d.len())
            };
            let res = merit::backtrack(
                |a| {
                    let xt = &lp.w.x + &ctx.d * a + &d_hat * (a * a);
                    (
                        lp.phi_at(&xt, tau),
                        merit::classical_rhs(phi_current, a, delta_l, cfg.eta, 0.0),
                    )
                },
                cfg.nu_alpha,
                1.0,
                cfg.max_backtracks,
            );
            let ls = match res {
                Ok(r) => r,
                Err(SqpError::LineSearchFailure { .. }) => {
                    lp.status = SolveStatus::LinesearchFailure;
                    break;
                }
                Err(e) => return Err(e),
            };
            step_to = &lp.w.x + &ctx.d * ls.alpha + &d_hat * (ls.alpha * ls.alpha);
            alpha = ls.alpha;
            backtracks = ls.backtracks;
            branch = Branch::SocArc;
            lhs = ls.lhs;
            rhs = ls.rhs;
        }

        lp.push_record(
            &ctx,
            tau,
            tau_trial,
            delta_l,
            phi_current,
            alpha,
            backtracks,
            branch,
            lhs,
            rhs,
            f64::NAN,
        );
        lp.w = PrimalDual::new(step_to, &lp.w.y + &ctx.delta);
        k += 1;
    }
    Ok(lp.finish())
}

struct Anchor {
    w: PrimalDual,
    d: DVector<f64>,
    delta: DVector<f64>,
    tau: f64,
    phi: f64,
    delta_l: f64,
    d_w_d: f64,
    c_l1: f64,
    stationarity: f64,
    feasibility: f64,
    lambda: f64,
    k: usize,
    state: MeritState,
}

/// Rewind to the anchor, run the strict backtracking search along its
/// direction, record a restart row, and step. Returns false on line-search
/// failure (status already set).
fn watchdog_restart(lp: &mut Loop, a: Anchor, k: usize, cfg: &SolverConfig) -> Result<bool> {
    lp.w = a.w.clone();
    lp.merit_state = a.state;
    let counts_before = lp.src.counts();
    let res = merit::backtrack(
        |alpha| {
            let xt = &a.w.x + &a.d * alpha;
            (
                lp.phi_at(&xt, a.tau),
                merit::classical_rhs(a.phi, alpha, a.delta_l, cfg.eta, 0.0),
            )
        },
        cfg.nu_alpha,
        1.0,
        cfg.max_backtracks,
    );
    let ls = match res {
        Ok(r) => r,
        Err(SqpError::LineSearchFailure { .. }) => {
            lp.status = SolveStatus::LinesearchFailure;
            return Ok(false);
        }
        Err(e) => return Err(e),
    };
    lp.trace.push(IterationRecord {
        k,
        x: a.w.x.clone(),
        y: a.w.y.clone(),
        d: a.d.clone(),
        delta: a.delta.clone(),
        d_norm: a.d.norm(),
        gamma: f64::NAN,
        tau: a.tau,
        tau_trial: f64::NAN,
        alpha: ls.alpha,
        branch: Branch::Restart,
        backtracks: ls.backtracks,
        feasibility: a.feasibility,
        stationarity: a.stationarity,
        sample_sizes: None,
        counters_delta: lp.src.counts().delta(&counts_before),
        lambda: a.lambda,
        minres_iterations: 0,
        delta_l: a.delta_l,
        d_w_d: a.d_w_d,
        c_l1: a.c_l1,
        phi_current: a.phi,
        phi_trial: ls.lhs,
        lhs: ls.lhs,
        rhs: ls.rhs,
        penalty_r: f64::NAN,
        eps_a: 0.0,
    });
    lp.w = PrimalDual::new(&a.w.x + &a.d * ls.alpha, &a.w.y + &a.delta);
    Ok(true)
}

/// Watchdog: when a unit step fails the sufficient-decrease test, take it
/// anyway (relaxed) and monitor the merit against the anchor for up to
/// `watchdog_relaxed_steps` iterations; when no iterate in the window passes
/// the anchor test, return to the anchor and take a strict backtracking step
/// along the anchor's direction. Anchor comparisons use the merit parameter
/// frozen at the anchor.
pub fn solve_watchdog(
    oracle: &ProblemOracle,
    start: &StartSpec,
    config: &BaselineConfig,
) -> Result<SolveOutcome> {
    let cfg = &config.solver;
    let mut lp = Loop::new(oracle, start, cfg)?;
    let mut anchor: Option<Anchor> = None;
    let mut k = 0;
    loop {
        let maybe_ctx = lp.prepare(k)?;
        let Some(ctx) = maybe_ctx else {
            // a gambled iterate can be unusable (rank-deficient or
            // overflowed); that too is a failed gamble, so rewind
            let recoverable = matches!(lp.status, SolveStatus::IllPosed | SolveStatus::LicqFailure);
            if recoverable {
                if let Some(a) = anchor.take() {
                    if !watchdog_restart(&mut lp, a, k, cfg)? {
                        break;
                    }
                    k += 1;
                    continue;
                }
            }
            break;
        };
        let (tau, tau_trial) = lp.update_tau(&ctx);
        let delta_l = merit::model_reduction(tau, &ctx.est.g, &ctx.d, &ctx.c);
        let phi_current = merit::merit_phi(ctx.est.f, &ctx.c, tau);

        if let Some(a) = &anchor {
            // sufficient decrease relative to the anchor, at the anchor's tau
            let phi_here = merit::merit_phi(ctx.est.f, &ctx.c, a.tau);
            if !config.watchdog_restart_always && phi_here <= a.phi - cfg.eta * a.delta_l {
                anchor = None; // progress made; fall through to a fresh test
            } else if k - a.k >= config.watchdog_relaxed_steps {
                // window exhausted without sufficient decrease
                let a = anchor.take().expect("anchor present");
                if !watchdog_restart(&mut lp, a, k, cfg)? {
                    break;
                }
                k += 1;
                continue;
            } else {
                // still inside the window: another relaxed unit step
                lp.push_record(
                    &ctx,
                    tau,
                    tau_trial,
                    delta_l,
                    phi_current,
                    1.0,
                    0,
                    Branch::Relaxed,
                    phi_here,
                    a.phi - cfg.eta * a.delta_l,
                    f64::NAN,
                );
                lp.w = PrimalDual::new(&lp.w.x + &ctx.d, &lp.w.y + &ctx.delta);
                k += 1;
                continue;
            }
        }

        // no active anchor: try the unit step strictly
        let x_unit = &lp.w.x + &ctx.d;
        let phi_unit = lp.phi_at(&x_unit, tau);
        let rhs_unit = merit::classical_rhs(phi_current, 1.0, delta_l, cfg.eta, 0.0);
        if phi_unit <= rhs_unit {
            lp.push_record(
                &ctx,
                tau,
                tau_trial,
                delta_l,
                phi_current,
                1.0,
                0,
                Branch::Strict,
                phi_unit,
                rhs_unit,
                f64::NAN,
            );
            lp.w = PrimalDual::new(x_unit, &lp.w.y + &ctx.delta);
        } else {
            // gamble: take the unit step relaxed and start monitoring
            anchor = Some(Anchor {
                w: lp.w.clone(),
                d: ctx.d.clone(),
                delta: ctx.delta.clone(),
                tau,
                phi: phi_current,
                delta_l,
                d_w_d: ctx.d_w_d(),
                c_l1: ctx.c_l1(),
                stationarity: ctx.stationarity,
                feasibility: ctx.feasibility,
                lambda: ctx.system.lambda,
                k,
                state: lp.merit_state,
            });
            lp.push_record(
                &ctx,
                tau,
                tau_trial,
                delta_l,
                phi_current,
                1.0,
                0,
                Branch::Relaxed,
                phi_unit,
                rhs_unit,
                f64::NAN,
            );
            lp.w = PrimalDual::new(x_unit, &lp.w.y + &ctx.delta);
        }
        k += 1;
    }
    Ok(lp.finish())
}

/// SQP with the augmented-Lagrangian merit function
/// Phi_r(x, y) = f + y'c + (r/2)||c||_2^2, searched jointly along (d, delta).
/// The penalty doubles until the directional derivative is sufficiently
/// negative, capped and recorded in the trace.
pub fn solve_auglag_merit(
    oracle: &ProblemOracle,
    start: &StartSpec,
    config: &BaselineConfig,
) -> Result<SolveOutcome> {
    let cfg = &config.solver;
    let mut lp = Loop::new(oracle, start, cfg)?;
    let mut r = config.auglag_penalty_init;
    let mut k = 0;
    while let Some(ctx) = lp.prepare(k)? {
        let phi_r = |f: f64, c: &DVector<f64>, y: &DVector<f64>, r: f64| -> f64 {
            f + y.dot(c) + 0.5 * r * c.norm_squared()
        };
        let dir_derivative = |r: f64| -> f64 {
            let grad_x =
                &ctx.est.g + ctx.jac.transpose() * &lp.w.y + ctx.jac.transpose() * &ctx.c * r;
            grad_x.dot(&ctx.d) + ctx.c.dot(&ctx.delta)
        };
        let step_norm_sq = ctx.d.norm_squared() + ctx.delta.norm_squared();
        let mut dd = dir_derivative(r);
        while dd > -1e-8 * step_norm_sq && r < config.auglag_penalty_cap {
            r = (r * 2.0).min(config.auglag_penalty_cap);
            dd = dir_derivative(r);
        }

        let phi_current = phi_r(ctx.est.f, &ctx.c, &lp.w.y, r);
        let res = merit::backtrack(
            |alpha| {
                let xt = &lp.w.x + &ctx.d * alpha;
                let yt = &lp.w.y + &ctx.delta * alpha;
                let ft = lp.src.f_trial(&xt);
                let ct = lp.src.c(&xt);
                (phi_r(ft, &ct, &yt, r), phi_current + cfg.eta * alpha * dd)
            },
            cfg.nu_alpha,
            1.0,
            cfg.max_backtracks,
        );
        let ls = match res {
            Ok(ls) => ls,
            Err(SqpError::LineSearchFailure { .. }) => {
                lp.status = SolveStatus::LinesearchFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        lp.push_record(
            &ctx,
            f64::NAN,
            f64::NAN,
            f64::NAN,
            phi_current,
            ls.alpha,
            ls.backtracks,
            Branch::AugLag,
            ls.lhs,
            ls.rhs,
            r,
        );
        lp.w = PrimalDual::new(&lp.w.x + &ctx.d * ls.alpha, &lp.w.y + &ctx.delta * ls.alpha);
        k += 1;
    }
    Ok(lp.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite;

    fn config_for(method: Method) -> BaselineConfig {
        BaselineConfig::new(method)
    }

    #[test]
    fn feasible_stationary_start_converges_for_all_methods() {
        let entry = suite::bank_entry("maratos").unwrap();
        let start = StartSpec::explicit(entry.solution.x.clone(), entry.solution.y.clone());
        for method in Method::all() {
            let outcome = solve_with_method(&entry.oracle(), &start, &config_for(method)).unwrap();
            assert_eq!(outcome.status, SolveStatus::Converged, "{}", method.key());
            assert_eq!(outcome.iterations, 0, "{}", method.key());
        }
    }

    #[test]
    fn sqp_l1_suffers_small_steps_from_unfavorable_start() {
        let entry = suite::bank_entry("maratos").unwrap();
        let mut cfg = config_for(Method::SqpL1);
        cfg.solver.tau_init = 0.1;
        let outcome = solve_sqp_l1(&entry.oracle(), &entry.start, &cfg).unwrap();
        let small_steps = outcome.trace.iter().filter(|r| r.alpha < 1.0).count();
        assert!(
            small_steps >= 3,
            "expected at least 3 rejected unit steps, saw {small_steps}"
        );
    }

    #[test]
    fn soc_accepts_unit_steps_on_quadratic_constraints() {
        let entry = suite::bank_entry("maratos").unwrap();
        let mut cfg = config_for(Method::SecondOrderCorrection);
        cfg.solver.tau_init = 0.1;
        let outcome = solve_second_order_correction(&entry.oracle(), &entry.start, &cfg).unwrap();
        assert_eq!(outcome.status, SolveStatus::Converged);
        for rec in outcome.trace.iter().skip(2) {
            assert_eq!(rec.alpha, 1.0, "k = {}", rec.k);
        }
        assert!(outcome.final_iterate.distance(&entry.solution) <= 1e-6);
    }

    #[test]
    fn soc_with_feasible_trial_reduces_to_classical_step() {
        // linear constraints: c(x + d) = c + J d = 0 to round-off, so the
        // correction vanishes and the steps match plain backtracking
        let entry = suite::bank_entry("exp-fit").unwrap();
        let mut cfg = config_for(Method::SecondOrderCorrection);
        cfg.solver.regularize = false; // align machinery with the raw classical method
        let soc = solve_second_order_correction(&entry.oracle(), &entry.start, &cfg).unwrap();
        let l1 = solve_sqp_l1(&entry.oracle(), &entry.start, &config_for(Method::SqpL1)).unwrap();
        assert_eq!(soc.iterations, l1.iterations);
        for (a, b) in soc.trace.iter().zip(&l1.trace) {
            assert_eq!(a.alpha, b.alpha);
            assert!((&a.x - &b.x).norm() <= 1e-10);
        }
    }

    #[test]
    fn soc_without_correction_is_bitwise_sqp_l1() {
        // with the correction zeroed and the same raw system, the arc search
        // degenerates to the classical backtracking, iterate for iterate
        for key in [
            "maratos",
            "rosenbrock-circle",
            "penalty-cubic",
            "poly7",
            "quartic-trig",
        ] {
            let entry = suite::bank_entry(key).unwrap();
            let mut cfg = config_for(Method::SecondOrderCorrection);
            cfg.soc_correction_enabled = false;
            cfg.solver.regularize = false;
            cfg.solver.max_iterations = 25;
            let soc = solve_second_order_correction(&entry.oracle(), &entry.start, &cfg).unwrap();
            let mut l1_cfg = config_for(Method::SqpL1);
            l1_cfg.solver.max_iterations = 25;
            let l1 = solve_sqp_l1(&entry.oracle(), &entry.start, &l1_cfg).unwrap();
            assert_eq!(soc.iterations, l1.iterations, "{key}");
            for (a, b) in soc.trace.iter().zip(&l1.trace) {
                assert_eq!(a.x, b.x, "{key} k={}", a.k);
                assert_eq!(a.alpha, b.alpha, "{key} k={}", a.k);
                assert_eq!(a.tau, b.tau, "{key} k={}", a.k);
            }
            assert_eq!(soc.final_iterate.x, l1.final_iterate.x, "{key}");
        }
    }

    #[test]
    fn watchdog_window_one_restart_always_matches_sqp_l1_decisions() {
        for key in ["maratos", "rosenbrock-circle", "penalty-cubic"] {
            let entry = suite::bank_entry(key).unwrap();
            let mut cfg = config_for(Method::Watchdog);
            cfg.watchdog_relaxed_steps = 1;
            cfg.watchdog_restart_always = true;
            cfg.solver.regularize = false;
            cfg.solver.max_iterations = 60;
            let wd = solve_watchdog(&entry.oracle(), &entry.start, &cfg).unwrap();
            let mut l1_cfg = config_for(Method::SqpL1);
            l1_cfg.solver.max_iterations = 40;
            let l1 = solve_sqp_l1(&entry.oracle(), &entry.start, &l1_cfg).unwrap();
            // accepted (non-relaxed) watchdog steps replay the classical
            // decisions: same accepted points in the same order
            let accepted: Vec<_> = wd
                .trace
                .iter()
                .filter(|r| r.branch != Branch::Relaxed)
                .collect();
            for (a, b) in accepted.iter().zip(&l1.trace) {
                assert_eq!(a.x, b.x, "{key}: accepted point diverged");
                assert_eq!(a.alpha, b.alpha, "{key}: step size diverged");
            }
            assert!(!accepted.is_empty(), "{key}");
        }
    }

    #[test]
    fn watchdog_converges_on_maratos_with_unit_steps() {
        let entry = suite::bank_entry("maratos").unwrap();
        let mut cfg = config_for(Method::Watchdog);
        cfg.solver.tau_init = 0.1;
        let outcome = solve_watchdog(&entry.oracle(), &entry.start, &cfg).unwrap();
        assert_eq!(outcome.status, SolveStatus::Converged);
        for rec in outcome.trace.iter().skip(2) {
            assert_eq!(rec.alpha, 1.0, "k = {}", rec.k);
        }
        assert!(outcome.final_iterate.distance(&entry.solution) <= 1e-6);
    }

    #[test]
    fn watchdog_restart_path_on_divergent_unit_steps() {
        // 1-d unconstrained flat-tail objective: every unit step overshoots
        // and raises the merit, forcing the watchdog to exhaust its window
        // and restart from the anchor.
        use crate::problem::Problem;
        use nalgebra::{DMatrix, DVector};
        use std::sync::Arc;

        struct FlatTail;
        impl Problem for FlatTail {
            fn primal_dim(&self) -> usize {
                1
            }
            fn constraint_dim(&self) -> usize {
                0
            }
            fn objective(&self, x: &DVector<f64>) -> f64 {
                (1.0 + x[0] * x[0]).sqrt()
            }
            fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
                DVector::from_vec(vec![x[0] / (1.0 + x[0] * x[0]).sqrt()])
            }
            fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_vec(1, 1, vec![(1.0 + x[0] * x[0]).powf(-1.5)])
            }
            fn constraints(&self, _x: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(0)
            }
            fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(0, 1)
            }
            fn constraint_hessian(&self, _i: usize, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
        }

        let oracle = crate::problem::ProblemOracle::new(Arc::new(FlatTail));
        let start = StartSpec::explicit(DVector::from_vec(vec![2.0]), DVector::zeros(0));
        let mut cfg = config_for(Method::Watchdog);
        cfg.solver.max_iterations = 40;
        let counts_unconstrained_newton = {
            let fresh = oracle.fresh();
            let out = solve_watchdog(&fresh, &start, &cfg).unwrap();
            assert!(
                out.trace.iter().any(|r| r.branch == Branch::Restart),
                "expected a restart in the trace"
            );
            let relaxed = out
                .trace
                .iter()
                .filter(|r| r.branch == Branch::Relaxed)
                .count();
            assert!(relaxed >= cfg.watchdog_relaxed_steps);
            out.counters.function
        };
        // the failed gamble costs extra function evaluations
        assert!(counts_unconstrained_newton > 10.0);
    }

    #[test]
    fn watchdog_equals_sqp_l1_when_strict_always_passes() {
        // near-quadratic problem: unit steps satisfy strict decrease at once
        let entry = suite::bank_entry("sphere-distance").unwrap();
        let wd =
            solve_watchdog(&entry.oracle(), &entry.start, &config_for(Method::Watchdog)).unwrap();
        let l1 = solve_sqp_l1(&entry.oracle(), &entry.start, &config_for(Method::SqpL1)).unwrap();
        if wd.trace.iter().all(|r| r.branch == Branch::Strict) {
            assert_eq!(wd.iterations, l1.iterations);
            for (a, b) in wd.trace.iter().zip(&l1.trace) {
                assert!((&a.x - &b.x).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn auglag_accepts_unit_steps_on_maratos_with_light_penalty() {
        let entry = suite::bank_entry("maratos").unwrap();
        let mut cfg = config_for(Method::AugLag);
        cfg.solver.tau_init = 0.1;
        cfg.auglag_penalty_init = 1.0;
        let outcome = solve_auglag_merit(&entry.oracle(), &entry.start, &cfg).unwrap();
        assert_eq!(outcome.status, SolveStatus::Converged);
        for rec in outcome.trace.iter().skip(2) {
            assert_eq!(rec.alpha, 1.0, "k = {}", rec.k);
        }
        assert!(outcome.final_iterate.distance(&entry.solution) <= 1e-6);
        assert!(outcome.trace.iter().all(|r| r.penalty_r.is_finite()));
    }

    #[test]
    fn auglag_penalty_never_grows_on_feasible_path() {
        // starting close to the solution with near-exact multipliers keeps
        // the penalty at its initial value
        let entry = suite::bank_entry("sphere-distance").unwrap();
        let mut near = entry.solution.clone();
        near.x[0] += 1e-4;
        let start = StartSpec::explicit(near.x.clone(), near.y.clone());
        let cfg = config_for(Method::AugLag);
        let outcome = solve_auglag_merit(&entry.oracle(), &start, &cfg).unwrap();
        assert_eq!(outcome.status, SolveStatus::Converged);
        for rec in &outcome.trace {
            assert_eq!(rec.penalty_r, cfg.auglag_penalty_init);
        }
    }

    #[test]
    fn method_keys_round_trip() {
        for method in Method::all() {
            assert_eq!(Method::from_key(method.key()).unwrap(), method);
        }
        assert!(Method::from_key("nope").is_err());
    }

    #[test]
    fn shared_trace_schema_between_methods() {
        let entry = suite::bank_entry("maratos").unwrap();
        for method in Method::all() {
            let mut cfg = config_for(method);
            cfg.solver.tau_init = 0.1;
            cfg.auglag_penalty_init = 1.0;
            cfg.solver.max_iterations = 30;
            let outcome = solve_with_method(&entry.oracle(), &entry.start, &cfg).unwrap();
            for rec in &outcome.trace {
                // every record carries the shared scalar schema
                assert!(rec.alpha > 0.0 && rec.alpha <= 1.0);
                assert!(rec.feasibility.is_finite());
                assert!(rec.stationarity.is_finite());
            }
        }
    }
}
