//! The modified line-search SQP driver.
//!
//! Each iteration: obtain objective estimates (exact or subsampled), solve
//! the KKT system (dense or MINRES), update the merit parameter, then pick a
//! step size. While ||d_k|| exceeds the adaptive threshold gamma_k the
//! classical sufficient-decrease condition is backtracked; once the direction
//! is small, the unit step is tried against the classical condition and, if
//! rejected, the modified condition with its second-order correction terms is
//! backtracked and gamma shrinks. Duals always take the full step.
//!
//! The same per-iteration step machinery (evaluation, KKT solve, merit
//! update, trace records, termination) is shared with the comparison methods
//! in [`crate::baselines`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SqpError};
use crate::kkt::{self, KktSystem, RegularizationConfig};
use crate::linalg;
use crate::merit::{self, MeritState, RelaxationBudget};
use crate::minres::{self, MinresConfig};
use crate::problem::{FiniteSumOracle, OracleCounts, PrimalDual, ProblemOracle};
use crate::sampling::{self, BoundConstants, SampleSchedule};
use crate::suite::StartSpec;

/// How the KKT system is solved each iteration.
#[derive(Debug, Clone)]
pub enum SolveMode {
    Dense,
    Minres(MinresConfig),
}

/// Evaluation budgets, in full-evaluation equivalents. `None` means no cap.
#[derive(Debug, Clone, Default)]
pub struct Budgets {
    pub max_function_evals: Option<f64>,
    pub max_gradient_evals: Option<f64>,
    pub max_hessian_evals: Option<f64>,
    pub max_minres_iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Initial merit parameter.
    pub tau_init: f64,
    /// Sufficient-decrease constant.
    pub eta: f64,
    /// Backtracking factor.
    pub nu_alpha: f64,
    /// Threshold reduction factor applied on modified-branch iterations.
    pub nu_gamma: f64,
    /// gamma_0 = gamma0_factor * ||d_0||, fixed after the first KKT solve.
    pub gamma0_factor: f64,
    /// Constraint share reserved by the merit-parameter trial formula.
    pub sigma: f64,
    /// Merit-parameter decrease factor.
    pub eps_tau: f64,
    /// Accepted-step budget.
    pub max_iterations: usize,
    /// Relative termination tolerance for stationarity and feasibility.
    pub termination_tol: f64,
    pub solve_mode: SolveMode,
    /// Replace the curvature matrix by the identity (first-order variant).
    pub first_order: bool,
    /// Enforce positive definiteness of the reduced Hessian. On for the
    /// modified method; the classical baselines solve the raw system.
    pub regularize: bool,
    pub regularization: RegularizationConfig,
    pub max_backtracks: usize,
    pub budgets: Budgets,
    /// Seed for sample draws in the finite-sum path.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau_init: 1.0,
            eta: 1e-4,
            nu_alpha: 0.5,
            nu_gamma: 0.7,
            gamma0_factor: 0.999,
            sigma: 0.5,
            eps_tau: 0.5,
            max_iterations: 100,
            termination_tol: 1e-6,
            solve_mode: SolveMode::Dense,
            first_order: false,
            regularize: true,
            regularization: RegularizationConfig::default(),
            max_backtracks: merit::MAX_BACKTRACKS_DEFAULT,
            budgets: Budgets::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.tau_init <= 0.0 || self.termination_tol <= 0.0 {
            return Err(SqpError::InvalidConfig(
                "tau_init and termination_tol must be positive".into(),
            ));
        }
        for (name, v) in [
            ("eta", self.eta),
            ("nu_alpha", self.nu_alpha),
            ("nu_gamma", self.nu_gamma),
            ("gamma0_factor", self.gamma0_factor),
            ("sigma", self.sigma),
            ("eps_tau", self.eps_tau),
        ] {
            if !in_unit(v) {
                return Err(SqpError::InvalidConfig(format!(
                    "{name} must lie in (0,1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Scheduling of the three estimate streams for the finite-sum path.
#[derive(Debug, Clone)]
pub struct SamplingSchedules {
    pub f: SampleSchedule,
    pub g: SampleSchedule,
    pub h: SampleSchedule,
    /// Surrogate constants for the estimate-error bounds; estimated at the
    /// start point when absent and any stream is subsampled.
    pub bound_constants: Option<BoundConstants>,
}

impl SamplingSchedules {
    pub fn full(n: usize) -> Self {
        Self {
            f: SampleSchedule::Full { n },
            g: SampleSchedule::Full { n },
            h: SampleSchedule::Full { n },
            bound_constants: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    LicqFailure,
    LinesearchFailure,
    IllPosed,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::LicqFailure => "licq_failure",
            SolveStatus::LinesearchFailure => "linesearch_failure",
            SolveStatus::IllPosed => "ill_posed",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, SolveStatus::Converged)
    }
}

/// Which acceptance rule produced the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Classical backtracking while ||d|| > gamma.
    ClassicalLargeD,
    /// Unit step accepted by the classical condition.
    UnitClassical,
    /// Modified condition backtracking (gamma shrinks).
    Modified,
    /// Plain classical backtracking (gate disabled).
    Classical,
    /// Second-order correction arc search.
    SocArc,
    /// Watchdog relaxed unit step (untested).
    Relaxed,
    /// Watchdog strict step.
    Strict,
    /// Watchdog restart step from the anchor.
    Restart,
    /// Augmented-Lagrangian merit step.
    AugLag,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::ClassicalLargeD => "classical_large_d",
            Branch::UnitClassical => "unit_classical",
            Branch::Modified => "modified",
            Branch::Classical => "classical",
            Branch::SocArc => "soc_arc",
            Branch::Relaxed => "relaxed",
            Branch::Strict => "strict",
            Branch::Restart => "restart",
            Branch::AugLag => "auglag",
        }
    }
}

/// One row of the solve trace. Carries every quantity needed to re-verify
/// the accepted inequality offline.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub d: DVector<f64>,
    pub delta: DVector<f64>,
    pub d_norm: f64,
    /// Threshold gamma_k (NaN for methods without the gate).
    pub gamma: f64,
    /// Merit parameter tau_k (NaN for the augmented-Lagrangian method).
    pub tau: f64,
    pub tau_trial: f64,
    pub alpha: f64,
    pub branch: Branch,
    pub backtracks: usize,
    /// ||c(x_k)||_inf.
    pub feasibility: f64,
    /// ||g_k + J_k' y_k||_inf (estimated gradient in subsampled runs).
    pub stationarity: f64,
    pub sample_sizes: Option<(usize, usize, usize)>,
    pub counters_delta: OracleCounts,
    /// Curvature regularization applied this iteration.
    pub lambda: f64,
    pub minres_iterations: usize,
    pub delta_l: f64,
    pub d_w_d: f64,
    pub c_l1: f64,
    pub phi_current: f64,
    pub phi_trial: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Augmented-Lagrangian penalty (NaN elsewhere).
    pub penalty_r: f64,
    pub eps_a: f64,
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_iterate: PrimalDual,
    pub trace: Vec<IterationRecord>,
    pub counters: OracleCounts,
    pub minres_total: usize,
    pub final_stationarity: f64,
    pub final_feasibility: f64,
}

/// Scaled termination reference captured at the first iterate.
#[derive(Debug, Clone, Copy)]
pub struct TerminationReference {
    pub stat_scale: f64,
    pub feas_scale: f64,
}

impl TerminationReference {
    pub fn from_initial(stationarity0: f64, feasibility0: f64) -> Self {
        Self {
            stat_scale: stationarity0.max(1.0),
            feas_scale: feasibility0.max(1.0),
        }
    }

    /// Both residuals under tol times their initial scales.
    pub fn check(&self, stationarity: f64, feasibility: f64, tol: f64) -> bool {
        stationarity <= tol * self.stat_scale && feasibility <= tol * self.feas_scale
    }
}

/// Convenience form of the termination test from raw vectors.
pub fn termination_check(
    g: &DVector<f64>,
    j: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &DVector<f64>,
    reference: &TerminationReference,
    tol: f64,
) -> bool {
    let stat = linalg::inf_norm(&(g + j.transpose() * y));
    let feas = linalg::inf_norm(c);
    reference.check(stat, feas, tol)
}

/// Per-iteration objective estimates handed to the step logic.
pub(crate) struct Estimates {
    pub f: f64,
    pub g: DVector<f64>,
    /// Objective-Hessian surrogate: exact H, subsampled mean, or identity.
    pub h: DMatrix<f64>,
    pub sizes: Option<(usize, usize, usize)>,
    pub eps_f: f64,
    pub eps_g: f64,
}

/// Uniform evaluation interface over the deterministic and finite-sum paths.
pub(crate) trait IterationSource {
    /// Draw this iteration's sample sets (if any) and evaluate estimates.
    fn begin(&mut self, k: usize, x: &DVector<f64>) -> Result<Estimates>;
    /// Objective estimate at a trial point, under the current iteration's
    /// function sample set.
    fn f_trial(&self, x: &DVector<f64>) -> f64;
    fn c(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jac(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn c_hess(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64>;
    fn counts(&self) -> OracleCounts;
}

pub(crate) struct DeterministicSource<'a> {
    pub oracle: &'a ProblemOracle,
    pub first_order: bool,
}

impl IterationSource for DeterministicSource<'_> {
    fn begin(&mut self, _k: usize, x: &DVector<f64>) -> Result<Estimates> {
        let n = self.oracle.primal_dim();
        let h = if self.first_order {
            DMatrix::identity(n, n)
        } else {
            self.oracle.h(x)
        };
        Ok(Estimates {
            f: self.oracle.f(x),
            g: self.oracle.g(x),
            h,
            sizes: None,
            eps_f: 0.0,
            eps_g: 0.0,
        })
    }

    fn f_trial(&self, x: &DVector<f64>) -> f64 {
        self.oracle.f(x)
    }

    fn c(&self, x: &DVector<f64>) -> DVector<f64> {
        self.oracle.c(x)
    }

    fn jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.oracle.jac(x)
    }

    fn c_hess(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.oracle.c_hess(i, x)
    }

    fn counts(&self) -> OracleCounts {
        self.oracle.counters().snapshot()
    }
}

pub(crate) struct SubsampledSource<'a> {
    pub oracle: &'a FiniteSumOracle,
    pub schedules: SamplingSchedules,
    pub constants: BoundConstants,
    pub seed: u64,
    pub first_order: bool,
    set_f: Vec<usize>,
}

impl<'a> SubsampledSource<'a> {
    pub fn new(
        oracle: &'a FiniteSumOracle,
        schedules: SamplingSchedules,
        constants: BoundConstants,
        seed: u64,
        first_order: bool,
    ) -> Self {
        Self {
            oracle,
            schedules,
            constants,
            seed,
            first_order,
            set_f: Vec::new(),
        }
    }
}

impl IterationSource for SubsampledSource<'_> {
    fn begin(&mut self, k: usize, x: &DVector<f64>) -> Result<Estimates> {
        let n_comp = self.oracle.component_count();
        let size_f = self.schedules.f.size_at(k);
        let size_g = self.schedules.g.size_at(k);
        let size_h = self.schedules.h.size_at(k);
        self.set_f = sampling::draw_samples(n_comp, size_f, self.seed, k as u64, 0)?;
        let set_g = sampling::draw_samples(n_comp, size_g, self.seed, k as u64, 1)?;
        let f = self.oracle.batch_f(&self.set_f, x)?;
        let g = self.oracle.batch_g(&set_g, x)?;
        let h = if self.first_order {
            DMatrix::identity(self.oracle.primal_dim(), self.oracle.primal_dim())
        } else {
            let set_h = sampling::draw_samples(n_comp, size_h, self.seed, k as u64, 2)?;
            self.oracle.batch_h(&set_h, x)?
        };
        let (eps_f, eps_g, _) =
            sampling::error_bounds(n_comp, (size_f, size_g, size_h), &self.constants);
        Ok(Estimates {
            f,
            g,
            h,
            sizes: Some((size_f, size_g, size_h)),
            eps_f,
            eps_g,
        })
    }

    fn f_trial(&self, x: &DVector<f64>) -> f64 {
        self.oracle
            .batch_f(&self.set_f, x)
            .expect("iteration sample set is nonempty")
    }

    fn c(&self, x: &DVector<f64>) -> DVector<f64> {
        self.oracle.c(x)
    }

    fn jac(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.oracle.jac(x)
    }

    fn c_hess(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.oracle.c_hess(i, x)
    }

    fn counts(&self) -> OracleCounts {
        self.oracle.counters().snapshot()
    }
}

/// Everything the step-selection policies need about the current iteration.
pub(crate) struct StepContext {
    pub k: usize,
    pub est: Estimates,
    pub c: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub system: KktSystem,
    pub d: DVector<f64>,
    pub delta: DVector<f64>,
    pub stationarity: f64,
    pub feasibility: f64,
    pub minres_iterations: usize,
    pub counts_before: OracleCounts,
    /// Constraint Hessians at the iterate, cached by the curvature assembly
    /// (empty in first-order mode, where the assembly never needs them).
    pub con_hess: Vec<DMatrix<f64>>,
}

impl StepContext {
    pub fn c_l1(&self) -> f64 {
        self.c.iter().map(|v| v.abs()).sum()
    }

    /// d' W d with the regularized curvature matrix actually used.
    pub fn d_w_d(&self) -> f64 {
        (&self.system.w * &self.d).dot(&self.d)
    }

    /// Round-off scale for the merit-update guard.
    pub fn update_scale(&self) -> f64 {
        self.est.g.norm() * self.d.norm() + (&self.system.w * &self.d).norm() * self.d.norm()
    }

    /// Second-order terms of the modified condition:
    /// (d'Hd, sum_i |d' (grad^2 c_i) d|), with constraint Hessians at x_k.
    pub fn curvature_terms(&self, src: &dyn IterationSource, x: &DVector<f64>) -> (f64, f64) {
        let d_h_d = (&self.est.h * &self.d).dot(&self.d);
        let mut sum_abs = 0.0;
        if self.con_hess.is_empty() {
            for i in 0..self.c.len() {
                let hc = src.c_hess(i, x);
                sum_abs += ((&hc * &self.d).dot(&self.d)).abs();
            }
        } else {
            for hc in &self.con_hess {
                sum_abs += ((hc * &self.d).dot(&self.d)).abs();
            }
        }
        (d_h_d, sum_abs)
    }
}

pub(crate) enum Prepared {
    Step(Box<StepContext>),
    Done {
        status: SolveStatus,
        stationarity: f64,
        feasibility: f64,
    },
}

/// Evaluate the iterate, test termination and budgets, and solve the KKT
/// system. Shared by the main method and all baselines.
pub(crate) fn prepare_step(
    src: &mut dyn IterationSource,
    cfg: &SolverConfig,
    k: usize,
    w: &PrimalDual,
    term_ref: &mut Option<TerminationReference>,
    minres_total: &mut usize,
) -> Result<Prepared> {
    let counts_before = src.counts();
    let est = src.begin(k, &w.x)?;
    let c = src.c(&w.x);
    let jac = src.jac(&w.x);

    let stationarity = linalg::inf_norm(&(&est.g + jac.transpose() * &w.y));
    let feasibility = linalg::inf_norm(&c);
    let reference = *term_ref
        .get_or_insert_with(|| TerminationReference::from_initial(stationarity, feasibility));
    let done = |status: SolveStatus| Prepared::Done {
        status,
        stationarity,
        feasibility,
    };
    if reference.check(stationarity, feasibility, cfg.termination_tol) {
        return Ok(done(SolveStatus::Converged));
    }
    if budgets_exhausted(&cfg.budgets, &src.counts(), *minres_total) {
        return Ok(done(SolveStatus::IterationLimit));
    }
    if k >= cfg.max_iterations {
        return Ok(done(SolveStatus::IterationLimit));
    }

    let n = est.g.len();
    let mut con_hess: Vec<DMatrix<f64>> = Vec::new();
    let w_mat = if cfg.first_order {
        DMatrix::identity(n, n)
    } else {
        let mut total = est.h.clone();
        for i in 0..c.len() {
            let hc = src.c_hess(i, &w.x);
            total += &hc * w.y[i];
            con_hess.push(hc);
        }
        linalg::symmetrize(&total)
    };

    let system = match kkt::build_system(w_mat, jac.clone(), &est.g, &w.y, &c) {
        Ok(s) => s,
        Err(SqpError::LicqFailure { .. }) => return Ok(done(SolveStatus::LicqFailure)),
        Err(e) => return Err(e),
    };
    let system = if cfg.regularize {
        match kkt::regularize_with(system, cfg.regularization) {
            Ok(s) => s,
            Err(SqpError::IllPosed { .. }) => return Ok(done(SolveStatus::IllPosed)),
            Err(e) => return Err(e),
        }
    } else {
        system
    };

    let (d, delta, minres_iterations) = match &cfg.solve_mode {
        SolveMode::Dense => {
            let sol = match kkt::solve_dense(&system) {
                Ok(s) => s,
                Err(SqpError::SingularSystem) => return Ok(done(SolveStatus::IllPosed)),
                Err(e) => return Err(e),
            };
            (sol.d, sol.delta, 0)
        }
        SolveMode::Minres(mc) => {
            let op = minres::kkt_operator(&system);
            let rhs = system.rhs();
            match minres::minres_solve(&op, &rhs, mc) {
                Ok((z, report)) => {
                    let m = system.dual_dim();
                    let d = z.rows(0, n).into_owned();
                    let delta = z.rows(n, m).into_owned();
                    (d, delta, report.iterations_used)
                }
                Err(SqpError::MinresBreakdown { .. }) => return Ok(done(SolveStatus::IllPosed)),
                Err(e) => return Err(e),
            }
        }
    };
    *minres_total += minres_iterations;

    Ok(Prepared::Step(Box::new(StepContext {
        k,
        est,
        c,
        jac,
        system,
        d,
        delta,
        stationarity,
        feasibility,
        minres_iterations,
        counts_before,
        con_hess,
    })))
}

fn budgets_exhausted(budgets: &Budgets, counts: &OracleCounts, minres_total: usize) -> bool {
    if let Some(cap) = budgets.max_function_evals {
        if counts.function >= cap {
            return true;
        }
    }
    if let Some(cap) = budgets.max_gradient_evals {
        if counts.gradient >= cap {
            return true;
        }
    }
    if let Some(cap) = budgets.max_hessian_evals {
        if counts.hessian >= cap {
            return true;
        }
    }
    if let Some(cap) = budgets.max_minres_iterations {
        if minres_total >= cap {
            return true;
        }
    }
    false
}

/// Solve a deterministic problem with the modified line-search method.
pub fn solve(
    oracle: &ProblemOracle,
    start: &StartSpec,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    let mut src = DeterministicSource {
        oracle,
        first_order: config.first_order,
    };
    let w0 = start.resolve(oracle)?;
    run_modified(&mut src, w0, config)
}

/// Solve a finite-sum problem with subsampled estimates per the schedules.
pub fn solve_finite_sum(
    oracle: &FiniteSumOracle,
    schedules: &SamplingSchedules,
    start: &StartSpec,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    let w0 = resolve_start_finite_sum(oracle, start)?;
    let constants = schedules.bound_constants.unwrap_or_else(|| {
        if schedules.f.is_full() && schedules.g.is_full() {
            // bounds are only consumed by eps_f / eps_g, both zero at full size
            BoundConstants::configured(0.0, 0.0, 0.0)
        } else {
            BoundConstants::estimated(oracle, &start.x0)
        }
    });
    let mut src = SubsampledSource::new(
        oracle,
        schedules.clone(),
        constants,
        config.seed,
        config.first_order,
    );
    run_modified(&mut src, w0, config)
}

/// Resolve a start spec against a finite-sum oracle (full-batch gradient for
/// the least-squares duals).
pub fn resolve_start_finite_sum(oracle: &FiniteSumOracle, start: &StartSpec) -> Result<PrimalDual> {
    match &start.y0_rule {
        crate::suite::Y0Rule::Explicit(y) => Ok(PrimalDual::new(start.x0.clone(), y.clone())),
        crate::suite::Y0Rule::LeastSquares => {
            let all: Vec<usize> = (0..oracle.component_count()).collect();
            let g = oracle.batch_g(&all, &start.x0)?;
            let j = oracle.jac(&start.x0);
            let y = linalg::least_squares_multipliers(&g, &j)?;
            Ok(PrimalDual::new(start.x0.clone(), y))
        }
    }
}

/// Algorithm driver for the modified method over any iteration source.
pub(crate) fn run_modified(
    src: &mut dyn IterationSource,
    w0: PrimalDual,
    cfg: &SolverConfig,
) -> Result<SolveOutcome> {
    let mut w = w0;
    let mut merit_state = MeritState::new(cfg.tau_init, cfg.sigma, cfg.eps_tau)?;
    let mut gamma = f64::NAN;
    let mut term_ref: Option<TerminationReference> = None;
    let mut minres_total = 0usize;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let status;
    let mut last_residuals;

    let mut k = 0;
    loop {
        let ctx = match prepare_step(src, cfg, k, &w, &mut term_ref, &mut minres_total)? {
            Prepared::Step(ctx) => ctx,
            Prepared::Done {
                status: s,
                stationarity,
                feasibility,
            } => {
                status = s;
                last_residuals = (stationarity, feasibility);
                break;
            }
        };
        last_residuals = (ctx.stationarity, ctx.feasibility);

        let d_norm = ctx.d.norm();
        if k == 0 {
            gamma = cfg.gamma0_factor * d_norm;
        }

        let (next_state, tau_trial) = merit::update_merit_parameter(
            merit_state,
            ctx.est.g.dot(&ctx.d),
            ctx.d_w_d(),
            ctx.c_l1(),
            ctx.update_scale(),
        );
        merit_state = next_state;
        let tau = merit_state.tau;
        let delta_l = merit::model_reduction(tau, &ctx.est.g, &ctx.d, &ctx.c);
        let eps_a = merit::relaxation_eps_a(
            &RelaxationBudget {
                eps_f: ctx.est.eps_f,
                eps_g: ctx.est.eps_g,
                ..RelaxationBudget::default()
            },
            tau,
        );
        let phi_current = merit::merit_phi(ctx.est.f, &ctx.c, tau);

        // One merit evaluation per trial point; the unit trial is shared
        // between the classical test and the modified backtracking.
        let mut phi_trial_unit: Option<f64> = None;
        let mut trial_phi = |alpha: f64| -> f64 {
            if alpha == 1.0 {
                if let Some(p) = phi_trial_unit {
                    return p;
                }
            }
            let xt = &w.x + &ctx.d * alpha;
            let phi = merit::merit_phi(src.f_trial(&xt), &src.c(&xt), tau);
            if alpha == 1.0 {
                phi_trial_unit = Some(phi);
            }
            phi
        };

        let branch;
        let ls;
        let shrink_gamma;
        if d_norm > gamma {
            let res = merit::backtrack(
                |alpha| {
                    (
                        trial_phi(alpha),
                        merit::classical_rhs(phi_current, alpha, delta_l, cfg.eta, eps_a),
                    )
                },
                cfg.nu_alpha,
                1.0,
                cfg.max_backtracks,
            );
            match res {
                Ok(r) => {
                    branch = Branch::ClassicalLargeD;
                    ls = r;
                    shrink_gamma = false;
                }
                Err(SqpError::LineSearchFailure { .. }) => {
                    status = SolveStatus::LinesearchFailure;
                    break;
                }
                Err(e) => return Err(e),
            }
        } else {
            let lhs1 = trial_phi(1.0);
            let rhs1 = merit::classical_rhs(phi_current, 1.0, delta_l, cfg.eta, eps_a);
            if lhs1 <= rhs1 {
                branch = Branch::UnitClassical;
                ls = merit::LineSearchResult {
                    alpha: 1.0,
                    backtracks: 0,
                    lhs: lhs1,
                    rhs: rhs1,
                };
                shrink_gamma = false;
            } else {
                let (d_h_d, sum_abs) = ctx.curvature_terms(src, &w.x);
                let res = merit::backtrack(
                    |alpha| {
                        let phi_t = trial_phi(alpha);
                        let rhs = merit::modified_rhs(
                            phi_current,
                            alpha,
                            delta_l,
                            cfg.eta,
                            tau,
                            d_h_d,
                            sum_abs,
                            eps_a,
                        );
                        (phi_t, rhs)
                    },
                    cfg.nu_alpha,
                    1.0,
                    cfg.max_backtracks,
                );
                match res {
                    Ok(r) => {
                        branch = Branch::Modified;
                        ls = r;
                        shrink_gamma = true;
                    }
                    Err(SqpError::LineSearchFailure { .. }) => {
                        status = SolveStatus::LinesearchFailure;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        let x_next = &w.x + &ctx.d * ls.alpha;
        let y_next = &w.y + &ctx.delta; // duals take the full step
        trace.push(IterationRecord {
            k,
            x: w.x.clone(),
            y: w.y.clone(),
            d: ctx.d.clone(),
            delta: ctx.delta.clone(),
            d_norm,
            gamma,
            tau,
            tau_trial,
            alpha: ls.alpha,
            branch,
            backtracks: ls.backtracks,
            feasibility: ctx.feasibility,
            stationarity: ctx.stationarity,
            sample_sizes: ctx.est.sizes,
            counters_delta: src.counts().delta(&ctx.counts_before),
            lambda: ctx.system.lambda,
            minres_iterations: ctx.minres_iterations,
            delta_l,
            d_w_d: ctx.d_w_d(),
            c_l1: ctx.c_l1(),
            phi_current,
            phi_trial: ls.lhs,
            lhs: ls.lhs,
            rhs: ls.rhs,
            penalty_r: f64::NAN,
            eps_a,
        });

        if shrink_gamma {
            gamma *= cfg.nu_gamma;
        }
        w = PrimalDual::new(x_next, y_next);
        k += 1;
    }

    Ok(SolveOutcome {
        status,
        iterations: trace.len(),
        final_iterate: w,
        trace,
        counters: src.counts(),
        minres_total,
        final_stationarity: last_residuals.0,
        final_feasibility: last_residuals.1,
    })
}

/// Error ratios ||w_{k+1} - w*|| / ||w_k - w*|| along the trace (including
/// the final iterate), trimmed once the error falls to the round-off floor.
pub fn superlinear_diagnostic(outcome: &SolveOutcome, reference: &PrimalDual) -> Vec<f64> {
    let floor = 1e-13 * reference.stacked().norm().max(1.0);
    let mut errors: Vec<f64> = outcome
        .trace
        .iter()
        .map(|r| PrimalDual::new(r.x.clone(), r.y.clone()).distance(reference))
        .collect();
    errors.push(outcome.final_iterate.distance(reference));
    let mut ratios = Vec::new();
    for pair in errors.windows(2) {
        if pair[0] <= floor {
            break;
        }
        ratios.push(pair[1] / pair[0]);
    }
    ratios
}

/// Local diagnostic: full-step SQP iterations (no line search, unit primal
/// step, full dual step) from `w0`, recording each iterate. Used to measure
/// local rates of the exact and inexact step computations.
pub fn unit_step_iterates(
    oracle: &ProblemOracle,
    w0: &PrimalDual,
    steps: usize,
    mode: &SolveMode,
    regularization: RegularizationConfig,
) -> Result<Vec<PrimalDual>> {
    let mut iterates = vec![w0.clone()];
    let mut w = w0.clone();
    for _ in 0..steps {
        let system = kkt::assemble(oracle, &w, kkt::HessianSource::Exact, None)?;
        if linalg::inf_norm(&system.rhs()) <= 1e-14 {
            break;
        }
        let system = kkt::regularize_with(system, regularization)?;
        let (d, delta) = match mode {
            SolveMode::Dense => {
                let sol = kkt::solve_dense(&system)?;
                (sol.d, sol.delta)
            }
            SolveMode::Minres(mc) => {
                let op = minres::kkt_operator(&system);
                let (z, _) = minres::minres_solve(&op, &system.rhs(), mc)?;
                let n = system.primal_dim();
                let m = system.dual_dim();
                (z.rows(0, n).into_owned(), z.rows(n, m).into_owned())
            }
        };
        w = PrimalDual::new(&w.x + &d, &w.y + &delta);
        iterates.push(w.clone());
    }
    Ok(iterates)
}
