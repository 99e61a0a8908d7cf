//! Experiment harness: method-by-problem grids under evaluation budgets,
//! per-run trace CSVs and summary JSONs, a resumable manifest, and the
//! performance-profile computations used for cross-method comparison.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::baselines::{self, BaselineConfig, Method};
use crate::error::{Result, SqpError};
use crate::minres::MinresConfig;
use crate::problem::{OracleCounts, PrimalDual};
use crate::sampling;
use crate::solver::{
    self, Branch, IterationRecord, SamplingSchedules, SolveMode, SolveOutcome, SolveStatus,
    SolverConfig,
};
use crate::suite::{self, StartSpec};

/// Budgets of an experiment plan. Evaluation budgets are multiples of the
/// component count N (N = 1 for deterministic problems).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PlanBudgets {
    pub iterations: usize,
    pub function_evals_per_n: Option<f64>,
    pub gradient_evals_per_n: Option<f64>,
    pub hessian_evals_per_n: Option<f64>,
    /// MINRES iteration budget as a multiple of (m + n) * N.
    pub minres_iters_per_dim_n: Option<f64>,
}

impl Default for PlanBudgets {
    fn default() -> Self {
        Self {
            iterations: 100,
            function_evals_per_n: None,
            gradient_evals_per_n: None,
            hessian_evals_per_n: None,
            minres_iters_per_dim_n: None,
        }
    }
}

/// Optional solver-parameter overrides carried by a plan.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PlanOverrides {
    pub tau_init: Option<f64>,
    pub eta: Option<f64>,
    pub nu_alpha: Option<f64>,
    pub nu_gamma: Option<f64>,
    pub sigma: Option<f64>,
    pub eps_tau: Option<f64>,
    pub termination_tol: Option<f64>,
    pub auglag_penalty_init: Option<f64>,
    pub watchdog_relaxed_steps: Option<usize>,
    /// `dense` or `minres:<kappa>`.
    pub solve_mode: Option<String>,
    /// First-order variant (identity curvature matrix).
    pub first_order: Option<bool>,
    /// Schedule keys for finite-sum problems: `full`, `frac:<p>`,
    /// `geo:<r>`, `adaptive-hess`.
    pub function_schedule: Option<String>,
    pub gradient_schedule: Option<String>,
    pub hessian_schedule: Option<String>,
}

/// A method-by-problem grid with replications.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentPlan {
    pub problems: Vec<String>,
    pub methods: Vec<String>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Explicit seeds; when empty, 0..replications is used.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budgets: PlanBudgets,
    #[serde(default)]
    pub config: PlanOverrides,
}

fn default_replications() -> usize {
    1
}

impl ExperimentPlan {
    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.replications as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() || self.methods.is_empty() {
            return Err(SqpError::InvalidConfig(
                "plan needs at least one problem and one method".into(),
            ));
        }
        if self.replications == 0 && self.seeds.is_empty() {
            return Err(SqpError::InvalidConfig("replications must be >= 1".into()));
        }
        if self.budgets.iterations == 0 {
            return Err(SqpError::InvalidConfig(
                "iteration budget must be positive".into(),
            ));
        }
        for m in &self.methods {
            Method::from_key(m)?;
        }
        Ok(())
    }
}

/// A problem key resolved to runnable form.
pub enum ResolvedProblem {
    Deterministic {
        oracle: crate::problem::ProblemOracle,
        start: StartSpec,
        reference: Option<PrimalDual>,
    },
    FiniteSum {
        oracle: crate::problem::FiniteSumOracle,
        start: StartSpec,
        components: usize,
    },
}

impl ResolvedProblem {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ResolvedProblem::Deterministic { oracle, .. } => {
                (oracle.primal_dim(), oracle.constraint_dim())
            }
            ResolvedProblem::FiniteSum { oracle, .. } => {
                (oracle.primal_dim(), oracle.constraint_dim())
            }
        }
    }

    pub fn components(&self) -> usize {
        match self {
            ResolvedProblem::Deterministic { .. } => 1,
            ResolvedProblem::FiniteSum { components, .. } => *components,
        }
    }
}

/// Seed used to generate logistic constraint data, fixed so replications see
/// one problem instance and vary only their starts and sample draws.
const LOGISTIC_CONSTRAINT_SEED: u64 = 7;
const LOGISTIC_LINEAR_CONSTRAINTS: usize = 5;

/// Resolve a problem key: a bank key, `logistic:<path>` (LIBSVM file), or
/// `logistic-synth:<N>:<n>`.
pub fn resolve_problem(key: &str, seed: u64) -> Result<ResolvedProblem> {
    if let Some(entry) = suite::bank_entry(key) {
        return Ok(ResolvedProblem::Deterministic {
            oracle: entry.oracle(),
            start: entry.start.clone(),
            reference: Some(entry.solution.clone()),
        });
    }
    if let Some(path) = key.strip_prefix("logistic:") {
        let file = fs::File::open(path)?;
        let (x, labels) = suite::parse_libsvm(std::io::BufReader::new(file))?;
        let m_linear = LOGISTIC_LINEAR_CONSTRAINTS.min(x.ncols().saturating_sub(1));
        let spec = suite::LogisticProblemSpec::from_data(
            x,
            labels,
            m_linear,
            LOGISTIC_CONSTRAINT_SEED,
        )?;
        let n = spec.n_features();
        let components = spec.n_samples();
        let oracle = suite::make_logistic_problem(&spec)?;
        return Ok(ResolvedProblem::FiniteSum {
            oracle,
            start: suite::default_start(n, seed),
            components,
        });
    }
    if let Some(rest) = key.strip_prefix("logistic-synth:") {
        let mut parts = rest.split(':');
        let n_samples: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| SqpError::UnknownKey(format!("problem {key}")))?;
        let n_features: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| SqpError::UnknownKey(format!("problem {key}")))?;
        let spec = suite::LogisticProblemSpec::synthetic(
            n_samples,
            n_features,
            LOGISTIC_LINEAR_CONSTRAINTS.min(n_features.saturating_sub(1)),
            LOGISTIC_CONSTRAINT_SEED,
        );
        let oracle = suite::make_logistic_problem(&spec)?;
        return Ok(ResolvedProblem::FiniteSum {
            oracle,
            start: suite::default_start(n_features, seed),
            components: n_samples,
        });
    }
    Err(SqpError::UnknownKey(format!("problem {key}")))
}

/// JSON cannot carry NaN; optional metrics round-trip through null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Machine-readable per-run summary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_stationarity: f64,
    pub final_feasibility: f64,
    pub counters: OracleCounts,
    pub minres_total: usize,
    pub wall_time_s: f64,
    pub unit_step_fraction: f64,
    pub modified_fraction: f64,
    /// NaN (serialized as null) for the augmented-Lagrangian method.
    #[serde(with = "nan_as_null")]
    pub final_tau: f64,
    /// NaN (serialized as null) for methods without the adaptive gate.
    #[serde(with = "nan_as_null")]
    pub final_gamma: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub run_id: String,
    pub problem: String,
    pub method: String,
    pub seed: u64,
    pub status: SolveStatus,
    pub trace_path: String,
    pub summary_path: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join("manifest.json");
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(self)?,
        )
    }

    pub fn contains(&self, run_id: &str) -> bool {
        self.entries.iter().any(|e| e.run_id == run_id)
    }
}

/// Outcome of [`run_plan`].
#[derive(Debug)]
pub struct PlanReport {
    pub manifest: Manifest,
    pub executed: usize,
    pub skipped: usize,
    pub failures: usize,
}

fn sanitize(key: &str) -> String {
    key.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn run_id(problem: &str, method: &str, seed: u64) -> String {
    format!("{}__{}__s{}", sanitize(problem), sanitize(method), seed)
}

fn config_hash(plan: &ExperimentPlan, problem: &str, method: &str, seed: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_string(plan).unwrap_or_default());
    hasher.update(problem);
    hasher.update(method);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    hex_prefix(&digest, 16)
}

fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Fixed trace CSV column order.
pub const TRACE_COLUMNS: &[&str] = &[
    "k",
    "d_norm",
    "gamma",
    "tau",
    "tau_trial",
    "alpha",
    "branch",
    "backtracks",
    "feasibility",
    "stationarity",
    "sample_f",
    "sample_g",
    "sample_h",
    "ev_function",
    "ev_gradient",
    "ev_hessian",
    "ev_constraint",
    "ev_jacobian",
    "ev_constraint_hessian",
    "lambda",
    "minres_iterations",
    "delta_l",
    "d_w_d",
    "c_l1",
    "phi_current",
    "phi_trial",
    "lhs",
    "rhs",
    "penalty_r",
    "eps_a",
    "x_hash",
    "y_hash",
];

fn vector_hash(v: &nalgebra::DVector<f64>) -> String {
    let mut hasher = Sha256::new();
    for value in v.iter() {
        hasher.update(value.to_le_bytes());
    }
    hex_prefix(&hasher.finalize(), 16)
}

/// Serialize a trace to CSV with the documented column order.
pub fn trace_to_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::new();
    out.push_str(&TRACE_COLUMNS.join(","));
    out.push('\n');
    for r in trace {
        let sizes = r
            .sample_sizes
            .map(|(f, g, h)| (f.to_string(), g.to_string(), h.to_string()))
            .unwrap_or_default();
        let row = [
            r.k.to_string(),
            r.d_norm.to_string(),
            r.gamma.to_string(),
            r.tau.to_string(),
            r.tau_trial.to_string(),
            r.alpha.to_string(),
            r.branch.as_str().to_string(),
            r.backtracks.to_string(),
            r.feasibility.to_string(),
            r.stationarity.to_string(),
            sizes.0.clone(),
            sizes.1.clone(),
            sizes.2.clone(),
            r.counters_delta.function.to_string(),
            r.counters_delta.gradient.to_string(),
            r.counters_delta.hessian.to_string(),
            r.counters_delta.constraint.to_string(),
            r.counters_delta.jacobian.to_string(),
            r.counters_delta.constraint_hessian.to_string(),
            r.lambda.to_string(),
            r.minres_iterations.to_string(),
            r.delta_l.to_string(),
            r.d_w_d.to_string(),
            r.c_l1.to_string(),
            r.phi_current.to_string(),
            r.phi_trial.to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.penalty_r.to_string(),
            r.eps_a.to_string(),
            vector_hash(&r.x),
            vector_hash(&r.y),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Per-run branch and step-size statistics.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BranchStats {
    pub unit_step_fraction: f64,
    pub modified_fraction: f64,
    pub final_tau: f64,
    pub final_gamma: f64,
}

pub fn branch_statistics(trace: &[IterationRecord]) -> Result<BranchStats> {
    if trace.is_empty() {
        return Err(SqpError::InsufficientData(
            "branch statistics need a nonempty trace",
        ));
    }
    let total = trace.len() as f64;
    let unit = trace.iter().filter(|r| r.alpha == 1.0).count() as f64;
    let modified = trace
        .iter()
        .filter(|r| r.branch == Branch::Modified)
        .count() as f64;
    let last = trace.last().expect("nonempty");
    Ok(BranchStats {
        unit_step_fraction: unit / total,
        modified_fraction: modified / total,
        final_tau: last.tau,
        final_gamma: last.gamma,
    })
}

/// Build a solver configuration for one run of a plan.
pub fn solver_config_for_run(
    plan: &ExperimentPlan,
    resolved: &ResolvedProblem,
    seed: u64,
) -> Result<SolverConfig> {
    let (n, m) = resolved.dims();
    let components = resolved.components();
    let ov = &plan.config;
    let solve_mode = match ov.solve_mode.as_deref() {
        None | Some("dense") => SolveMode::Dense,
        Some(other) => {
            if let Some(kappa) = other.strip_prefix("minres:") {
                let kappa: f64 = kappa
                    .parse()
                    .map_err(|_| SqpError::UnknownKey(format!("solve mode {other}")))?;
                SolveMode::Minres(MinresConfig {
                    kappa,
                    ..MinresConfig::default()
                })
            } else {
                return Err(SqpError::UnknownKey(format!("solve mode {other}")));
            }
        }
    };
    // counters track full-evaluation equivalents, so a budget of v*N raw
    // component evaluations is v in counter units
    let budgets = solver::Budgets {
        max_function_evals: plan.budgets.function_evals_per_n,
        max_gradient_evals: plan.budgets.gradient_evals_per_n,
        max_hessian_evals: plan.budgets.hessian_evals_per_n,
        max_minres_iterations: plan
            .budgets
            .minres_iters_per_dim_n
            .map(|v| (v * ((n + m) as f64) * components as f64) as usize),
    };
    let defaults = SolverConfig::default();
    Ok(SolverConfig {
        tau_init: ov.tau_init.unwrap_or(defaults.tau_init),
        eta: ov.eta.unwrap_or(defaults.eta),
        nu_alpha: ov.nu_alpha.unwrap_or(defaults.nu_alpha),
        nu_gamma: ov.nu_gamma.unwrap_or(defaults.nu_gamma),
        sigma: ov.sigma.unwrap_or(defaults.sigma),
        eps_tau: ov.eps_tau.unwrap_or(defaults.eps_tau),
        termination_tol: ov.termination_tol.unwrap_or(defaults.termination_tol),
        max_iterations: plan.budgets.iterations,
        solve_mode,
        first_order: ov.first_order.unwrap_or(false),
        budgets,
        seed,
        ..defaults
    })
}

fn schedules_for_run(plan: &ExperimentPlan, components: usize) -> Result<SamplingSchedules> {
    let horizon = plan.budgets.iterations;
    let pick = |key: &Option<String>| -> Result<sampling::SampleSchedule> {
        match key {
            None => Ok(sampling::SampleSchedule::Full { n: components }),
            Some(k) => sampling::schedule_from_key(k, components, horizon),
        }
    };
    Ok(SamplingSchedules {
        f: pick(&plan.config.function_schedule)?,
        g: pick(&plan.config.gradient_schedule)?,
        h: pick(&plan.config.hessian_schedule)?,
        bound_constants: None,
    })
}

/// Execute one (problem, method, seed) run.
pub fn execute_run(
    plan: &ExperimentPlan,
    problem: &str,
    method_key: &str,
    seed: u64,
) -> Result<(SolveOutcome, RunSummary)> {
    let method = Method::from_key(method_key)?;
    let resolved = resolve_problem(problem, seed)?;
    let solver_cfg = solver_config_for_run(plan, &resolved, seed)?;
    let started = std::time::Instant::now();
    let outcome = match &resolved {
        ResolvedProblem::Deterministic { oracle, start, .. } => {
            let mut cfg = BaselineConfig::with_solver(method, solver_cfg);
            if let Some(r) = plan.config.auglag_penalty_init {
                cfg.auglag_penalty_init = r;
            }
            if let Some(wts) = plan.config.watchdog_relaxed_steps {
                cfg.watchdog_relaxed_steps = wts;
            }
            baselines::solve_with_method(oracle, start, &cfg)?
        }
        ResolvedProblem::FiniteSum {
            oracle,
            start,
            components,
        } => {
            if method == Method::Ours {
                let schedules = schedules_for_run(plan, *components)?;
                solver::solve_finite_sum(oracle, &schedules, start, &solver_cfg)?
            } else {
                // comparison methods run the summed deterministic problem
                let det = oracle.to_deterministic();
                let mut cfg = BaselineConfig::with_solver(method, solver_cfg);
                if let Some(r) = plan.config.auglag_penalty_init {
                    cfg.auglag_penalty_init = r;
                }
                baselines::solve_with_method(&det, start, &cfg)?
            }
        }
    };
    let wall = started.elapsed().as_secs_f64();
    let stats = branch_statistics(&outcome.trace).unwrap_or(BranchStats {
        unit_step_fraction: 0.0,
        modified_fraction: 0.0,
        final_tau: f64::NAN,
        final_gamma: f64::NAN,
    });
    let summary = RunSummary {
        problem: problem.to_string(),
        method: method_key.to_string(),
        seed,
        status: outcome.status,
        iterations: outcome.iterations,
        final_stationarity: outcome.final_stationarity,
        final_feasibility: outcome.final_feasibility,
        counters: outcome.counters,
        minres_total: outcome.minres_total,
        wall_time_s: wall,
        unit_step_fraction: stats.unit_step_fraction,
        modified_fraction: stats.modified_fraction,
        final_tau: stats.final_tau,
        final_gamma: stats.final_gamma,
        config_hash: config_hash(plan, problem, method_key, seed),
    };
    Ok((outcome, summary))
}

/// Run every (method, problem, seed) triple of the plan at most once,
/// skipping runs already recorded in the output manifest. Independent runs
/// execute on up to `workers` threads; the manifest is written by a single
/// writer at the end.
pub fn run_plan(plan: &ExperimentPlan, out_dir: &Path, workers: usize) -> Result<PlanReport> {
    plan.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut manifest = Manifest::load(out_dir)?;

    let mut pending: VecDeque<(String, String, u64)> = VecDeque::new();
    let mut skipped = 0usize;
    for problem in &plan.problems {
        for method in &plan.methods {
            for seed in plan.seeds() {
                let id = run_id(problem, method, seed);
                let exists = manifest.contains(&id)
                    && out_dir.join(format!("{id}.csv")).exists()
                    && out_dir.join(format!("{id}.json")).exists();
                if exists {
                    skipped += 1;
                } else {
                    pending.push_back((problem.clone(), method.clone(), seed));
                }
            }
        }
    }

    let queue = Mutex::new(pending);
    let results: Mutex<Vec<Result<ManifestEntry>>> = Mutex::new(Vec::new());
    let worker_count = workers.max(1);
    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((problem, method, seed)) = job else {
                    break;
                };
                let entry = run_and_write(plan, out_dir, &problem, &method, seed);
                results.lock().expect("results lock").push(entry);
            });
        }
    });

    let mut executed = 0usize;
    let mut failures = 0usize;
    for entry in results.into_inner().expect("results") {
        match entry {
            Ok(e) => {
                executed += 1;
                if !e.status.is_success() {
                    failures += 1;
                }
                manifest.entries.push(e);
            }
            Err(_) => failures += 1,
        }
    }
    manifest.entries.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    manifest.save(out_dir)?;
    Ok(PlanReport {
        manifest,
        executed,
        skipped,
        failures,
    })
}

fn run_and_write(
    plan: &ExperimentPlan,
    out_dir: &Path,
    problem: &str,
    method: &str,
    seed: u64,
) -> Result<ManifestEntry> {
    let (outcome, summary) = execute_run(plan, problem, method, seed)?;
    let id = run_id(problem, method, seed);
    let trace_path = out_dir.join(format!("{id}.csv"));
    let summary_path = out_dir.join(format!("{id}.json"));
    write_atomic(&trace_path, &trace_to_csv(&outcome.trace))?;
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary)?)?;
    Ok(ManifestEntry {
        run_id: id.clone(),
        problem: problem.to_string(),
        method: method.to_string(),
        seed,
        status: summary.status,
        trace_path: trace_path.to_string_lossy().into_owned(),
        summary_path: summary_path.to_string_lossy().into_owned(),
        config_hash: summary.config_hash,
    })
}

/// Load every run summary found in a results directory.
pub fn load_summaries(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json")
            && path.file_name().and_then(|f| f.to_str()) != Some("manifest.json")
        {
            let text = fs::read_to_string(&path)?;
            if let Ok(summary) = serde_json::from_str::<RunSummary>(&text) {
                out.push(summary);
            }
        }
    }
    out.sort_by(|a, b| (&a.problem, &a.method, a.seed).cmp(&(&b.problem, &b.method, b.seed)));
    Ok(out)
}

/// Replication-averaged metrics; the arithmetic mean over per-run values.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AveragedSummary {
    pub problem: String,
    pub method: String,
    pub replications: usize,
    pub solve_fraction: f64,
    pub mean_iterations: f64,
    pub mean_function_evals: f64,
    pub mean_hessian_evals: f64,
    pub mean_final_stationarity: f64,
    pub mean_final_feasibility: f64,
}

pub fn average_summaries(summaries: &[RunSummary]) -> Vec<AveragedSummary> {
    let mut groups: BTreeMap<(String, String), Vec<&RunSummary>> = BTreeMap::new();
    for s in summaries {
        groups
            .entry((s.problem.clone(), s.method.clone()))
            .or_default()
            .push(s);
    }
    groups
        .into_iter()
        .map(|((problem, method), runs)| {
            let n = runs.len() as f64;
            let mean = |f: &dyn Fn(&RunSummary) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
            AveragedSummary {
                problem,
                method,
                replications: runs.len(),
                solve_fraction: mean(&|r| if r.status.is_success() { 1.0 } else { 0.0 }),
                mean_iterations: mean(&|r| r.iterations as f64),
                mean_function_evals: mean(&|r| r.counters.function),
                mean_hessian_evals: mean(&|r| r.counters.hessian),
                mean_final_stationarity: mean(&|r| r.final_stationarity),
                mean_final_feasibility: mean(&|r| r.final_feasibility),
            }
        })
        .collect()
}

/// Cost metric for the profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMetric {
    Iterations,
    FunctionEvals,
    HessianEvals,
}

impl CostMetric {
    pub fn from_key(key: &str) -> Result<Self> {
        Ok(match key {
            "iters" => CostMetric::Iterations,
            "fevals" => CostMetric::FunctionEvals,
            "hess" => CostMetric::HessianEvals,
            other => return Err(SqpError::UnknownKey(format!("metric {other}"))),
        })
    }

    fn of(&self, s: &RunSummary) -> f64 {
        match self {
            CostMetric::Iterations => s.iterations as f64,
            CostMetric::FunctionEvals => s.counters.function,
            CostMetric::HessianEvals => s.counters.hessian,
        }
    }
}

/// Per-(method, problem) costs with failures as `None`. Replications are
/// averaged; a (method, problem) cell fails when no replication solved it.
#[derive(Debug, Clone, Default)]
pub struct CostTable {
    pub methods: Vec<String>,
    pub problems: Vec<String>,
    pub costs: BTreeMap<(String, String), Option<f64>>,
}

impl CostTable {
    pub fn insert(&mut self, method: &str, problem: &str, cost: Option<f64>) {
        if !self.methods.iter().any(|m| m == method) {
            self.methods.push(method.to_string());
        }
        if !self.problems.iter().any(|p| p == problem) {
            self.problems.push(problem.to_string());
        }
        self.costs
            .insert((method.to_string(), problem.to_string()), cost);
    }

    pub fn cost(&self, method: &str, problem: &str) -> Option<f64> {
        self.costs
            .get(&(method.to_string(), problem.to_string()))
            .copied()
            .flatten()
    }

    pub fn from_summaries(summaries: &[RunSummary], metric: CostMetric) -> CostTable {
        let mut grouped: BTreeMap<(String, String), Vec<&RunSummary>> = BTreeMap::new();
        for s in summaries {
            grouped
                .entry((s.method.clone(), s.problem.clone()))
                .or_default()
                .push(s);
        }
        let mut table = CostTable::default();
        for ((method, problem), runs) in grouped {
            let solved: Vec<f64> = runs
                .iter()
                .filter(|r| r.status.is_success())
                .map(|r| metric.of(r))
                .collect();
            let cost = if solved.is_empty() {
                None
            } else {
                Some(solved.iter().sum::<f64>() / solved.len() as f64)
            };
            table.insert(&method, &problem, cost);
        }
        table
    }
}

/// Cumulative cost-ratio curves: rho_s(t) = fraction of problems on which
/// method s is within a factor t of the best method.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ProfileTable {
    pub methods: Vec<String>,
    /// Sampling grid for the emitted curves (log-spaced ratios from 1).
    pub grid: Vec<f64>,
    pub curves: BTreeMap<String, Vec<f64>>,
    /// Per-method/problem ratios (infinite for failures), for exact queries.
    pub ratios: BTreeMap<String, Vec<f64>>,
    pub problems_used: usize,
    pub warnings: Vec<String>,
}

impl ProfileTable {
    /// Exact profile value at an arbitrary ratio.
    pub fn rho(&self, method: &str, t: f64) -> f64 {
        let Some(ratios) = self.ratios.get(method) else {
            return 0.0;
        };
        if self.problems_used == 0 {
            return 0.0;
        }
        ratios.iter().filter(|r| **r <= t).count() as f64 / self.problems_used as f64
    }

    /// Right-limit value: the method's overall solve fraction.
    pub fn solve_fraction(&self, method: &str) -> f64 {
        let Some(ratios) = self.ratios.get(method) else {
            return 0.0;
        };
        if self.problems_used == 0 {
            return 0.0;
        }
        ratios.iter().filter(|r| r.is_finite()).count() as f64 / self.problems_used as f64
    }
}

/// Cumulative cost-ratio performance profiles over a cost table.
pub fn dolan_more_profile(table: &CostTable) -> Result<ProfileTable> {
    if table.methods.is_empty() || table.problems.is_empty() {
        return Err(SqpError::InsufficientData(
            "profile needs methods and problems",
        ));
    }
    let mut warnings = Vec::new();
    let mut retained: Vec<&String> = Vec::new();
    let mut best: Vec<f64> = Vec::new();
    for problem in &table.problems {
        let finite: Vec<f64> = table
            .methods
            .iter()
            .filter_map(|m| table.cost(m, problem))
            .collect();
        match finite.iter().cloned().fold(f64::INFINITY, f64::min) {
            b if b.is_finite() => {
                retained.push(problem);
                best.push(b);
            }
            _ => warnings.push(format!("dropping problem {problem}: no method solved it")),
        }
    }
    let mut ratios: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for method in &table.methods {
        let rs: Vec<f64> = retained
            .iter()
            .zip(&best)
            .map(|(problem, best)| match table.cost(method, problem) {
                Some(c) => {
                    if *best == 0.0 {
                        if c == 0.0 {
                            1.0
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        c / best
                    }
                }
                None => f64::INFINITY,
            })
            .collect();
        ratios.insert(method.clone(), rs);
    }
    // fixed log2-spaced grid over [1, 2^20]
    let grid: Vec<f64> = (0..=200).map(|i| 2f64.powf(i as f64 / 10.0)).collect();
    let problems_used = retained.len();
    let mut profile = ProfileTable {
        methods: table.methods.clone(),
        grid: grid.clone(),
        curves: BTreeMap::new(),
        ratios,
        problems_used,
        warnings,
    };
    for method in &table.methods {
        let curve = grid.iter().map(|t| profile.rho(method, *t)).collect();
        profile.curves.insert(method.clone(), curve);
    }
    Ok(profile)
}

/// Morales profile cap: failures map to +/- this value.
pub const MORALES_CAP: f64 = 10.0;

/// Pairwise log2 cost ratios, one value per problem: positive favors the
/// FIRST method. Failures map to the +/- cap; problems failed by both
/// methods are skipped.
pub fn morales_profile(table: &CostTable) -> Result<Vec<(String, f64)>> {
    if table.methods.len() != 2 {
        return Err(SqpError::InvalidConfig(format!(
            "morales profile needs exactly 2 methods, got {}",
            table.methods.len()
        )));
    }
    let (ma, mb) = (&table.methods[0], &table.methods[1]);
    let mut out = Vec::new();
    for problem in &table.problems {
        let a = table.cost(ma, problem);
        let b = table.cost(mb, problem);
        let value = match (a, b) {
            (Some(ca), Some(cb)) => {
                let v = -(ca / cb).log2();
                v.clamp(-MORALES_CAP, MORALES_CAP)
            }
            (None, Some(_)) => -MORALES_CAP,
            (Some(_), None) => MORALES_CAP,
            (None, None) => continue,
        };
        out.push((problem.clone(), value));
    }
    Ok(out)
}
