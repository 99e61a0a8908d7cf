//! Command-line front end: single solves, benchmark plans, performance
//! profiles, and derivative audits.
//!
//! Exit codes: 0 on success, 1 when runs failed, 2 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sqp_core::harness::{
    self, dolan_more_profile, morales_profile, CostMetric, CostTable, ExperimentPlan, PlanBudgets,
    PlanOverrides, ResolvedProblem,
};
use sqp_core::problem::finite_difference_check;
use sqp_core::SqpError;

/// Environment variable providing the default output directory.
const OUT_DIR_ENV: &str = "SQP_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "sqp",
    version,
    about = "Equality-constrained SQP solvers and benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem with one method and write/print the run artifacts.
    Solve {
        /// Problem key: a bank name (see `sqp check --list`),
        /// `logistic:<path>`, or `logistic-synth:<N>:<n>`.
        #[arg(long)]
        problem: String,
        /// Method key: ours | sqp-l1 | soc | watchdog | auglag.
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional TOML file with `[budgets]` and `[config]` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the trace CSV and summary JSON; when absent
        /// the summary is printed to stdout.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Run a method-by-problem grid described by a TOML plan file.
    Bench {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, env = OUT_DIR_ENV)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Compute a performance profile over a directory of run summaries.
    Profile {
        #[arg(long, value_enum)]
        kind: ProfileKind,
        #[arg(long, value_enum, default_value_t = MetricArg::Iters)]
        metric: MetricArg,
        /// Directory containing run summary JSON files.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output JSON path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference and invariant audit of a problem's oracle.
    Check {
        #[arg(long, required_unless_present = "list")]
        problem: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// List the built-in problem keys and exit.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileKind {
    DolanMore,
    Morales,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Iters,
    Fevals,
    Hess,
}

impl MetricArg {
    fn to_metric(self) -> CostMetric {
        match self {
            MetricArg::Iters => CostMetric::Iterations,
            MetricArg::Fevals => CostMetric::FunctionEvals,
            MetricArg::Hess => CostMetric::HessianEvals,
        }
    }
}

/// TOML sections accepted by `solve --config` and embedded in plan files.
#[derive(Default, serde::Deserialize)]
#[serde(default)]
struct ConfigFile {
    budgets: PlanBudgets,
    config: PlanOverrides,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                SqpError::Io(_) | SqpError::Json(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run() -> Result<ExitCode, SqpError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve {
            problem,
            method,
            seed,
            config,
            out,
        } => {
            let file = match config {
                Some(path) => parse_toml::<ConfigFile>(&path)?,
                None => ConfigFile::default(),
            };
            let plan = ExperimentPlan {
                problems: vec![problem.clone()],
                methods: vec![method.clone()],
                replications: 1,
                seeds: vec![seed],
                budgets: file.budgets,
                config: file.config,
            };
            plan.validate()?;
            if let Some(dir) = out {
                let report = harness::run_plan(&plan, &dir, 1)?;
                for entry in &report.manifest.entries {
                    println!("{}", entry.summary_path);
                }
                Ok(if report.failures == 0 {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                })
            } else {
                let (outcome, summary) = harness::execute_run(&plan, &problem, &method, seed)?;
                println!("{}", serde_json::to_string_pretty(&summary)?);
                Ok(if outcome.status.is_success() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                })
            }
        }
        Command::Bench { plan, out, workers } => {
            let plan = parse_toml::<ExperimentPlan>(&plan)?;
            let report = harness::run_plan(&plan, &out, workers)?;
            println!(
                "executed {} runs, skipped {} (resume), {} failures; manifest at {}",
                report.executed,
                report.skipped,
                report.failures,
                out.join("manifest.json").display()
            );
            Ok(if report.failures == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Profile {
            kind,
            metric,
            input,
            out,
        } => {
            let summaries = harness::load_summaries(&input)?;
            if summaries.is_empty() {
                return Err(SqpError::InvalidConfig(format!(
                    "no run summaries found in {}",
                    input.display()
                )));
            }
            let table = CostTable::from_summaries(&summaries, metric.to_metric());
            let json = match kind {
                ProfileKind::DolanMore => {
                    serde_json::to_string_pretty(&dolan_more_profile(&table)?)?
                }
                ProfileKind::Morales => {
                    let values = morales_profile(&table)?;
                    serde_json::to_string_pretty(&values)?
                }
            };
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            problem,
            seed,
            list,
        } => {
            if list {
                for entry in sqp_core::suite::analytic_bank() {
                    println!("{}", entry.key);
                }
                return Ok(ExitCode::SUCCESS);
            }
            let key = problem.expect("clap enforces problem unless --list");
            check_problem(&key, seed)
        }
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, SqpError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| SqpError::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Derivative audit: finite differences at the start point and five random
/// points in the unit box around it, plus the Hessian-symmetry invariant.
fn check_problem(key: &str, seed: u64) -> Result<ExitCode, SqpError> {
    let resolved = harness::resolve_problem(key, seed)?;
    let (oracle, x0) = match &resolved {
        ResolvedProblem::Deterministic { oracle, start, .. } => (oracle.fresh(), start.x0.clone()),
        ResolvedProblem::FiniteSum { oracle, start, .. } => {
            (oracle.to_deterministic(), start.x0.clone())
        }
    };
    let n = oracle.primal_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let mut points = vec![x0.clone()];
    for _ in 0..5 {
        let offset = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        points.push(&x0 + offset);
    }

    let mut ok = true;
    for (i, point) in points.iter().enumerate() {
        let report = finite_difference_check(&oracle, point, 1e-5)?;
        let first_ok = report.max_first_order() <= 1e-5;
        let second_ok = report.max_second_order() <= 1e-4;
        ok &= first_ok && second_ok;
        println!(
            "point {i}: grad {:.3e} jac {:.3e} hess {:.3e} chess {:.3e} [{}]",
            report.gradient,
            report.jacobian,
            report.hessian,
            report.constraint_hessian,
            if first_ok && second_ok { "ok" } else { "FAIL" }
        );
        // symmetry of the raw curvature surfaces
        let h = oracle.problem().hessian(point);
        let defect = sqp_core::linalg::max_abs(&(&h - h.transpose()));
        let sym_ok = defect <= 1e-12 * sqp_core::linalg::max_abs(&h).max(1.0);
        ok &= sym_ok;
        if !sym_ok {
            println!("point {i}: objective Hessian asymmetry {defect:.3e} [FAIL]");
        }
    }
    println!(
        "{}: {}",
        key,
        if ok {
            "all checks passed"
        } else {
            "CHECKS FAILED"
        }
    );
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
