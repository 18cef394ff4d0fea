//! Experiment runner for the low-rank parametric Newton solver: configures a
//! benchmark problem, runs the driver, and emits a per-iteration table plus a
//! machine-readable CSV report.

mod compare;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use parlor::newton::{self, convergence_order, ForcingMode, ForcingSchedule, NewtonConfig};
use parlor::problems::{sample_recipe, FdProblem, GridSpec};

use config::{Mode, Problem, RunConfig};

#[derive(Parser)]
#[command(name = "parlor", version, about = "Low-rank truncated Newton solver for parameter-dependent nonlinear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Cubic,
    Expdiff,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Known,
    Blind,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark configuration and write a CSV report.
    Run(RunArgs),
    /// Compare two completed run reports side by side.
    Compare {
        /// First run CSV.
        a: PathBuf,
        /// Second run CSV.
        b: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Benchmark problem.
    #[arg(long, value_enum)]
    problem: Option<ProblemArg>,

    /// Interpolation mode: known coefficient structure or black-box entries.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,

    /// Interior grid points per side (N = n^2 unknowns).
    #[arg(long)]
    n: Option<usize>,

    /// Number of parameter samples.
    #[arg(long = "Q", visible_alias = "samples")]
    num_samples: Option<usize>,

    /// Seed for sample generation and all randomized components.
    #[arg(long)]
    seed: Option<u64>,

    /// Residual forcing constant.
    #[arg(long = "rho-r")]
    rho_r: Option<f64>,

    /// Preconditioner forcing constant.
    #[arg(long = "rho-p")]
    rho_p: Option<f64>,

    /// Iterate truncation tolerance.
    #[arg(long = "trunc-eps")]
    trunc_eps: Option<f64>,

    /// Relative residual tolerance of the rank-one solver.
    #[arg(long = "solver-tol")]
    solver_tol: Option<f64>,

    /// Convergence target for the relative residual estimate.
    #[arg(long = "eps-target")]
    eps_target: Option<f64>,

    /// Maximum number of Newton steps.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,

    /// Certificate significance level (blind mode).
    #[arg(long)]
    alpha: Option<f64>,

    /// Probe count per certificate (blind mode); defaults to Q.
    #[arg(long)]
    probes: Option<usize>,

    /// Worker threads for inner parallel maps (0 = rayon default). Results
    /// do not depend on the thread count.
    #[arg(long)]
    threads: Option<usize>,

    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Optional key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(args) {
            Ok(converged) => {
                if converged {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::FAILURE
            }
        },
        Command::Compare { a, b } => match compare::compare(&a, &b) {
            Ok(_) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::FAILURE
            }
        },
    }
}

/// Merges the config file (if any) under the flags and fills defaults.
fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut file: std::collections::HashMap<String, String> = Default::default();
    if let Some(path) = &args.config {
        for (k, v) in config::parse_config_file(path)? {
            file.insert(k, v);
        }
    }
    let from_file = |key: &str| file.get(key).cloned();
    let parse_file = |key: &str| -> Result<Option<f64>> {
        from_file(key)
            .map(|v| {
                v.parse::<f64>()
                    .with_context(|| format!("config key {key}: bad number {v:?}"))
            })
            .transpose()
    };
    let parse_file_usize = |key: &str| -> Result<Option<usize>> {
        from_file(key)
            .map(|v| {
                v.parse::<usize>()
                    .with_context(|| format!("config key {key}: bad integer {v:?}"))
            })
            .transpose()
    };

    let problem = match args.problem {
        Some(ProblemArg::Cubic) => Problem::Cubic,
        Some(ProblemArg::Expdiff) => Problem::Expdiff,
        None => match from_file("problem").as_deref() {
            Some("cubic") => Problem::Cubic,
            Some("expdiff") => Problem::Expdiff,
            Some(other) => bail!("config key problem: unknown value {other:?}"),
            None => bail!("--problem is required (cubic or expdiff)"),
        },
    };
    let mode = match args.mode {
        Some(ModeArg::Known) => Mode::Known,
        Some(ModeArg::Blind) => Mode::Blind,
        None => match from_file("mode").as_deref() {
            Some("known") => Mode::Known,
            Some("blind") => Mode::Blind,
            Some(other) => bail!("config key mode: unknown value {other:?}"),
            None => bail!("--mode is required (known or blind)"),
        },
    };

    let num_samples = args
        .num_samples
        .or(parse_file_usize("Q")?)
        .unwrap_or(500);
    let probes = args.probes.or(parse_file_usize("probes")?).unwrap_or(num_samples);
    let cfg = RunConfig {
        problem,
        mode,
        n: args.n.or(parse_file_usize("n")?).unwrap_or(31),
        num_samples,
        seed: args
            .seed
            .or(from_file("seed")
                .map(|v| v.parse::<u64>().context("config key seed: bad integer"))
                .transpose()?)
            .unwrap_or(0),
        rho_r: args
            .rho_r
            .or(parse_file("rho-r")?)
            .unwrap_or_else(|| problem.default_rho()),
        rho_p: args
            .rho_p
            .or(parse_file("rho-p")?)
            .unwrap_or_else(|| problem.default_rho()),
        trunc_eps: args.trunc_eps.or(parse_file("trunc-eps")?).unwrap_or(1e-12),
        solver_tol: args.solver_tol.or(parse_file("solver-tol")?).unwrap_or(1e-12),
        eps_target: args.eps_target.or(parse_file("eps-target")?).unwrap_or(1e-9),
        max_iter: args.max_iter.or(parse_file_usize("max-iter")?).unwrap_or(15),
        alpha: args.alpha.or(parse_file("alpha")?).unwrap_or(0.05),
        probes,
        threads: args.threads.or(parse_file_usize("threads")?).unwrap_or(0),
        out: args
            .out
            .clone()
            .or(from_file("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(format!("{problem}_{mode}.csv"))),
    };
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<bool> {
    let cfg = resolve(&args)?;
    cfg.validate()?;

    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }

    let grid = GridSpec::new(cfg.n)?;
    let samples = sample_recipe(cfg.problem.benchmark(), cfg.num_samples, cfg.seed)?;
    let problem = FdProblem::new(cfg.problem.benchmark(), grid, samples)?;

    let forcing_mode = match (cfg.problem, cfg.mode) {
        (_, Mode::Known) => ForcingMode::QuadraticKnown,
        (Problem::Cubic, Mode::Blind) => ForcingMode::QuadraticBlind,
        (Problem::Expdiff, Mode::Blind) => ForcingMode::LinearBlind,
    };
    let schedule = ForcingSchedule::new(forcing_mode, cfg.rho_r, cfg.rho_p)?;
    let mut newton_cfg = NewtonConfig::new(schedule);
    newton_cfg.trunc_eps = cfg.trunc_eps;
    newton_cfg.eps_target = cfg.eps_target;
    newton_cfg.max_iter = cfg.max_iter;
    newton_cfg.alpha = cfg.alpha;
    newton_cfg.probes = cfg.probes;
    newton_cfg.seed = cfg.seed;
    newton_cfg.solver.residual_tol = cfg.solver_tol;
    newton_cfg.solver.stagnation_tol = cfg.solver_tol;
    // Both benchmark preconditioners are symmetric positive definite, so the
    // rank-one solver runs its energy formulation.
    newton_cfg.solver.spd_mode = true;
    newton_cfg.solver.max_rank = 64;

    let state = newton::solve(&problem, &newton_cfg)?;

    report::print_table(&state);
    report::write_csv(&cfg.out, &cfg, &state)?;

    let final_eps = state.epsilon_history.last().copied().unwrap_or(f64::NAN);
    let orders = if state.epsilon_history.len() >= 3 {
        convergence_order(&state.epsilon_history)
            .map(|o| {
                o.iter()
                    .map(|v| format!("{v:.2}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .unwrap_or_else(|_| "n/a".into())
    } else {
        "n/a".into()
    };
    let (cost_r, cost_p) = state
        .reports
        .last()
        .map(|r| (r.normalized_cost_r, r.normalized_cost_p))
        .unwrap_or((f64::NAN, f64::NAN));
    println!(
        "{}: final epsilon {:.4e} after {} iterations, normalized cost R {:.4e}, P {:.4e}, orders [{}]",
        if state.converged { "converged" } else { "max-iter reached" },
        final_eps,
        state.iterations,
        cost_r,
        cost_p,
        orders,
    );
    println!("report written to {}", cfg.out.display());

    Ok(state.converged)
}
