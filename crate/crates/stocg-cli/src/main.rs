//! Command-line experiment harness: configure a benchmark, an algorithm and a
//! schedule, run seeded replications, and emit machine-readable results.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 numerical error, 4 i/o error.
//! Set `STOCG_LOG` to `off`, `warn` (default), `info`, or `debug`.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use stocg_core::benchmarks::{BenchParams, REGISTRY};
use stocg_core::error::Error;
use stocg_core::experiment::{
    quantile_study, run_experiment, ExperimentConfig, OutputFormat,
};
use stocg_core::solver::Algorithm;

#[derive(Parser)]
#[command(name = "stocg", version, about = "Projection-free stochastic composition solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Parser, Debug)]
struct CommonArgs {
    /// Benchmark name: quadbox | quadball | twolevel | meandev
    #[arg(long)]
    problem: String,
    /// Algorithm: linasa | nasa2 | asa1
    #[arg(long)]
    algo: String,
    /// Constraint set override, e.g. "l1:1.0", "l2:2.0", "simplex:1.0", "box:0:1"
    #[arg(long)]
    set: Option<String>,
    /// Iteration counts, comma separated, e.g. "100,400,1600"
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// LMO slack quality passed to the inner conditional-gradient loop
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Replications per iteration count
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for per-run traces and the aggregate
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace format: csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Worker threads (0 = machine default)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// JSON file with benchmark parameter overrides
    #[arg(long)]
    config: Option<PathBuf>,
    /// Drop the unused value draw in the one-level algorithm
    #[arg(long, default_value_t = false)]
    lean_sfo: bool,
    /// Exact-diagnostic cadence along traces (1 = every iteration)
    #[arg(long, default_value_t = 1)]
    diag_cadence: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications and aggregate the at-R diagnostics
    Run {
        #[command(flatten)]
        args: CommonArgs,
    },
    /// Estimate quantiles of min_k ||G_X(x^k)||^2 across replications
    Quantiles {
        #[command(flatten)]
        args: CommonArgs,
        /// Quantile levels in [0, 1], comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
    },
}

fn log_level() -> u8 {
    match std::env::var("STOCG_LOG").ok().as_deref() {
        Some("off") | Some("quiet") | Some("0") => 0,
        None | Some("warn") | Some("1") => 1,
        Some("info") | Some("2") => 2,
        Some("debug") | Some("3") => 3,
        Some(_) => 1,
    }
}

fn to_config(args: &CommonArgs) -> Result<ExperimentConfig, Error> {
    if !REGISTRY.contains(&args.problem.as_str()) {
        return Err(Error::config(format!(
            "unknown problem `{}`; expected one of {REGISTRY:?}",
            args.problem
        )));
    }
    let params: BenchParams = match &args.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)?;
            serde_json::from_str(&body)
                .map_err(|e| Error::config(format!("bad benchmark config {}: {e}", path.display())))?
        }
        None => BenchParams::default(),
    };
    Ok(ExperimentConfig {
        problem: args.problem.clone(),
        params,
        algorithm: Algorithm::parse(&args.algo)?,
        set_spec: args.set.clone(),
        n_list: args.n.clone(),
        beta: args.beta,
        delta: args.delta,
        replications: args.reps,
        master_seed: args.seed,
        out_dir: args.out.clone(),
        format: OutputFormat::parse(&args.format)?,
        workers: args.workers,
        lean_sfo: args.lean_sfo,
        diag_cadence: args.diag_cadence,
    })
}

fn run_command(args: &CommonArgs) -> Result<(), Error> {
    let cfg = to_config(args)?;
    let verbosity = log_level();
    if verbosity >= 2 {
        eprintln!(
            "stocg: running {} x {} replications of {}/{} (seed {})",
            cfg.n_list.len(),
            cfg.replications,
            cfg.problem,
            cfg.algorithm.name(),
            cfg.master_seed
        );
    }
    let report = run_experiment(&cfg)?;
    if verbosity >= 1 {
        for w in &report.warnings {
            eprintln!("stocg: warning: {w}");
        }
    }
    for agg in &report.per_n {
        println!(
            "N={:<6} grad_map_sq {:.6e}{}  z_err_sq {:.6e}  sfo/run {}  lmo/run {}",
            agg.n,
            agg.grad_map_sq.mean,
            agg.grad_map_sq
                .std_err
                .map(|se| format!(" (se {se:.2e})"))
                .unwrap_or_default(),
            agg.z_err_sq.mean,
            agg.sfo_per_run,
            agg.lmo_per_run
        );
    }
    if let Some(fit) = &report.rate_fit {
        println!(
            "rate fit: slope {:.4}, intercept {:.4}, r^2 {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        );
    }
    match &cfg.out_dir {
        Some(dir) => {
            if verbosity >= 2 {
                eprintln!("stocg: wrote traces and aggregate to {}", dir.display());
            }
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn quantiles_command(args: &CommonArgs, levels: &[f64]) -> Result<(), Error> {
    let cfg = to_config(args)?;
    let study = quantile_study(&cfg, levels)?;
    for row in &study.rows {
        let cells: Vec<String> = row
            .quantiles
            .iter()
            .map(|(l, v)| format!("q{l}={v:.6e}"))
            .collect();
        println!("N={:<6} {}", row.n, cells.join("  "));
    }
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("quantiles.json");
        std::fs::write(&path, serde_json::to_string_pretty(&study)?)?;
        if log_level() >= 2 {
            eprintln!("stocg: wrote {}", path.display());
        }
    } else {
        println!("{}", serde_json::to_string_pretty(&study)?);
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Data(_) | Error::StatisticalPower(_) => 2,
        Error::NumericalDomain { .. } | Error::Invariant(_) => 3,
        Error::Io(_) | Error::Serde(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { args } => run_command(args),
        Command::Quantiles { args, levels } => quantiles_command(args, levels),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stocg: error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
