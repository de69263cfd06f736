//! Experiment harness: seeded replications over a grid of iteration counts,
//! deterministic aggregation, and machine-readable outputs.

use crate::benchmarks::{self, BenchParams};
use crate::diagnostics::{rate_fit, RateFit, TraceRecord};
use crate::error::{Error, Result};
use crate::solver::{self, Algorithm, RunOptions, Schedule, TraceOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::config(format!("unknown output format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Benchmark registry name.
    pub problem: String,
    #[serde(default)]
    pub params: BenchParams,
    pub algorithm: Algorithm,
    /// Optional constraint-set override in the `l1:1.0` mini-grammar.
    #[serde(default)]
    pub set_spec: Option<String>,
    /// Iteration counts, one experiment cell per value.
    pub n_list: Vec<usize>,
    pub beta: f64,
    #[serde(default)]
    pub delta: f64,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    /// Worker threads; 0 picks the machine default.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub lean_sfo: bool,
    /// Exact-diagnostic cadence along traces (1 = every iteration).
    #[serde(default = "default_cadence")]
    pub diag_cadence: usize,
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

fn default_cadence() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::config("n_list must hold positive iteration counts"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be >= 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta must be positive"));
        }
        if self.delta < 0.0 {
            return Err(Error::config("delta must be nonnegative"));
        }
        if self.diag_cadence == 0 {
            return Err(Error::config("diag_cadence must be >= 1"));
        }
        Ok(())
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            trace: TraceOptions {
                exact_diagnostics: true,
                cadence: self.diag_cadence,
            },
            lean_sfo: self.lean_sfo,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pure derivation of a per-cell seed from `(master_seed, N, replication)`;
/// re-running any single cell in isolation reproduces its stream exactly.
pub fn derive_seed(master_seed: u64, n: usize, replication: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(n as u64) ^ splitmix64((replication as u64) << 20 | 0x5EED))
}

/// Numerically stable pairwise summation, fixed evaluation order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Mean and standard error over replications (SE requires >= 2 samples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std_err: Option<f64>,
}

fn stat(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let std_err = if values.len() >= 2 {
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        Some((pairwise_sum(&sq) / (n - 1.0)).sqrt() / n.sqrt())
    } else {
        None
    };
    Stat { mean, std_err }
}

/// Per-`N` aggregate of the at-`R` diagnostics across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NAggregate {
    pub n: usize,
    pub grad_map_sq: Stat,
    pub z_err_sq: Stat,
    /// One entry per tracked level (outermost first); untracked levels absent.
    pub inner_err_sq: Vec<Option<Stat>>,
    pub sfo_per_run: u64,
    pub lmo_per_run: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub version: String,
    pub config: ExperimentConfig,
    pub per_n: Vec<NAggregate>,
    pub rate_fit: Option<RateFit>,
    pub total_sfo: u64,
    pub total_lmo: u64,
    pub seeds: Vec<SeedRecord>,
    pub warnings: Vec<String>,
    /// Set when a worker failed and only completed cells are reported.
    pub partial: bool,
    /// Wall-clock seconds; excluded from the determinism contract.
    pub wall_clock_s: f64,
}

impl AggregateReport {
    /// Copy with the wall clock zeroed, for determinism comparisons.
    pub fn without_wall_clock(&self) -> AggregateReport {
        AggregateReport {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }
}

struct CellOutcome {
    n: usize,
    replication: usize,
    seed: u64,
    grad_map_sq_at_r: f64,
    z_err_sq_at_r: f64,
    inner_err_sq_at_r: Vec<Option<f64>>,
    min_grad_map_sq: f64,
    sfo: u64,
    lmo: u64,
    warnings: Vec<String>,
}

fn run_cell(
    cfg: &ExperimentConfig,
    n: usize,
    replication: usize,
    write_trace: bool,
) -> Result<CellOutcome> {
    let seed = derive_seed(cfg.master_seed, n, replication);
    let built = benchmarks::build(&cfg.problem, &cfg.params, cfg.set_spec.as_deref(), seed)?;
    let mut oracle = built.oracle;
    let sched = Schedule::new(n, cfg.beta, cfg.delta)?;
    let out = solver::run(
        cfg.algorithm,
        &built.x0,
        &built.set,
        &mut oracle,
        &sched,
        &cfg.run_options(),
    )?;

    let r = out.output_index;
    let at_r = &out.trace[r];
    let grad_map_sq_at_r = at_r
        .grad_map_sq
        .ok_or_else(|| Error::Invariant("diagnostics missing at the output index".into()))?;
    let z_err_sq_at_r = at_r
        .z_err_sq
        .ok_or_else(|| Error::Invariant("z error missing at the output index".into()))?;
    let min_grad_map_sq = out
        .trace
        .iter()
        .skip(1)
        .filter_map(|rec| rec.grad_map_sq)
        .fold(f64::INFINITY, f64::min);

    if write_trace {
        if let Some(dir) = &cfg.out_dir {
            write_trace_file(dir, cfg.format, n, replication, &out.trace, built.problem.depth())?;
        }
    }

    Ok(CellOutcome {
        n,
        replication,
        seed,
        grad_map_sq_at_r,
        z_err_sq_at_r,
        inner_err_sq_at_r: at_r.inner_err_sq.clone(),
        min_grad_map_sq,
        sfo: out.sfo_calls,
        lmo: out.lmo_calls,
        warnings: out.warnings,
    })
}

fn trace_file_name(format: OutputFormat, n: usize, replication: usize) -> String {
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    format!("trace_n{n}_r{replication}.{ext}")
}

fn write_trace_file(
    dir: &Path,
    format: OutputFormat,
    n: usize,
    replication: usize,
    trace: &[TraceRecord],
    depth: usize,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(trace_file_name(format, n, replication));
    let body = match format {
        OutputFormat::Csv => {
            let mut s = TraceRecord::csv_header(depth);
            s.push('\n');
            for rec in trace {
                s.push_str(&rec.csv_row(depth));
                s.push('\n');
            }
            s
        }
        OutputFormat::Json => serde_json::to_string_pretty(trace)?,
    };
    std::fs::write(path, body)?;
    Ok(())
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        builder = builder.num_threads(workers);
    }
    builder
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))
}

/// Run every `(N, replication)` cell, aggregate the at-`R` diagnostics in a
/// fixed order, and (when an output directory is set) write per-run traces
/// plus the aggregate. Worker failure aborts but preserves completed cells in
/// a partial aggregate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateReport> {
    cfg.validate()?;
    // fail incompatible configurations before any run
    let probe = benchmarks::build(&cfg.problem, &cfg.params, cfg.set_spec.as_deref(), 0)?;
    let depth = probe.problem.depth();
    check_algorithm(cfg.algorithm, depth)?;
    drop(probe);

    let started = std::time::Instant::now();
    let cells: Vec<(usize, usize)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();

    let pool = thread_pool(cfg.workers)?;
    let results: Vec<Result<CellOutcome>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, r)| run_cell(cfg, n, r, true))
            .collect()
    });

    let mut outcomes = Vec::with_capacity(results.len());
    let mut failure: Option<Error> = None;
    for res in results {
        match res {
            Ok(cell) => outcomes.push(cell),
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    let partial = failure.is_some();
    let report = aggregate(cfg, &outcomes, partial, started.elapsed().as_secs_f64(), depth)?;
    if let Some(dir) = &cfg.out_dir {
        emit_aggregate(&report, dir)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn check_algorithm(algorithm: Algorithm, depth: usize) -> Result<()> {
    let ok = match algorithm {
        Algorithm::Linasa => true,
        Algorithm::Nasa2 => depth == 2,
        Algorithm::Asa1 => depth == 1,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!(
            "algorithm {} incompatible with a {depth}-level problem",
            algorithm.name()
        )))
    }
}

fn aggregate(
    cfg: &ExperimentConfig,
    outcomes: &[CellOutcome],
    partial: bool,
    wall_clock_s: f64,
    depth: usize,
) -> Result<AggregateReport> {
    let mut per_n = Vec::new();
    let mut seeds = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut total_sfo = 0;
    let mut total_lmo = 0;

    for &n in &cfg.n_list {
        // fixed replication order regardless of completion order
        let mut cells: Vec<&CellOutcome> = outcomes.iter().filter(|c| c.n == n).collect();
        cells.sort_by_key(|c| c.replication);
        if cells.is_empty() {
            continue;
        }
        for c in &cells {
            seeds.push(SeedRecord {
                n,
                replication: c.replication,
                seed: c.seed,
            });
            total_sfo += c.sfo;
            total_lmo += c.lmo;
            for w in &c.warnings {
                if !warnings.contains(w) {
                    warnings.push(w.clone());
                }
            }
        }
        let grad: Vec<f64> = cells.iter().map(|c| c.grad_map_sq_at_r).collect();
        let zerr: Vec<f64> = cells.iter().map(|c| c.z_err_sq_at_r).collect();
        let mut inner = Vec::with_capacity(depth);
        for level in 0..depth {
            let vals: Vec<f64> = cells
                .iter()
                .filter_map(|c| c.inner_err_sq_at_r.get(level).copied().flatten())
                .collect();
            inner.push(if vals.len() == cells.len() {
                Some(stat(&vals))
            } else {
                None
            });
        }
        per_n.push(NAggregate {
            n,
            grad_map_sq: stat(&grad),
            z_err_sq: stat(&zerr),
            inner_err_sq: inner,
            sfo_per_run: cells[0].sfo,
            lmo_per_run: cells[0].lmo,
        });
    }

    let fit_points: Vec<(f64, f64)> = per_n
        .iter()
        .map(|a| (a.n as f64, a.grad_map_sq.mean))
        .collect();
    let rate = if fit_points.len() >= 3 {
        rate_fit(&fit_points).ok()
    } else {
        None
    };

    Ok(AggregateReport {
        schema_version: SCHEMA_VERSION,
        version: format!("stocg {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        per_n,
        rate_fit: rate,
        total_sfo,
        total_lmo,
        seeds,
        warnings,
        partial,
        wall_clock_s,
    })
}

/// Write the aggregate JSON next to the per-run traces.
pub fn emit_aggregate(report: &AggregateReport, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("aggregate.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// quantile study

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub n: usize,
    /// `(level, value)` pairs: the empirical `level`-quantile across
    /// replications of `min_k ||G_X(x^k)||^2`.
    pub quantiles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileStudy {
    pub config: ExperimentConfig,
    pub levels: Vec<f64>,
    pub rows: Vec<QuantileRow>,
    pub wall_clock_s: f64,
}

/// Empirical quantile with the convention `quantile(0) = min`, `quantile(1) = max`.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    assert!(!sorted.is_empty());
    if level <= 0.0 {
        return sorted[0];
    }
    let idx = ((level * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[idx - 1]
}

/// Distribution study of `min_k ||G_X(x^k, grad F(x^k), beta)||^2` across
/// replications, for the high-probability scaling checks. Requires the
/// one-level algorithm, full-cadence exact diagnostics, and enough
/// replications for stable tail estimates.
pub fn quantile_study(cfg: &ExperimentConfig, levels: &[f64]) -> Result<QuantileStudy> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Asa1 {
        return Err(Error::config("quantile_study requires the one-level algorithm"));
    }
    if cfg.replications < 200 {
        return Err(Error::StatisticalPower(format!(
            "quantile_study needs >= 200 replications, got {}",
            cfg.replications
        )));
    }
    if levels.is_empty() || levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::config("quantile levels must lie in [0, 1]"));
    }
    let mut cfg_full = cfg.clone();
    cfg_full.diag_cadence = 1;
    cfg_full.out_dir = None;

    let started = std::time::Instant::now();
    let pool = thread_pool(cfg.workers)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let mins: Vec<Result<f64>> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| run_cell(&cfg_full, n, r, false).map(|c| c.min_grad_map_sq))
                .collect()
        });
        let mut values = Vec::with_capacity(cfg.replications);
        for m in mins {
            values.push(m?);
        }
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite diagnostics"));
        rows.push(QuantileRow {
            n,
            quantiles: levels
                .iter()
                .map(|&l| (l, empirical_quantile(&values, l)))
                .collect(),
        });
    }
    Ok(QuantileStudy {
        config: cfg.clone(),
        levels: levels.to_vec(),
        rows,
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}
