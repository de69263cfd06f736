//! Outer solvers: the linearized averaged scheme for any nesting depth and its
//! two-level / one-level specializations, driven by the square-root schedule.
//!
//! One run is strictly sequential. Replications parallelize upstream with one
//! reseeded oracle per worker.

use crate::composition::{chain_product, Matrix, StochasticOracle, Vector, OUTPUT_INDEX_STREAM};
use crate::diagnostics::{self, TraceRecord};
use crate::error::{Error, Result};
use crate::icg::{exact_subproblem_solution, run_icg, subproblem_value, IcgRequest};
use crate::sets::FeasibleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Linearized averaging, any depth.
    Linasa,
    /// Two-level variant without the linearization correction.
    Nasa2,
    /// One-level variant carrying only the averaged gradient.
    Asa1,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linasa" => Ok(Algorithm::Linasa),
            "nasa2" => Ok(Algorithm::Nasa2),
            "asa1" => Ok(Algorithm::Asa1),
            _ => Err(Error::config(format!("unknown algorithm `{s}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Linasa => "linasa",
            Algorithm::Nasa2 => "nasa2",
            Algorithm::Asa1 => "asa1",
        }
    }

    fn compatible_with(&self, depth: usize) -> Result<()> {
        match self {
            Algorithm::Linasa => Ok(()),
            Algorithm::Nasa2 if depth == 2 => Ok(()),
            Algorithm::Asa1 if depth == 1 => Ok(()),
            Algorithm::Nasa2 => Err(Error::config(format!(
                "nasa2 requires a two-level problem, got depth {depth}"
            ))),
            Algorithm::Asa1 => Err(Error::config(format!(
                "asa1 requires a one-level problem, got depth {depth}"
            ))),
        }
    }
}

/// The square-root parameter schedule: `tau_0 = 1`, `tau_k = 1/sqrt(N)` for
/// `k >= 1`; inner budgets `t_0 = 0`, `t_k = ceil(sqrt(k))`; constant `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n_iters: usize,
    pub beta: f64,
    pub delta: f64,
}

impl Schedule {
    pub fn new(n_iters: usize, beta: f64, delta: f64) -> Result<Self> {
        if n_iters == 0 {
            return Err(Error::config("schedule needs at least one iteration"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::config("schedule beta must be positive and finite"));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::config("schedule delta must be nonnegative"));
        }
        Ok(Schedule { n_iters, beta, delta })
    }

    pub fn tau(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            1.0 / (self.n_iters as f64).sqrt()
        }
    }

    pub fn icg_budget(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            (k as f64).sqrt().ceil() as usize
        }
    }

    /// Closed-form total of inner budgets over a full run, `sum_{k=0}^{N-1} t_k`.
    pub fn total_icg_budget(&self) -> u64 {
        (0..self.n_iters).map(|k| self.icg_budget(k) as u64).sum()
    }
}

/// Mutable solver state. `u[i-1]` estimates `f_i` evaluated at `u_{i+1}`
/// (outermost first); variants that drop inner estimates keep `u` empty or
/// truncated from the front.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vector,
    pub z: Vector,
    /// Inner-value estimates. For `nasa2` only the innermost estimate exists
    /// (stored at index 1 of a depth-2 layout with index 0 unused); handled
    /// through the per-algorithm step functions.
    pub u: Vec<Vector>,
    pub k: usize,
    pub sfo_calls: u64,
    pub lmo_calls: u64,
}

/// What a single outer step produced, for trace assembly.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// The inexact subproblem solution `y~` the step moved toward.
    pub y_tilde: Vector,
}

/// Trace collection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Compute exact-information diagnostics (gradient mapping, FW gap,
    /// tracking errors). Requires exact evaluators on the problem.
    pub exact_diagnostics: bool,
    /// Compute those diagnostics every `cadence` iterations (plus always at
    /// the sampled output index and at the final state).
    pub cadence: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            exact_diagnostics: true,
            cadence: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub trace: TraceOptions,
    /// Drop the unused value draw in the one-level variant (1 SFO per step
    /// instead of 2). Default keeps parity so SFO counts are comparable
    /// across algorithms.
    pub lean_sfo: bool,
}

/// Output of a full run: the per-iteration trace, the uniformly sampled output
/// index `R in {1..N}`, and the state snapshot at `R`.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub output_index: usize,
    pub x_at_r: Vector,
    pub z_at_r: Vector,
    pub u_at_r: Vec<Vector>,
    pub sfo_calls: u64,
    pub lmo_calls: u64,
    pub warnings: Vec<String>,
}

fn check_step_preconditions(state: &SolverState, sched: &Schedule) -> Result<()> {
    if state.k >= sched.n_iters {
        return Err(Error::contract(format!(
            "step at k = {} but the schedule runs only {} iterations",
            state.k, sched.n_iters
        )));
    }
    Ok(())
}

fn icg_step(state: &SolverState, set: &FeasibleSet, sched: &Schedule) -> Result<(Vector, usize)> {
    let budget = sched.icg_budget(state.k);
    let req = IcgRequest {
        x: state.x.clone(),
        z: state.z.clone(),
        beta: sched.beta,
        budget,
        slack: sched.delta,
    };
    let out = run_icg(set, &req)?;
    Ok((out.w, out.lmo_calls))
}

fn advance_x(state: &mut SolverState, set: &FeasibleSet, y_tilde: &Vector, tau: f64) -> Result<()> {
    state.x += (y_tilde - &state.x) * tau;
    if !set.contains(&state.x, 1e-9) {
        return Err(Error::Invariant(format!(
            "iterate left the feasible set at k = {}",
            state.k
        )));
    }
    Ok(())
}

/// One step of the linearized scheme (any depth): inexact CG move on `x`,
/// fresh samples at the previous evaluation points, averaged gradient update,
/// then inner-estimate updates swept innermost-to-outermost so each level sees
/// the already-updated deeper estimate.
pub fn step_linasa(
    state: &mut SolverState,
    set: &FeasibleSet,
    oracle: &mut StochasticOracle,
    sched: &Schedule,
) -> Result<StepOutcome> {
    check_step_preconditions(state, sched)?;
    let depth = oracle.depth();
    let tau = sched.tau(state.k);

    let (y_tilde, lmo_used) = icg_step(state, set, sched)?;
    let x_prev = state.x.clone();
    advance_x(state, set, &y_tilde, tau)?;

    // fresh samples at u_{i+1}^k (the pre-update evaluation points)
    let mut samples: Vec<(Vector, Matrix)> = Vec::with_capacity(depth);
    for level in 1..=depth {
        let point = if level == depth { &x_prev } else { &state.u[level] };
        let point = point.clone();
        samples.push(oracle.sample_level(level, &point)?);
    }

    let jacobians: Vec<Matrix> = samples.iter().map(|(_, j)| j.clone()).collect();
    let estimate = chain_product(&jacobians);
    state.z = &state.z * (1.0 - tau) + estimate * tau;

    // descending sweep i = T..1; the i = T correction uses the x move
    let mut deeper_diff = &state.x - &x_prev;
    for level in (1..=depth).rev() {
        let (g, j) = &samples[level - 1];
        let u_old = state.u[level - 1].clone();
        let correction = j.tr_mul(&deeper_diff);
        state.u[level - 1] = &u_old * (1.0 - tau) + g * tau + correction;
        deeper_diff = &state.u[level - 1] - &u_old;
    }

    state.k += 1;
    state.sfo_calls += 2 * depth as u64;
    state.lmo_calls += lmo_used as u64;
    Ok(StepOutcome { y_tilde })
}

/// One step of the two-level variant: same sampling, plain moving average on
/// the inner estimate (no linearization correction) and no outer estimate.
pub fn step_nasa2(
    state: &mut SolverState,
    set: &FeasibleSet,
    oracle: &mut StochasticOracle,
    sched: &Schedule,
) -> Result<StepOutcome> {
    if oracle.depth() != 2 {
        return Err(Error::config("step_nasa2 needs a two-level problem"));
    }
    check_step_preconditions(state, sched)?;
    let tau = sched.tau(state.k);

    let (y_tilde, lmo_used) = icg_step(state, set, sched)?;
    let x_prev = state.x.clone();
    advance_x(state, set, &y_tilde, tau)?;

    let u2_prev = state.u[1].clone();
    let (_g1, j1) = oracle.sample_level(1, &u2_prev)?;
    let (g2, j2) = oracle.sample_level(2, &x_prev)?;

    let estimate = chain_product(&[j1, j2]);
    state.z = &state.z * (1.0 - tau) + estimate * tau;
    state.u[1] = &u2_prev * (1.0 - tau) + g2 * tau;

    state.k += 1;
    state.sfo_calls += 4;
    state.lmo_calls += lmo_used as u64;
    Ok(StepOutcome { y_tilde })
}

/// One step of the one-level variant: inexact CG move plus the averaged
/// gradient; the value draw exists only for oracle-count parity.
pub fn step_asa1(
    state: &mut SolverState,
    set: &FeasibleSet,
    oracle: &mut StochasticOracle,
    sched: &Schedule,
    lean_sfo: bool,
) -> Result<StepOutcome> {
    if oracle.depth() != 1 {
        return Err(Error::config("step_asa1 needs a one-level problem"));
    }
    check_step_preconditions(state, sched)?;
    let tau = sched.tau(state.k);

    let (y_tilde, lmo_used) = icg_step(state, set, sched)?;
    let x_prev = state.x.clone();
    advance_x(state, set, &y_tilde, tau)?;

    if !lean_sfo {
        oracle.sample_value(1, &x_prev)?;
    }
    let j1 = oracle.sample_jacobian(1, &x_prev)?;
    let estimate: Vector = j1.column(0).into_owned();
    state.z = &state.z * (1.0 - tau) + estimate * tau;

    state.k += 1;
    state.sfo_calls += if lean_sfo { 1 } else { 2 };
    state.lmo_calls += lmo_used as u64;
    Ok(StepOutcome { y_tilde })
}

/// Warning text when the two-level variant runs outside its analyzed regime,
/// `beta >= min_rho [6 rho L_F' + (2 rho + 2/(3 rho)) L_f1' L_f2^2]`.
fn nasa2_regime_warning(oracle: &StochasticOracle, beta: f64) -> Option<String> {
    let constants = diagnostics::chain_constants(&oracle.problem).ok()?;
    let l_grad_f = constants.lip_grad_objective();
    let levels = &oracle.problem.levels;
    let c = levels[0].lip_grad * levels[1].lip_value * levels[1].lip_value;
    if !(l_grad_f.is_finite() && c.is_finite()) {
        return None;
    }
    let a = 6.0 * l_grad_f + 2.0 * c;
    let threshold = 2.0 * ((2.0 * c / 3.0) * a).sqrt();
    if beta < threshold {
        Some(format!(
            "nasa2: beta = {beta} is below the analyzed regime threshold {threshold:.6} \
             (no rho > 0 satisfies the step-size condition); the run proceeds anyway"
        ))
    } else {
        None
    }
}

/// Initialize solver state: `z = 0`, inner estimates by one noisy forward pass
/// `u_i = G_i(u_{i+1})` from `u_{T+1} = x0`. The initialization draws are not
/// counted in `sfo_calls`, which tracks per-iteration oracle complexity only.
fn init_state(
    algorithm: Algorithm,
    x0: &Vector,
    oracle: &mut StochasticOracle,
) -> Result<SolverState> {
    let depth = oracle.depth();
    let dim = oracle.problem.ambient_dim();
    let mut u: Vec<Vector> = Vec::new();
    match algorithm {
        Algorithm::Linasa => {
            u = vec![Vector::zeros(0); depth];
            let mut point = x0.clone();
            for level in (1..=depth).rev() {
                let g = oracle.sample_value(level, &point)?;
                u[level - 1] = g.clone();
                point = g;
            }
        }
        Algorithm::Nasa2 => {
            u = vec![Vector::zeros(0); depth];
            u[1] = oracle.sample_value(2, x0)?;
        }
        Algorithm::Asa1 => {}
    }
    Ok(SolverState {
        x: x0.clone(),
        z: Vector::zeros(dim),
        u,
        k: 0,
        sfo_calls: 0,
        lmo_calls: 0,
    })
}

struct ExactDiag {
    grad_map_sq: f64,
    fw_gap: f64,
    z_err_sq: f64,
    inner_err_sq: Vec<Option<f64>>,
}

fn exact_diag(
    algorithm: Algorithm,
    state: &SolverState,
    set: &FeasibleSet,
    oracle: &StochasticOracle,
    beta: f64,
) -> Result<ExactDiag> {
    let problem = &oracle.problem;
    let grad = problem.exact_gradient(&state.x)?;
    let gm = diagnostics::gradient_mapping(set, &state.x, &grad, beta)?;
    let gap = diagnostics::fw_gap(set, &state.x, &grad)?;
    let z_err_sq = (&grad - &state.z).norm_squared();

    let depth = problem.depth();
    let mut inner_err_sq = vec![None; depth];
    let tracked: Box<dyn Iterator<Item = usize>> = match algorithm {
        Algorithm::Linasa => Box::new(1..=depth),
        Algorithm::Nasa2 => Box::new(std::iter::once(2)),
        Algorithm::Asa1 => Box::new(std::iter::empty()),
    };
    for level in tracked {
        let input = if level == depth {
            state.x.clone()
        } else {
            state.u[level].clone()
        };
        let fi = problem.levels[level - 1].value(&input);
        inner_err_sq[level - 1] = Some((fi - &state.u[level - 1]).norm_squared());
    }

    Ok(ExactDiag {
        grad_map_sq: gm.norm_squared(),
        fw_gap: gap,
        z_err_sq,
        inner_err_sq,
    })
}

/// Run `N` outer iterations of the chosen algorithm from a feasible `x0`,
/// recording a trace row per state `k = 0..N` and sampling the output index
/// `R` uniformly from `{1..N}` on a stream reserved for that draw.
pub fn run(
    algorithm: Algorithm,
    x0: &Vector,
    set: &FeasibleSet,
    oracle: &mut StochasticOracle,
    sched: &Schedule,
    opts: &RunOptions,
) -> Result<RunResult> {
    algorithm.compatible_with(oracle.depth())?;
    if x0.len() != set.dim() || set.dim() != oracle.problem.ambient_dim() {
        return Err(Error::config(format!(
            "dimension mismatch: x0 {}, set {}, problem {}",
            x0.len(),
            set.dim(),
            oracle.problem.ambient_dim()
        )));
    }
    if !set.contains(x0, 1e-9) {
        return Err(Error::contract("x0 must be feasible"));
    }

    let n = sched.n_iters;
    let depth = oracle.depth();
    let mut warnings = Vec::new();
    if algorithm == Algorithm::Nasa2 {
        if let Some(w) = nasa2_regime_warning(oracle, sched.beta) {
            warnings.push(w);
        }
    }

    // R consumes a stream reserved for it, so changing N never perturbs the
    // trajectory streams.
    let mut r_rng = ChaCha8Rng::seed_from_u64(oracle.master_seed());
    r_rng.set_stream(OUTPUT_INDEX_STREAM);
    let output_index = r_rng.random_range(1..=n);

    let mut state = init_state(algorithm, x0, oracle)?;
    let mut trace = Vec::with_capacity(n + 1);
    let mut snapshot: Option<(Vector, Vector, Vec<Vector>)> = None;

    let want_exact = |k: usize| {
        opts.trace.exact_diagnostics
            && (opts.trace.cadence <= 1 || k.is_multiple_of(opts.trace.cadence) || k == output_index || k == n)
    };

    for k in 0..=n {
        let diag = if want_exact(k) {
            Some(exact_diag(algorithm, &state, set, oracle, sched.beta)?)
        } else {
            None
        };
        let mut record = TraceRecord {
            k,
            tau: None,
            t_icg: None,
            grad_map_sq: diag.as_ref().map(|d| d.grad_map_sq),
            fw_gap: diag.as_ref().map(|d| d.fw_gap),
            z_err_sq: diag.as_ref().map(|d| d.z_err_sq),
            inner_err_sq: diag
                .as_ref()
                .map(|d| d.inner_err_sq.clone())
                .unwrap_or_else(|| vec![None; depth]),
            h_gap: None,
            sfo: state.sfo_calls,
            lmo: state.lmo_calls,
        };

        if k < n {
            record.tau = Some(sched.tau(k));
            record.t_icg = Some(sched.icg_budget(k));

            let x_before = state.x.clone();
            let z_before = state.z.clone();
            let outcome = match algorithm {
                Algorithm::Linasa => step_linasa(&mut state, set, oracle, sched)?,
                Algorithm::Nasa2 => step_nasa2(&mut state, set, oracle, sched)?,
                Algorithm::Asa1 => step_asa1(&mut state, set, oracle, sched, opts.lean_sfo)?,
            };
            if diag.is_some() {
                let req = IcgRequest {
                    x: x_before.clone(),
                    z: z_before.clone(),
                    beta: sched.beta,
                    budget: sched.icg_budget(k),
                    slack: sched.delta,
                };
                let y_star = exact_subproblem_solution(set, &x_before, &z_before, sched.beta)?;
                record.h_gap =
                    Some(subproblem_value(&req, &outcome.y_tilde) - subproblem_value(&req, &y_star));
            }
            if state.k == output_index {
                snapshot = Some((state.x.clone(), state.z.clone(), state.u.clone()));
            }
        }
        trace.push(record);
    }

    let (x_at_r, z_at_r, u_at_r) = snapshot.expect("output index lies in 1..=n");
    Ok(RunResult {
        trace,
        output_index,
        x_at_r,
        z_at_r,
        u_at_r,
        sfo_calls: state.sfo_calls,
        lmo_calls: state.lmo_calls,
        warnings,
    })
}
