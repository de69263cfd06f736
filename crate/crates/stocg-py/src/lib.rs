//! Python bindings: feasible sets, stationarity diagnostics, benchmark
//! problems, single solver runs, and the replication harness.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::sync::Arc;
use stocg_core::benchmarks::{self, BenchParams};
use stocg_core::composition::{CompositionProblem, Vector};
use stocg_core::diagnostics;
use stocg_core::error::Error;
use stocg_core::experiment::{self, ExperimentConfig};
use stocg_core::icg;
use stocg_core::sets;
use stocg_core::solver::{self, Algorithm, RunOptions, Schedule, TraceOptions};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Config(_) | Error::Contract(_) | Error::Data(_) | Error::StatisticalPower(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn vec_of(v: Vec<f64>) -> Vector {
    Vector::from_vec(v)
}

/// A convex constraint set with a linear minimization oracle and a Euclidean
/// projection.
#[pyclass(name = "FeasibleSet", from_py_object)]
#[derive(Clone)]
struct PyFeasibleSet {
    inner: sets::FeasibleSet,
}

#[pymethods]
impl PyFeasibleSet {
    /// Build from the mini-grammar: "l1:1.0", "l2:2.0", "simplex:1.0", "box:0:1".
    #[new]
    fn new(spec: &str, dim: usize) -> PyResult<Self> {
        Ok(PyFeasibleSet {
            inner: sets::FeasibleSet::parse(spec, dim).map_err(to_py_err)?,
        })
    }

    fn lmo(&self, g: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.lmo(&vec_of(g)).map_err(to_py_err)?.as_slice().to_vec())
    }

    #[pyo3(signature = (g, slack=0.0))]
    fn lmo_approx(&self, g: Vec<f64>, slack: f64) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .lmo_approx(&vec_of(g), slack)
            .map_err(to_py_err)?
            .as_slice()
            .to_vec())
    }

    fn project(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.project(&vec_of(y)).map_err(to_py_err)?.as_slice().to_vec())
    }

    #[pyo3(signature = (v, tol=1e-9))]
    fn contains(&self, v: Vec<f64>, tol: f64) -> bool {
        self.inner.contains(&vec_of(v), tol)
    }

    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A benchmark problem instance with exact evaluators.
#[pyclass(name = "Problem")]
struct PyProblem {
    problem: Arc<CompositionProblem>,
    set: sets::FeasibleSet,
    x0: Vector,
}

#[pymethods]
impl PyProblem {
    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.problem.exact_value(&vec_of(x)).map_err(to_py_err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .problem
            .exact_gradient(&vec_of(x))
            .map_err(to_py_err)?
            .as_slice()
            .to_vec())
    }

    fn depth(&self) -> usize {
        self.problem.depth()
    }

    fn dims(&self) -> Vec<usize> {
        self.problem.dims()
    }

    fn default_set(&self) -> PyFeasibleSet {
        PyFeasibleSet {
            inner: self.set.clone(),
        }
    }

    fn default_start(&self) -> Vec<f64> {
        self.x0.as_slice().to_vec()
    }

    /// Smoothness constants of the chain: the objective-level gradient
    /// Lipschitz constant and the chain-mismatch constants.
    fn chain_constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let constants = diagnostics::chain_constants(&self.problem).map_err(to_py_err)?;
        let out = PyDict::new(py);
        out.set_item("lip_grad_objective", constants.lip_grad_objective())?;
        out.set_item("lip_grad_tail", constants.lip_grad_tail.clone())?;
        out.set_item("c", constants.c.clone())?;
        Ok(out)
    }
}

/// Build a registry benchmark: quadbox | quadball | twolevel | meandev.
#[pyfunction]
#[pyo3(signature = (name, params_json=None, set_spec=None, seed=0))]
fn build_benchmark(
    name: &str,
    params_json: Option<&str>,
    set_spec: Option<&str>,
    seed: u64,
) -> PyResult<PyProblem> {
    let params: BenchParams = match params_json {
        Some(body) => serde_json::from_str(body)
            .map_err(|e| PyValueError::new_err(format!("bad params json: {e}")))?,
        None => BenchParams::default(),
    };
    let built = benchmarks::build(name, &params, set_spec, seed).map_err(to_py_err)?;
    Ok(PyProblem {
        problem: built.problem,
        set: built.set,
        x0: built.x0,
    })
}

#[pyfunction]
fn gradient_mapping(set: &PyFeasibleSet, x: Vec<f64>, g: Vec<f64>, beta: f64) -> PyResult<Vec<f64>> {
    Ok(
        diagnostics::gradient_mapping(&set.inner, &vec_of(x), &vec_of(g), beta)
            .map_err(to_py_err)?
            .as_slice()
            .to_vec(),
    )
}

#[pyfunction]
fn fw_gap(set: &PyFeasibleSet, x: Vec<f64>, g: Vec<f64>) -> PyResult<f64> {
    diagnostics::fw_gap(&set.inner, &vec_of(x), &vec_of(g)).map_err(to_py_err)
}

#[pyfunction]
fn eta(set: &PyFeasibleSet, x: Vec<f64>, z: Vec<f64>, beta: f64) -> PyResult<f64> {
    diagnostics::eta(&set.inner, &vec_of(x), &vec_of(z), beta).map_err(to_py_err)
}

/// Solve the quadratic subproblem min <z, y-x> + (beta/2)||y-x||^2 by the
/// inexact conditional gradient loop; returns (y, lmo_calls).
#[pyfunction]
#[pyo3(signature = (set, x, z, beta, budget, slack=0.0))]
fn icg_solve(
    set: &PyFeasibleSet,
    x: Vec<f64>,
    z: Vec<f64>,
    beta: f64,
    budget: usize,
    slack: f64,
) -> PyResult<(Vec<f64>, usize)> {
    let req = icg::IcgRequest {
        x: vec_of(x),
        z: vec_of(z),
        beta,
        budget,
        slack,
    };
    let out = icg::run_icg(&set.inner, &req).map_err(to_py_err)?;
    Ok((out.w.as_slice().to_vec(), out.lmo_calls))
}

fn opt_column<'py>(
    py: Python<'py>,
    trace: &[stocg_core::diagnostics::TraceRecord],
    pick: impl Fn(&stocg_core::diagnostics::TraceRecord) -> Option<f64>,
) -> PyResult<Bound<'py, PyList>> {
    let out = PyList::empty(py);
    for rec in trace {
        match pick(rec) {
            Some(v) => out.append(v)?,
            None => out.append(py.None())?,
        }
    }
    Ok(out)
}

/// Run one solver instance on a registry benchmark and return the trace
/// columns plus the sampled output state.
#[pyfunction]
#[pyo3(signature = (name, algo, n, beta=1.0, delta=0.0, seed=0, params_json=None, set_spec=None, lean_sfo=false, diag_cadence=1))]
#[allow(clippy::too_many_arguments)]
fn run_solver<'py>(
    py: Python<'py>,
    name: &str,
    algo: &str,
    n: usize,
    beta: f64,
    delta: f64,
    seed: u64,
    params_json: Option<&str>,
    set_spec: Option<&str>,
    lean_sfo: bool,
    diag_cadence: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let params: BenchParams = match params_json {
        Some(body) => serde_json::from_str(body)
            .map_err(|e| PyValueError::new_err(format!("bad params json: {e}")))?,
        None => BenchParams::default(),
    };
    let built = benchmarks::build(name, &params, set_spec, seed).map_err(to_py_err)?;
    let mut oracle = built.oracle;
    let algorithm = Algorithm::parse(algo).map_err(to_py_err)?;
    let sched = Schedule::new(n, beta, delta).map_err(to_py_err)?;
    let opts = RunOptions {
        trace: TraceOptions {
            exact_diagnostics: true,
            cadence: diag_cadence,
        },
        lean_sfo,
    };
    let out = solver::run(algorithm, &built.x0, &built.set, &mut oracle, &sched, &opts)
        .map_err(to_py_err)?;

    let result = PyDict::new(py);
    result.set_item("output_index", out.output_index)?;
    result.set_item("x_at_r", out.x_at_r.as_slice().to_vec())?;
    result.set_item("z_at_r", out.z_at_r.as_slice().to_vec())?;
    result.set_item("sfo_calls", out.sfo_calls)?;
    result.set_item("lmo_calls", out.lmo_calls)?;
    result.set_item("warnings", out.warnings.clone())?;
    result.set_item("k", out.trace.iter().map(|r| r.k).collect::<Vec<_>>())?;
    result.set_item("grad_map_sq", opt_column(py, &out.trace, |r| r.grad_map_sq)?)?;
    result.set_item("fw_gap", opt_column(py, &out.trace, |r| r.fw_gap)?)?;
    result.set_item("z_err_sq", opt_column(py, &out.trace, |r| r.z_err_sq)?)?;
    result.set_item("h_gap", opt_column(py, &out.trace, |r| r.h_gap)?)?;
    for level in 0..built.problem.depth() {
        result.set_item(
            format!("inner_err_{}", level + 1),
            opt_column(py, &out.trace, |r| r.inner_err_sq.get(level).copied().flatten())?,
        )?;
    }
    Ok(result)
}

/// Run a full replication experiment from a JSON config; returns the
/// aggregate report as a JSON string.
#[pyfunction]
fn run_experiment_json(config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("bad experiment config: {e}")))?;
    let report = experiment::run_experiment(&cfg).map_err(to_py_err)?;
    serde_json::to_string_pretty(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Quantile study of min_k ||G_X(x^k)||^2; returns a JSON string.
#[pyfunction]
fn quantile_study_json(config_json: &str, levels: Vec<f64>) -> PyResult<String> {
    let cfg: ExperimentConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("bad experiment config: {e}")))?;
    let study = experiment::quantile_study(&cfg, &levels).map_err(to_py_err)?;
    serde_json::to_string_pretty(&study).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn stocg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyFeasibleSet>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(build_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_mapping, m)?)?;
    m.add_function(wrap_pyfunction!(fw_gap, m)?)?;
    m.add_function(wrap_pyfunction!(eta, m)?)?;
    m.add_function(wrap_pyfunction!(icg_solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_solver, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_json, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_study_json, m)?)?;
    Ok(())
}
