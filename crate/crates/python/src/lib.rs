//! Python bindings. Results come back as plain dicts and lists; policies
//! travel as the same JSON documents the command line reads and writes.

use opsense::atm::{atm_policy, DEFAULT_DEPTH_CAP};
use opsense::bench::{run_bench, BenchConfig, TerminalSensing};
use opsense::envs::EnvSpec;
use opsense::sim::monte_carlo_eval;
use opsense::spi::{spi as run_spi, SpiOptions};
use opsense::truncated::{always_sense_threshold, solve_truncated, CertificateReport, TruncatedOptions, DEFAULT_BUDGET};
use opsense::{as_policy, evaluate_on_roots, solve_baseline, BaselineMdp, Error, SensingPolicy, SensingProblem};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::json;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Budget { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// Hands a JSON value to Python's `json.loads`.
fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn policy_value(policy: &SensingPolicy) -> serde_json::Value {
    serde_json::from_str(&policy.to_json_string()).expect("policy json")
}

fn terminal_sensing(mode: &str) -> PyResult<TerminalSensing> {
    match mode {
        "free" => Ok(TerminalSensing::Free),
        "charged" => Ok(TerminalSensing::Charged),
        _ => Err(PyValueError::new_err(format!("terminal_sensing must be 'free' or 'charged', got {mode:?}"))),
    }
}

/// A tabular MDP with costs (reward files are negated on load).
#[pyclass(name = "Mdp", module = "opsense_py", frozen)]
struct PyMdp {
    inner: BaselineMdp,
}

#[pymethods]
impl PyMdp {
    /// `transitions[a][s][s']`, `costs[s][a]`.
    #[new]
    #[pyo3(signature = (transitions, costs, discount, name = "mdp"))]
    fn new(transitions: Vec<Vec<Vec<f64>>>, costs: Vec<Vec<f64>>, discount: f64, name: &str) -> PyResult<Self> {
        let inner = BaselineMdp::new(name, transitions, costs, discount).map_err(to_py)?;
        inner.ensure_valid().map_err(to_py)?;
        Ok(PyMdp { inner })
    }

    /// Built-in environment such as `"fig2"` or `"frozen_lake:4x4-hard"`.
    #[staticmethod]
    #[pyo3(signature = (spec, discount = None))]
    fn from_env(spec: &str, discount: Option<f64>) -> PyResult<Self> {
        let spec: EnvSpec = spec.parse().map_err(to_py)?;
        Ok(PyMdp { inner: spec.with_discount(discount).build().map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyMdp { inner: BaselineMdp::from_json_str(text).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    #[getter]
    fn start_distribution(&self) -> Vec<f64> {
        self.inner.start_distribution()
    }

    /// `{"v_star", "q_star", "pi_star"}` of the baseline problem.
    #[pyo3(signature = (tol = 1e-12))]
    fn solve<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let sol = solve_baseline(&self.inner, tol).map_err(to_py)?;
        let q: Vec<Vec<f64>> = (0..self.inner.num_states()).map(|s| sol.q_row(s).to_vec()).collect();
        json_to_py(py, &json!({ "v_star": sol.v_star, "q_star": q, "pi_star": sol.pi_star }))
    }

    /// Sensing cost below which always-sensing is optimal.
    fn threshold(&self) -> PyResult<f64> {
        let sol = solve_baseline(&self.inner, 1e-12).map_err(to_py)?;
        Ok(always_sense_threshold(&self.inner, &sol))
    }

    fn __repr__(&self) -> String {
        format!(
            "Mdp(name={:?}, states={}, actions={}, discount={})",
            self.inner.name(),
            self.inner.num_states(),
            self.inner.num_actions(),
            self.inner.discount()
        )
    }
}

fn problem(mdp: &PyMdp, k: f64, mode: &str) -> PyResult<SensingProblem> {
    let cost = terminal_sensing(mode)?.cost_model(k, &mdp.inner);
    SensingProblem::new(mdp.inner.clone(), cost).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (mdp, k, depth, budget = DEFAULT_BUDGET, terminal_sensing = "free"))]
fn truncate<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    k: f64,
    depth: usize,
    budget: u64,
    terminal_sensing: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = problem(mdp, k, terminal_sensing)?;
    let opts = TruncatedOptions { budget, record_nodes: false, ..TruncatedOptions::default() };
    let sol = py.detach(|| solve_truncated(&p, depth, opts)).map_err(to_py)?;
    json_to_py(py, &json!({ "depth": depth, "root_values": sol.root_values, "policy": policy_value(&sol.policy) }))
}

/// Certificate sweep over `depths` (an iterable of ints).
#[pyfunction]
#[pyo3(signature = (mdp, k, depths, budget = DEFAULT_BUDGET, terminal_sensing = "free"))]
fn certify<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    k: f64,
    depths: Vec<usize>,
    budget: u64,
    terminal_sensing: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = problem(mdp, k, terminal_sensing)?;
    let opts = TruncatedOptions { budget, ..TruncatedOptions::default() };
    let report = py.detach(|| CertificateReport::sweep(&p, mdp.inner.name(), depths, opts)).map_err(to_py)?;
    py.import("json")?.call_method1("loads", (report.to_json_string(),))
}

#[pyfunction]
#[pyo3(signature = (mdp, k, maxsteps = None, delta = 1e-6, iters = None, terminal_sensing = "free"))]
fn spi<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    k: f64,
    maxsteps: Option<usize>,
    delta: f64,
    iters: Option<usize>,
    terminal_sensing: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = problem(mdp, k, terminal_sensing)?;
    let opts = SpiOptions { maxsteps, delta, max_updates: iters, ..SpiOptions::default() };
    let res = py.detach(|| run_spi(&p, &as_policy(&p.baseline), opts)).map_err(to_py)?;
    json_to_py(
        py,
        &json!({
            "root_values": res.values,
            "policy": policy_value(&res.policy),
            "updates": res.updates,
            "maxsteps": res.maxsteps,
        }),
    )
}

#[pyfunction]
#[pyo3(signature = (mdp, k, depth_cap = DEFAULT_DEPTH_CAP, terminal_sensing = "free"))]
fn atm<'py>(
    py: Python<'py>,
    mdp: &PyMdp,
    k: f64,
    depth_cap: usize,
    terminal_sensing: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let p = problem(mdp, k, terminal_sensing)?;
    let res = atm_policy(&p, depth_cap).map_err(to_py)?;
    let values = evaluate_on_roots(&p, &res.policy).map_err(to_py)?.values;
    json_to_py(
        py,
        &json!({
            "root_values": values,
            "policy": policy_value(&res.policy),
            "capped": res.capped,
            "error_bound": res.error_bound,
        }),
    )
}

/// Policy for `always sense` as a JSON string.
#[pyfunction]
fn always_sense(mdp: &PyMdp) -> PyResult<String> {
    let sol = solve_baseline(&mdp.inner, 1e-12).map_err(to_py)?;
    Ok(as_policy(&sol).to_json_string())
}

/// Exact root values of a policy given as a JSON string.
#[pyfunction]
#[pyo3(signature = (mdp, k, policy, terminal_sensing = "free"))]
fn evaluate(mdp: &PyMdp, k: f64, policy: &str, terminal_sensing: &str) -> PyResult<Vec<f64>> {
    let p = problem(mdp, k, terminal_sensing)?;
    let policy = SensingPolicy::from_json_str(policy).map_err(to_py)?;
    Ok(evaluate_on_roots(&p, &policy).map_err(to_py)?.values)
}

/// Seeded simulation of a policy; returns `(mean, stderr)`.
#[pyfunction]
#[pyo3(signature = (mdp, k, policy, episodes, seed = 0, start = None, terminal_sensing = "free"))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo(
    py: Python<'_>,
    mdp: &PyMdp,
    k: f64,
    policy: &str,
    episodes: usize,
    seed: u64,
    start: Option<Vec<f64>>,
    terminal_sensing: &str,
) -> PyResult<(f64, f64)> {
    let p = problem(mdp, k, terminal_sensing)?;
    let policy = SensingPolicy::from_json_str(policy).map_err(to_py)?;
    let start = start.unwrap_or_else(|| mdp.inner.start_distribution());
    let est = py.detach(|| monte_carlo_eval(&p, &policy, &start, episodes, None, seed)).map_err(to_py)?;
    Ok((est.mean, est.stderr))
}

/// Benchmark table for a built-in environment, as CSV text.
#[pyfunction(name = "bench")]
#[pyo3(signature = (env, ks, terminal_sensing = "free"))]
fn bench_csv(py: Python<'_>, env: &str, ks: Vec<f64>, terminal_sensing: &str) -> PyResult<String> {
    let spec: EnvSpec = env.parse().map_err(to_py)?;
    let mdp = spec.build().map_err(to_py)?;
    let cfg = BenchConfig {
        terminal_sensing: self::terminal_sensing(terminal_sensing)?,
        scale: spec.display_scale(),
        timing: false,
        ..BenchConfig::default()
    };
    let report = py.detach(|| run_bench(&spec.to_string(), &mdp, &ks, &cfg)).map_err(to_py)?;
    report.to_csv().map_err(to_py)
}

#[pymodule]
fn opsense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_function(wrap_pyfunction!(truncate, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(spi, m)?)?;
    m.add_function(wrap_pyfunction!(atm, m)?)?;
    m.add_function(wrap_pyfunction!(always_sense, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(bench_csv, m)?)?;
    Ok(())
}
