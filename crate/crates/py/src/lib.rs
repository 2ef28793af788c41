//! Python bindings: the cost calculus, the horizon optimizer, DD decoding,
//! and JSON-driven simulation runs.
//!
//! Build with `cargo build -p epipool-py --release`; the resulting cdylib
//! imports as `epipool_py` (see `python/smoke_test.py`).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use epipool_core::config::parse_config_str;
use epipool_core::dorfman::{self, CostParams, Objective};
use epipool_core::engine;
use epipool_core::horizon;
use epipool_core::protocol::{self, BudgetRule, CcaConfig};

fn value_err(err: epipool_core::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Expected tests per person for first-stage pools of size `s` at
/// prevalence `p`.
#[pyfunction]
fn dorfman_cost_per_person(s: u32, p: f64) -> f64 {
    dorfman::dorfman_cost_per_person(s, p)
}

/// Expected quarantine cost per person with exponential base `a`.
#[pyfunction]
fn quarantine_cost_per_person(s: u32, p: f64, a: f64) -> f64 {
    dorfman::quarantine_cost_per_person(s, p, a)
}

/// The explicit binomial-sum oracle behind the closed form (s <= 64).
#[pyfunction]
fn quarantine_cost_brute_force(s: u32, p: f64, a: f64) -> PyResult<f64> {
    dorfman::quarantine_cost_brute_force(s, p, a).map_err(value_err)
}

/// Test cost plus `alpha` times the quarantine cost.
#[pyfunction]
fn combined_cost_per_person(s: u32, p: f64, a: f64, alpha: f64) -> PyResult<f64> {
    let params = CostParams::new(a, alpha).map_err(value_err)?;
    Ok(dorfman::combined_cost_per_person(s, p, params))
}

/// Expected infected members of a contaminated pool of size `s`.
#[pyfunction]
fn expected_infected_in_contaminated_group(s: u32, p: f64) -> PyResult<f64> {
    dorfman::expected_infected_in_contaminated_group(s, p).map_err(value_err)
}

/// Next-day per-community prevalence from per-community source counts.
#[pyfunction]
fn estimate_next_day_prevalence(counts: Vec<u64>, q1: f64, q2: f64) -> Vec<f64> {
    dorfman::estimate_next_day_prevalence(&counts, q1, q2).0
}

/// Optimal integer group size in [1, s_max]. Minimizes tests per person, or
/// the combined objective when `a` and `alpha` are given.
#[pyfunction]
#[pyo3(signature = (p, s_max, a=None, alpha=None))]
fn optimal_group_size(p: f64, s_max: u32, a: Option<f64>, alpha: Option<f64>) -> PyResult<u32> {
    let objective = match (a, alpha) {
        (None, None) => Objective::TestOnly,
        (Some(a), Some(alpha)) => Objective::Combined(CostParams::new(a, alpha).map_err(value_err)?),
        _ => {
            return Err(PyValueError::new_err(
                "provide both `a` and `alpha`, or neither",
            ))
        }
    };
    Ok(dorfman::optimal_group_size(p, objective, s_max))
}

/// Expected first-stage pipeline sizes for days 1..=len(group_sizes).
#[pyfunction]
fn expected_pipeline(n1: f64, p: f64, group_sizes: Vec<u32>) -> Vec<f64> {
    horizon::expected_pipeline(n1, p, &group_sizes)
}

/// Expected total tests over the horizon, trailing second stage included.
#[pyfunction]
fn expected_total_tests(n1: f64, p: f64, group_sizes: Vec<u32>) -> f64 {
    horizon::expected_total_tests(n1, p, &group_sizes)
}

/// A per-day group-size schedule with its expected pipeline and total tests.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct HorizonPlan {
    #[pyo3(get)]
    horizon: u32,
    #[pyo3(get)]
    group_sizes: Vec<u32>,
    #[pyo3(get)]
    expected_pipeline: Vec<f64>,
    #[pyo3(get)]
    expected_total_tests: f64,
}

#[pymethods]
impl HorizonPlan {
    fn __repr__(&self) -> String {
        format!(
            "HorizonPlan(horizon={}, group_sizes={:?}, expected_total_tests={:.3})",
            self.horizon, self.group_sizes, self.expected_total_tests
        )
    }
}

impl From<horizon::HorizonPlan> for HorizonPlan {
    fn from(plan: horizon::HorizonPlan) -> Self {
        HorizonPlan {
            horizon: plan.horizon,
            group_sizes: plan.group_sizes,
            expected_pipeline: plan.expected_pipeline,
            expected_total_tests: plan.expected_total_tests,
        }
    }
}

/// Backward-induction group-size schedule for a `horizon`-day campaign.
#[pyfunction]
fn optimize_backward(n1: f64, p: f64, horizon_days: u32, s_max: u32) -> HorizonPlan {
    horizon::optimize_backward(n1, p, horizon_days, s_max).into()
}

/// Exhaustive-search oracle for `optimize_backward` (small instances only).
#[pyfunction]
fn brute_force_horizon(n1: f64, p: f64, horizon_days: u32, s_max: u32) -> PyResult<HorizonPlan> {
    horizon::brute_force_horizon(n1, p, horizon_days, s_max)
        .map(Into::into)
        .map_err(value_err)
}

/// The static per-day schedule using the single-day optimal size.
#[pyfunction]
fn static_plan(n1: f64, p: f64, horizon_days: u32, s_max: u32) -> HorizonPlan {
    horizon::static_plan(n1, p, horizon_days, s_max).into()
}

/// Per-day CCA test budget.
#[pyfunction]
#[pyo3(signature = (n_d, mu, p, budget, c, delta=0.0))]
fn cca_budget(n_d: u64, mu: f64, p: f64, budget: &str, c: f64, delta: f64) -> PyResult<u64> {
    let rule = match budget {
        "mu_log" => BudgetRule::MuLog { c },
        "pn_log" => BudgetRule::PnLog { c },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown budget rule `{other}` (expected mu_log or pn_log)"
            )))
        }
    };
    let config = CcaConfig::new(rule, delta).map_err(value_err)?;
    Ok(protocol::cca_budget(n_d, mu, p, &config))
}

/// Definite-defective decoding: returns the indices classified positive.
#[pyfunction]
fn dd_decode(tests: Vec<Vec<usize>>, outcomes: Vec<bool>) -> PyResult<Vec<usize>> {
    if tests.len() != outcomes.len() {
        return Err(PyValueError::new_err("tests and outcomes differ in length"));
    }
    Ok(protocol::dd_decode(&tests, &outcomes))
}

/// Run a Monte Carlo batch from a JSON experiment config (same schema as the
/// CLI); returns the batch summary as a JSON string.
#[pyfunction]
fn run_batch_json(config_json: &str) -> PyResult<String> {
    let config = parse_config_str(config_json).map_err(value_err)?;
    let (model, protocol) = config.validated().map_err(value_err)?;
    let (summary, _) = engine::run_batch(
        model,
        protocol,
        config.horizon,
        config.trajectories,
        config.seed,
        config.explosion_threshold,
    )
    .map_err(value_err)?;
    serde_json::to_string(&summary).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Run one trajectory (config seed + `index`) and return its per-day metrics
/// as a JSON string.
#[pyfunction]
fn run_trajectory_json(config_json: &str, index: u64) -> PyResult<String> {
    let config = parse_config_str(config_json).map_err(value_err)?;
    let (model, protocol) = config.validated().map_err(value_err)?;
    let metrics = engine::run_trajectory(model, protocol, config.horizon, config.seed + index)
        .map_err(value_err)?;
    serde_json::to_string(&metrics).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn epipool_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(dorfman_cost_per_person, m)?)?;
    m.add_function(wrap_pyfunction!(quarantine_cost_per_person, m)?)?;
    m.add_function(wrap_pyfunction!(quarantine_cost_brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(combined_cost_per_person, m)?)?;
    m.add_function(wrap_pyfunction!(expected_infected_in_contaminated_group, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_next_day_prevalence, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_group_size, m)?)?;
    m.add_function(wrap_pyfunction!(expected_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(expected_total_tests, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_backward, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_horizon, m)?)?;
    m.add_function(wrap_pyfunction!(static_plan, m)?)?;
    m.add_function(wrap_pyfunction!(cca_budget, m)?)?;
    m.add_function(wrap_pyfunction!(dd_decode, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch_json, m)?)?;
    m.add_function(wrap_pyfunction!(run_trajectory_json, m)?)?;
    m.add_class::<HorizonPlan>()?;
    Ok(())
}
