//! Python bindings for the qlink simulator. Structured results come back as plain dicts.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use qlink::config::{self, ConfigError};
use qlink::protocol::{self, ProtocolError, RunMode, RunTarget, Scenario};

fn config_err(e: ConfigError) -> PyErr {
    match e {
        ConfigError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn protocol_err(e: ProtocolError) -> PyErr {
    match e {
        ProtocolError::Io(_) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn load(scenario: Option<&str>, preset: Option<&str>) -> PyResult<Scenario> {
    let base = match scenario {
        Some(path) => config::load_scenario(std::path::Path::new(path)).map_err(config_err)?,
        None => config::default_scenario(),
    };
    match preset {
        Some(name) => config::apply_preset(&base, name).map_err(config_err),
        None => Ok(base),
    }
}

fn parse_mode(mode: &str) -> PyResult<RunMode> {
    mode.parse().map_err(|e: ProtocolError| PyValueError::new_err(e.to_string()))
}

/// Names of the bundled fibre presets.
#[pyfunction]
fn presets() -> Vec<String> {
    config::preset_names().iter().map(|s| s.to_string()).collect()
}

/// SHA-256 of the resolved scenario.
#[pyfunction]
#[pyo3(signature = (scenario=None, preset=None))]
fn config_hash(scenario: Option<&str>, preset: Option<&str>) -> PyResult<String> {
    Ok(config::config_hash(&load(scenario, preset)?))
}

/// Repetition rate, success probability, duty cycle and event rate.
#[pyfunction]
#[pyo3(signature = (preset=None, scenario=None, duty_cycle=0.5))]
fn rate_budget(py: Python<'_>, preset: Option<&str>, scenario: Option<&str>, duty_cycle: f64) -> PyResult<Py<PyAny>> {
    let s = load(scenario, preset)?;
    to_py(py, &protocol::rate_budget(&s, duty_cycle))
}

/// Model fidelity for every preset.
#[pyfunction]
#[pyo3(signature = (scenario=None, trajectories=4000, seed=7))]
fn fidelity_table(py: Python<'_>, scenario: Option<&str>, trajectories: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let s = load(scenario, None)?;
    let rows = py
        .detach(|| protocol::fidelity_vs_length(&s, &protocol::table_presets(), trajectories, seed))
        .map_err(protocol_err)?;
    to_py(py, &rows)
}

/// Runs the try sequence and returns the run summary.
#[pyfunction]
#[pyo3(signature = (preset=None, scenario=None, mode="density-matrix", events=Some(100), duration=None, seed=1))]
fn simulate(
    py: Python<'_>,
    preset: Option<&str>,
    scenario: Option<&str>,
    mode: &str,
    events: Option<usize>,
    duration: Option<f64>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let s = load(scenario, preset)?;
    let mode = parse_mode(mode)?;
    let target = RunTarget { events, duration };
    let out = py.detach(|| protocol::run_sequence(&s, mode, target, seed)).map_err(protocol_err)?;
    to_py(py, &out.summary)
}

/// F ≥ 1/9 + 8/9·V for the qutrit pair.
#[pyfunction]
fn fidelity_bound(visibility: f64) -> PyResult<f64> {
    qlink::analysis::fidelity_bound(visibility).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Interference contrast and its standard error from coincidence counts.
#[pyfunction]
fn interference_contrast(n_null: f64, n_plus: f64, n_minus: f64) -> PyResult<(f64, f64)> {
    qlink::analysis::contrast_with_error(n_null, n_plus, n_minus).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn qlink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(rate_budget, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_table, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_bound, m)?)?;
    m.add_function(wrap_pyfunction!(interference_contrast, m)?)?;
    Ok(())
}
