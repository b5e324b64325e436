use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qsd_core::bath::{CorrelationKernel, DiscreteBathSpec, KernelHandle};
use qsd_core::jc::{closed_form_lambda, markov_lambda, solve_lambda_volterra};
use qsd_core::mercer::mercer_decompose;
use qsd_core::scenario::{Scenario, BUNDLED};
use qsd_core::TimeGrid;

fn core_err(e: qsd_core::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse(text: &str) -> PyResult<Scenario> {
    Scenario::parse(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `K(t, s)` of a discrete bath.
#[pyfunction]
#[pyo3(signature = (frequencies, couplings, t, s, detuning = 0.0))]
fn discrete_kernel(
    frequencies: Vec<f64>,
    couplings: Vec<Complex64>,
    t: f64,
    s: f64,
    detuning: f64,
) -> PyResult<Complex64> {
    let spec = DiscreteBathSpec::new(frequencies, couplings, detuning).map_err(core_err)?;
    spec.eval(t, s).map_err(core_err)
}

/// Scenario TOML text of a bundled scenario.
#[pyfunction]
fn bundled_scenario(name: &str) -> PyResult<String> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s.to_string())
        .ok_or_else(|| PyValueError::new_err(format!("no bundled scenario named {name:?}")))
}

#[pyfunction]
fn bundled_names() -> Vec<String> {
    BUNDLED.iter().map(|(n, _)| n.to_string()).collect()
}

/// `(t, lambda)` on the scenario grid. `method` is "volterra" or "closed".
#[pyfunction]
#[pyo3(signature = (scenario, method = "volterra"))]
fn lambda_curve(scenario: &str, method: &str) -> PyResult<(Vec<f64>, Vec<Complex64>)> {
    let sc = parse(scenario)?;
    let lam = match (method, &sc.kernel) {
        (_, KernelHandle::Markov { rate }) => markov_lambda(*rate, &sc.grid),
        ("volterra", h) => solve_lambda_volterra(h, &sc.grid).map_err(core_err)?,
        ("closed", h) => {
            closed_form_lambda(h, &sc.grid).ok_or_else(|| PyValueError::new_err("no closed form for this kernel"))?
        }
        (m, _) => return Err(PyValueError::new_err(format!("unknown method {m:?}"))),
    };
    Ok((sc.grid.points(), lam.values))
}

/// Leading Nystrom eigenvalues of the scenario kernel on `[0, horizon]`.
#[pyfunction]
#[pyo3(signature = (scenario, n_points = None, trunc_tol = None))]
fn mercer_eigenvalues(scenario: &str, n_points: Option<usize>, trunc_tol: Option<f64>) -> PyResult<Vec<f64>> {
    let sc = parse(scenario)?;
    let grid = TimeGrid::new(sc.grid.horizon(), n_points.unwrap_or(sc.run.mercer_points)).map_err(core_err)?;
    let basis = mercer_decompose(&sc.kernel, &grid, trunc_tol.unwrap_or(sc.run.trunc_tol)).map_err(core_err)?;
    Ok(basis.eigenvalues().to_vec())
}

/// Runs the command-line tool in-process; returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    qsd_core::cli::main_with(std::iter::once("qsd".to_string()).chain(args))
}

#[pymodule]
fn qsd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(discrete_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(bundled_names, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_curve, m)?)?;
    m.add_function(wrap_pyfunction!(mercer_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
