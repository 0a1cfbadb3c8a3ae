//! Python bindings: closed-form pipeline error, σ scan, Gaussian W2 and
//! config-driven runs.

use langevin_error::gaussian_metrics::{w2_sq_gauss, GaussianModel};
use langevin_error::harness::{self, parse_config};
use langevin_error::matrixkit::SpdMatrix;
use langevin_error::pipeline::{self, PipelineParams};
use langevin_error::score_theory::{sgd_tau_bound, TauNSign};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sign(s: &str) -> PyResult<TauNSign> {
    match s {
        "minus" => Ok(TauNSign::Minus),
        "plus" => Ok(TauNSign::Plus),
        other => Err(err(format!("tau_n_sign must be 'minus' or 'plus', got {other:?}"))),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(err("covariance must be a square list of rows"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn breakdown<'py>(py: Python<'py>, b: &pipeline::ErrorBreakdown) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("term0", b.term0)?;
    d.set_item("term_tau", b.term_tau)?;
    d.set_item("term_tauN", b.term_tau_n)?;
    d.set_item("term_N", b.term_n)?;
    d.set_item("total", b.total)?;
    Ok(d)
}

/// Expected squared W2 between data and the ULA law of the trained score.
#[pyfunction]
#[pyo3(signature = (spectrum, sigma, tau, gamma, n, tau_n_sign = "minus"))]
fn expected_pipeline_error<'py>(
    py: Python<'py>,
    spectrum: Vec<f64>,
    sigma: f64,
    tau: f64,
    gamma: f64,
    n: u64,
    tau_n_sign: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let p = PipelineParams { sigma, tau, gamma, n };
    let b = pipeline::expected_pipeline_error(&spectrum, &p, sign(tau_n_sign)?).map_err(err)?;
    breakdown(py, &b)
}

/// Breakdown on a σ grid plus the refined minimiser.
#[pyfunction]
#[pyo3(signature = (spectrum, tau, gamma, n, grid, tau_n_sign = "minus"))]
fn sigma_scan<'py>(
    py: Python<'py>,
    spectrum: Vec<f64>,
    tau: f64,
    gamma: f64,
    n: u64,
    grid: Vec<f64>,
    tau_n_sign: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let scan = pipeline::sigma_tradeoff_scan(&spectrum, tau, gamma, n, &grid, sign(tau_n_sign)?).map_err(err)?;
    let rows = scan
        .rows
        .iter()
        .map(|r| {
            let d = match &r.breakdown {
                Some(b) => breakdown(py, b)?,
                None => PyDict::new(py),
            };
            d.set_item("sigma", r.sigma)?;
            d.set_item("error", r.error.clone())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("sigma_star", scan.sigma_star)?;
    out.set_item("total_star", scan.total_star)?;
    out.set_item("interior", scan.interior)?;
    out.set_item("grid_argmin", scan.grid_argmin)?;
    Ok(out)
}

/// Squared W2 between two Gaussians given as mean vectors and covariance rows.
#[pyfunction]
fn w2_sq(mean1: Vec<f64>, cov1: Vec<Vec<f64>>, mean2: Vec<f64>, cov2: Vec<Vec<f64>>) -> PyResult<f64> {
    let g = |m: Vec<f64>, c: Vec<Vec<f64>>| -> PyResult<GaussianModel> {
        let cov = SpdMatrix::new(matrix(c)?).map_err(err)?;
        GaussianModel::new(DVector::from_vec(m), cov).map_err(err)
    };
    w2_sq_gauss(&g(mean1, cov1)?, &g(mean2, cov2)?).map_err(err)
}

/// Largest stable SGD stepsize for top eigenvalue `lmax`.
#[pyfunction]
fn tau_bound(lmax: f64, sigma: f64) -> f64 {
    sgd_tau_bound(lmax, sigma)
}

/// Runs a TOML experiment config and returns the JSON report.
#[pyfunction]
fn run_config(py: Python<'_>, toml_text: &str) -> PyResult<String> {
    let cfg = parse_config(toml_text).map_err(err)?;
    let report = py.detach(|| harness::run(&cfg)).map_err(err)?;
    Ok(report.to_json())
}

#[pymodule]
#[pyo3(name = "langevin_error")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(expected_pipeline_error, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_scan, m)?)?;
    m.add_function(wrap_pyfunction!(w2_sq, m)?)?;
    m.add_function(wrap_pyfunction!(tau_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
