//! Python bindings for `eqg`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use eqg::cli::{self, RunConfig};
use eqg::kring::{tsystem_check, Budget};
use eqg::tableaux::{qchar_evaluation, Partition};
use eqg::{AffineShift, EllipticParams, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::InvalidParams(_) | Error::IndexOutOfRange(_) | Error::NotMultiple(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Modular parameter `tau`, shift `hbar`, theta series length and tolerance.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: EllipticParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (tau = Complex64::new(0.0, 0.8), hbar = Complex64::new(0.23, 0.11), series_terms = 60, tol = 1e-12))]
    fn new(tau: Complex64, hbar: Complex64, series_terms: usize, tol: f64) -> PyResult<Self> {
        Ok(PyParams { inner: EllipticParams::new(tau, hbar, series_terms, tol).map_err(to_py)? })
    }

    #[getter]
    fn tau(&self) -> Complex64 {
        self.inner.tau
    }

    #[getter]
    fn hbar(&self) -> Complex64 {
        self.inner.hbar
    }

    fn __repr__(&self) -> String {
        format!("Params(tau={}, hbar={}, series_terms={})", self.inner.tau, self.inner.hbar, self.inner.series_terms)
    }
}

fn params_or_default(p: Option<PyParams>) -> EllipticParams {
    p.map(|p| p.inner).unwrap_or_default()
}

/// Odd Jacobi theta function, reduced to the fundamental strip first.
#[pyfunction]
#[pyo3(signature = (z, params = None))]
fn theta(z: Complex64, params: Option<PyParams>) -> Complex64 {
    eqg::theta::theta_reduced(z, &params_or_default(params))
}

/// `R^{ij}_{pq}(z; lambda)` as a nested list indexed `[i-1][j-1][p-1][q-1]`.
#[pyfunction]
#[pyo3(signature = (n, z, lam, params = None))]
fn r_matrix(n: usize, z: Complex64, lam: Vec<Complex64>, params: Option<PyParams>) -> PyResult<Vec<Vec<Vec<Vec<Complex64>>>>> {
    let r = eqg::rmatrix::r_matrix(n, z, &lam, &params_or_default(params)).map_err(to_py)?;
    Ok((1..=n).map(|i| (1..=n).map(|j| (1..=n).map(|p| (1..=n).map(|q| r.get(i, j, p, q)).collect()).collect()).collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (n, z, w, lam, params = None))]
fn dybe_residual(n: usize, z: Complex64, w: Complex64, lam: Vec<Complex64>, params: Option<PyParams>) -> PyResult<f64> {
    eqg::rmatrix::dybe_residual(n, z, w, &lam, &params_or_default(params)).map_err(to_py)
}

/// `(e-weight, multiplicity)` pairs of the evaluation module `S_{mu,a}`.
#[pyfunction]
#[pyo3(signature = (n, mu, a = "0"))]
fn qchar(n: usize, mu: Vec<usize>, a: &str) -> PyResult<Vec<(String, i64)>> {
    let shift: AffineShift = a.parse().map_err(|e: Error| to_py(e))?;
    let q = qchar_evaluation(&Partition::new(&mu, n).map_err(to_py)?, &shift, n).map_err(to_py)?;
    Ok(q.terms().iter().map(|(e, c)| (e.to_string(), *c)).collect())
}

/// True when the Demazure T-system identity holds exactly for `(N, r, k, t)`.
#[pyfunction]
fn tsystem(n: usize, r: usize, k: usize, t: usize) -> PyResult<bool> {
    Ok(tsystem_check(n, r, k, t, Budget::default()).map_err(to_py)?.ok)
}

/// Runs a CLI check (`["dybe", "--N", "3"]` style) and returns the JSON report.
#[pyfunction]
#[pyo3(signature = (args, seed = None))]
fn run_check(args: Vec<String>, seed: Option<u64>) -> PyResult<String> {
    use clap::Parser;
    let argv = std::iter::once("eqg".to_string()).chain(args);
    let parsed = cli::Cli::try_parse_from(argv).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut cfg = cli::load_config(&parsed).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rep = cli::dispatch(&RunConfig { output: None, ..cfg }, &parsed.command).map_err(to_py)?;
    Ok(rep.to_json())
}

#[pymodule]
fn eqg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(theta, m)?)?;
    m.add_function(wrap_pyfunction!(r_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(dybe_residual, m)?)?;
    m.add_function(wrap_pyfunction!(qchar, m)?)?;
    m.add_function(wrap_pyfunction!(tsystem, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
