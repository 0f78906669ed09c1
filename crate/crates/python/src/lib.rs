//! Python module `rie`: eigensystems, cleaning, resolvent functionals and
//! model sampling from `rie-core`. Matrices cross the boundary as lists of
//! rows; complex numbers as Python `complex`.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rie_core::estimators::{self, CleaningParams};
use rie_core::simulation;
use rie_core::transforms;
use rie_core::{Complex64, CovarianceModel, EigenSystem, SymmetricMatrix};

fn value_error(e: rie_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(PyValueError::new_err(format!(
            "row {i} has {} entries, expected {ncols}",
            row.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn symmetric(rows: &[Vec<f64>]) -> PyResult<SymmetricMatrix> {
    SymmetricMatrix::from_dense(&to_matrix(rows)?).map_err(value_error)
}

fn prepare(data: &[Vec<f64>], transpose: bool, center: bool) -> PyResult<DMatrix<f64>> {
    let mut x = to_matrix(data)?;
    if transpose {
        x = x.transpose();
    }
    if center {
        estimators::center_rows(&mut x);
    }
    Ok(x)
}

/// Eigenvalues in descending order with sign-fixed orthonormal eigenvectors.
#[pyclass(name = "EigenSystem", module = "rie", frozen)]
pub struct PyEigenSystem {
    inner: EigenSystem,
}

#[pymethods]
impl PyEigenSystem {
    /// Decompose a symmetric matrix given as a list of rows.
    #[new]
    fn new(matrix: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = rie_core::eig_sym(&symmetric(&matrix)?).map_err(value_error)?;
        Ok(Self { inner })
    }

    /// Spectrum of the sample covariance `X X' / T` of an `n x T` data matrix.
    #[staticmethod]
    #[pyo3(signature = (data, transpose = false, center = false))]
    fn from_data(data: Vec<Vec<f64>>, transpose: bool, center: bool) -> PyResult<Self> {
        let x = prepare(&data, transpose, center)?;
        let e = estimators::empirical_covariance(&x).map_err(value_error)?;
        let inner = rie_core::eig_sym(&e)
            .and_then(EigenSystem::into_psd)
            .map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Rows of the eigenvector matrix; column `k` is the `k`-th eigenvector.
    #[getter]
    fn vectors(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.vectors())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn vector(&self, k: usize) -> PyResult<Vec<f64>> {
        if k >= self.inner.dim() {
            return Err(PyValueError::new_err(format!("index {k} out of range")));
        }
        Ok(self.inner.vector(k).iter().copied().collect())
    }

    /// `U diag(values) U'`.
    fn assemble(&self, values: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.assemble(&values).map_err(value_error)?;
        Ok(to_rows(m.as_matrix()))
    }

    /// `u_k' M u_k` for every eigenvector.
    fn projected_diagonal(&self, matrix: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.projected_diagonal(&symmetric(&matrix)?).map_err(value_error)
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("EigenSystem(dim={}, trace={})", self.inner.dim(), self.inner.trace())
    }
}

#[pyfunction]
fn empirical_covariance(data: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let e = estimators::empirical_covariance(&to_matrix(&data)?).map_err(value_error)?;
    Ok(to_rows(e.as_matrix()))
}

/// Cleaned eigenvalues `lambda / |1 - q + lambda G(lambda + i eta)|^2`.
#[pyfunction]
#[pyo3(signature = (eig, t_samples, alpha = 0.5, eta = None, q = None, trace_preserve = false))]
fn lp_clean(
    eig: PyRef<'_, PyEigenSystem>,
    t_samples: usize,
    alpha: f64,
    eta: Option<f64>,
    q: Option<f64>,
    trace_preserve: bool,
) -> PyResult<Vec<f64>> {
    let params = CleaningParams {
        alpha,
        eta,
        q,
        trace_preserve,
    };
    let cleaned = estimators::lp_clean_with(&eig.inner, t_samples, &params).map_err(value_error)?;
    Ok(cleaned.cleaned)
}

/// `u_k' Sigma u_k`.
#[pyfunction]
fn oracle_rie(eig: PyRef<'_, PyEigenSystem>, sigma: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let cleaned = estimators::oracle_rie(&eig.inner, &symmetric(&sigma)?).map_err(value_error)?;
    Ok(cleaned.cleaned)
}

/// Full cleaning pipeline on an `n x T` data matrix. Returns the report
/// fields of `rie clean` plus `cleaned_covariance`.
#[pyfunction]
#[pyo3(signature = (data, alpha = 0.5, eta = None, q = None, transpose = false, center = false, trace_preserve = false))]
#[allow(clippy::too_many_arguments)]
fn clean<'py>(
    py: Python<'py>,
    data: Vec<Vec<f64>>,
    alpha: f64,
    eta: Option<f64>,
    q: Option<f64>,
    transpose: bool,
    center: bool,
    trace_preserve: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let params = CleaningParams {
        alpha,
        eta,
        q,
        trace_preserve,
    };
    params.validate().map_err(value_error)?;
    let x = prepare(&data, transpose, center)?;
    let (n, t) = x.shape();
    let e = estimators::empirical_covariance(&x).map_err(value_error)?;
    let eig = rie_core::eig_sym(&e)
        .and_then(EigenSystem::into_psd)
        .map_err(value_error)?;
    let cleaned = estimators::lp_clean_with(&eig, t, &params).map_err(value_error)?;
    let estimate = estimators::assemble(&eig, &cleaned).map_err(value_error)?;

    let out = PyDict::new(py);
    out.set_item("n", n)?;
    out.set_item("T", t)?;
    out.set_item("q", cleaned.q)?;
    out.set_item("eta", cleaned.eta)?;
    out.set_item("alpha", cleaned.alpha)?;
    out.set_item("eigenvalues", eig.values().to_vec())?;
    out.set_item("trace_before", eig.trace())?;
    out.set_item("trace_after", cleaned.cleaned.iter().sum::<f64>())?;
    out.set_item("cleaned_eigenvalues", cleaned.cleaned)?;
    out.set_item("cleaned_covariance", to_rows(estimate.as_matrix()))?;
    Ok(out)
}

#[pyfunction]
fn stieltjes_g(eig: PyRef<'_, PyEigenSystem>, t_samples: usize, z: Complex64) -> PyResult<Complex64> {
    transforms::stieltjes_g(&eig.inner, t_samples, z).map_err(value_error)
}

#[pyfunction]
fn stieltjes_l(
    eig: PyRef<'_, PyEigenSystem>,
    sigma: Vec<Vec<f64>>,
    t_samples: usize,
    z: Complex64,
) -> PyResult<Complex64> {
    transforms::stieltjes_l(&eig.inner, &symmetric(&sigma)?, t_samples, z).map_err(value_error)
}

#[pyfunction]
fn h_functional(eig: PyRef<'_, PyEigenSystem>, t_samples: usize, z: Complex64) -> PyResult<Complex64> {
    transforms::h_functional(&eig.inner, t_samples, z).map_err(value_error)
}

#[pyfunction]
fn theorem1_rhs(g: Complex64, z: Complex64, q: f64) -> PyResult<Complex64> {
    transforms::theorem1_rhs(g, z, q).map_err(value_error)
}

#[pyfunction]
fn cleaned_eigenvalue(lam: f64, g: Complex64, q: f64) -> PyResult<f64> {
    transforms::cleaned_eigenvalue(lam, g, q).map_err(value_error)
}

/// Mass ratio of `Im L` to `Im G` around eigenvalue `k`.
#[pyfunction]
#[pyo3(signature = (eig, sigma, t_samples, k, eta, epsilon = None))]
fn rn_ratio_oracle(
    eig: PyRef<'_, PyEigenSystem>,
    sigma: Vec<Vec<f64>>,
    t_samples: usize,
    k: usize,
    eta: f64,
    epsilon: Option<f64>,
) -> PyResult<f64> {
    if k >= eig.inner.dim() {
        return Err(PyValueError::new_err(format!("index {k} out of range")));
    }
    let epsilon = epsilon.unwrap_or_else(|| transforms::default_epsilon(&eig.inner, k));
    transforms::rn_ratio_oracle(&eig.inner, &symmetric(&sigma)?, t_samples, k, epsilon, eta).map_err(value_error)
}

/// Covariance matrix of a model spec such as `toeplitz:0.5:10`.
#[pyfunction]
fn make_sigma(model: &str) -> PyResult<Vec<Vec<f64>>> {
    let model: CovarianceModel = model.parse().map_err(value_error)?;
    let sigma = simulation::make_sigma(&model).map_err(value_error)?;
    Ok(to_rows(sigma.as_matrix()))
}

/// `n x T` Gaussian sample with covariance `sigma`.
#[pyfunction]
fn sample_gaussian(sigma: Vec<Vec<f64>>, t_samples: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let x = simulation::sample_gaussian(&symmetric(&sigma)?, t_samples, seed).map_err(value_error)?;
    Ok(to_rows(&x))
}

#[pyfunction]
fn frobenius_norm(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(symmetric(&matrix)?.frobenius_norm())
}

#[pyfunction]
fn operator_norm(matrix: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(symmetric(&matrix)?.operator_norm())
}

#[pymodule]
fn rie(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEigenSystem>()?;
    m.add_function(wrap_pyfunction!(empirical_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(lp_clean, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_rie, m)?)?;
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(stieltjes_g, m)?)?;
    m.add_function(wrap_pyfunction!(stieltjes_l, m)?)?;
    m.add_function(wrap_pyfunction!(h_functional, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(cleaned_eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(rn_ratio_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(make_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(frobenius_norm, m)?)?;
    m.add_function(wrap_pyfunction!(operator_norm, m)?)?;
    Ok(())
}
