//! Covariance estimators sharing the eigenvectors of the sample covariance.
//!
//! * empirical: `E = X X' / T`
//! * oracle: eigenvalues `u_k' Sigma u_k`, the Frobenius-optimal choice when
//!   `Sigma` is known
//! * cleaned: eigenvalues `lambda / |1 - q + lambda G(lambda + i eta)|^2`
//!   with `eta = T^{-alpha}`

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{check_dim, EigenSystem, SymmetricMatrix};
use crate::transforms::{cleaned_eigenvalue, stieltjes_g, CLUSTER_TOLERANCE};

pub const DEFAULT_ALPHA: f64 = 0.5;

/// `X X' / T` for an `n x T` data matrix (rows are variables).
pub fn empirical_covariance(data: &DMatrix<f64>) -> Result<SymmetricMatrix> {
    let (n, t) = data.shape();
    if n == 0 || t == 0 {
        return Err(Error::Empty);
    }
    if let Some((idx, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: idx % n,
            col: idx / n,
            value,
        });
    }
    let gram = data * data.transpose();
    let inv_t = 1.0 / t as f64;
    SymmetricMatrix::from_upper_fn(n, |i, j| gram[(i, j)] * inv_t)
}

/// Subtracts each row's sample mean in place.
pub fn center_rows(data: &mut DMatrix<f64>) {
    for mut row in data.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
}

/// Cleaned eigenvalues in the order of their source eigensystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedSpectrum {
    pub cleaned: Vec<f64>,
    /// Spectral resolution; absent for the oracle.
    pub eta: Option<f64>,
    /// Exponent with `eta = T^{-alpha}`; absent for the oracle or when eta
    /// was set directly.
    pub alpha: Option<f64>,
    pub q: Option<f64>,
    pub trace_rescaled: bool,
}

impl CleanedSpectrum {
    pub fn len(&self) -> usize {
        self.cleaned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cleaned.is_empty()
    }
}

/// How `lp_clean_with` picks `eta` and `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningParams {
    pub alpha: f64,
    /// Supersedes `T^{-alpha}` when set.
    pub eta: Option<f64>,
    /// Supersedes `n / T` when set.
    pub q: Option<f64>,
    pub trace_preserve: bool,
}

impl Default for CleaningParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            eta: None,
            q: None,
            trace_preserve: false,
        }
    }
}

impl CleaningParams {
    pub fn validate(&self) -> Result<()> {
        match self.eta {
            Some(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")))
            }
            None if !(self.alpha > 0.0 && self.alpha < 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "alpha must lie in (0, 1), got {}",
                    self.alpha
                )))
            }
            _ => {}
        }
        if let Some(q) = self.q {
            if !(q >= 0.0 && q.is_finite()) {
                return Err(Error::InvalidParameter(format!("q must be non-negative, got {q}")));
            }
        }
        Ok(())
    }

    /// `(eta, alpha)` that will be used for `t_samples` observations.
    pub fn resolution(&self, t_samples: usize) -> (f64, Option<f64>) {
        match self.eta {
            Some(eta) => (eta, None),
            None => ((t_samples as f64).powf(-self.alpha), Some(self.alpha)),
        }
    }
}

/// Oracle eigenvalues `u_k' Sigma u_k`.
pub fn oracle_rie(eigensystem: &EigenSystem, sigma: &SymmetricMatrix) -> Result<CleanedSpectrum> {
    let cleaned = eigensystem.projected_diagonal(sigma)?;
    Ok(CleanedSpectrum {
        cleaned,
        eta: None,
        alpha: None,
        q: None,
        trace_rescaled: false,
    })
}

/// Nonlinear shrinkage at `eta = T^{-alpha}` with `q = n / T`.
pub fn lp_clean(
    eigensystem: &EigenSystem,
    t_samples: usize,
    alpha: f64,
    trace_preserve: bool,
) -> Result<CleanedSpectrum> {
    lp_clean_with(
        eigensystem,
        t_samples,
        &CleaningParams {
            alpha,
            trace_preserve,
            ..CleaningParams::default()
        },
    )
}

pub fn lp_clean_with(eigensystem: &EigenSystem, t_samples: usize, params: &CleaningParams) -> Result<CleanedSpectrum> {
    params.validate()?;
    if t_samples == 0 {
        return Err(Error::InvalidParameter("sample count T must be positive".into()));
    }
    if let Some(&value) = eigensystem.values().iter().find(|&&v| v < 0.0) {
        return Err(Error::NotPsd { value });
    }
    let (eta, alpha) = params.resolution(t_samples);
    let q = params.q.unwrap_or(eigensystem.dim() as f64 / t_samples as f64);
    let mut cleaned = eigensystem
        .values()
        .iter()
        .map(|&lambda| {
            let g = stieltjes_g(eigensystem, t_samples, Complex64::new(lambda, eta))?;
            cleaned_eigenvalue(lambda, g, q)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trace_rescaled = false;
    if params.trace_preserve {
        let total: f64 = cleaned.iter().sum();
        if total > 0.0 {
            let factor = eigensystem.trace() / total;
            cleaned.iter_mut().for_each(|v| *v *= factor);
            trace_rescaled = true;
        }
    }
    Ok(CleanedSpectrum {
        cleaned,
        eta: Some(eta),
        alpha,
        q: Some(q),
        trace_rescaled,
    })
}

/// `U diag(cleaned) U'`.
pub fn assemble(eigensystem: &EigenSystem, spectrum: &CleanedSpectrum) -> Result<SymmetricMatrix> {
    eigensystem.assemble(&spectrum.cleaned)
}

/// Frobenius errors of the three estimators against a known `Sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub frob_error_empirical: f64,
    pub frob_error_cleaned: f64,
    pub frob_error_oracle: f64,
    /// `|cleaned_k - u_k' Sigma u_k|`.
    pub per_eigenvalue_gap: Vec<f64>,
    /// `|lambda_k - u_k' Sigma u_k|`, the same gap for the raw spectrum.
    pub raw_eigenvalue_gap: Vec<f64>,
    /// Index ranges of numerically repeated eigenvalues; the cleaning formula
    /// is applied pointwise inside them.
    pub clusters: Vec<(usize, usize)>,
}

impl EstimatorReport {
    pub fn mean_gap_cleaned(&self) -> f64 {
        mean(&self.per_eigenvalue_gap)
    }

    pub fn mean_gap_raw(&self) -> f64 {
        mean(&self.raw_eigenvalue_gap)
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn report(
    sigma: &SymmetricMatrix,
    eigensystem: &EigenSystem,
    cleaned: &CleanedSpectrum,
) -> Result<EstimatorReport> {
    check_dim(eigensystem.dim(), cleaned.len())?;
    let oracle = oracle_rie(eigensystem, sigma)?;
    let error =
        |spectrum: &[f64]| -> Result<f64> { Ok(eigensystem.assemble(spectrum)?.minus(sigma)?.frobenius_norm()) };
    let gaps = |spectrum: &[f64]| -> Vec<f64> {
        spectrum
            .iter()
            .zip(&oracle.cleaned)
            .map(|(a, b)| (a - b).abs())
            .collect()
    };
    Ok(EstimatorReport {
        frob_error_empirical: error(eigensystem.values())?,
        frob_error_cleaned: error(&cleaned.cleaned)?,
        frob_error_oracle: error(&oracle.cleaned)?,
        per_eigenvalue_gap: gaps(&cleaned.cleaned),
        raw_eigenvalue_gap: gaps(eigensystem.values()),
        clusters: eigensystem.clusters(CLUSTER_TOLERANCE),
    })
}
