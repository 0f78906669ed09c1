//! Real symmetric matrices and their eigendecompositions.
//!
//! Everything downstream works on an [`EigenSystem`]: eigenvalues sorted in
//! descending order, eigenvectors stored as orthonormal columns with a fixed
//! sign convention so that results are reproducible run to run.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues of a covariance matrix in `[-PSD_TOLERANCE * scale, 0)` are
/// rounding noise and get clamped to zero; anything lower is rejected.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Relative asymmetry accepted by [`SymmetricMatrix::from_dense`] before the
/// two triangles are averaged.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Coordinates smaller than this are skipped when fixing eigenvector signs.
const SIGN_THRESHOLD: f64 = 1e-12;

/// A real symmetric `n x n` matrix with finite entries, `n >= 1`.
///
/// Symmetry is exact: every constructor writes `a[i][j]` and `a[j][i]` from
/// the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Builds the matrix from its upper triangle; `f(i, j)` is called for `i <= j`.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty);
        }
        let mut inner = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..=j {
                let value = f(i, j);
                if !value.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j, value });
                }
                inner[(i, j)] = value;
                inner[(j, i)] = value;
            }
        }
        Ok(Self { inner })
    }

    /// Wraps a dense matrix, averaging the two triangles.
    ///
    /// Rejects non-square input, non-finite entries, and asymmetry larger than
    /// [`SYMMETRY_TOLERANCE`] relative to the largest entry.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::Empty);
        }
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if let Some((idx, &value)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx % rows,
                col: idx / rows,
                value,
            });
        }
        let scale = m.amax().max(1.0);
        for j in 0..rows {
            for i in 0..j {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::NotSymmetric { row: i, col: j, gap });
                }
            }
        }
        Self::from_upper_fn(rows, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        for row in rows {
            if row.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
        }
        Self::from_dense(&DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_upper_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_upper_fn(dim, |_, _| 0.0)
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_upper_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner.row_iter().map(|row| row.iter().copied().collect()).collect()
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// `sqrt(Tr M M')`.
    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Largest absolute eigenvalue.
    pub fn operator_norm(&self) -> f64 {
        self.inner.clone().symmetric_eigenvalues().amax()
    }

    /// `v' M v`.
    pub fn quadratic_form(&self, v: DVectorView<'_, f64>) -> f64 {
        v.dot(&(&self.inner * v))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_upper_fn(self.dim(), |i, j| factor * self.inner[(i, j)])
    }

    /// Entrywise difference `self - other`.
    pub fn minus(&self, other: &SymmetricMatrix) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Self::from_upper_fn(self.dim(), |i, j| self.inner[(i, j)] - other.inner[(i, j)])
    }

    /// `Q M Q'` for a square `q` of matching size.
    pub fn conjugate(&self, q: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim(), q.nrows())?;
        check_dim(self.dim(), q.ncols())?;
        let product = q * &self.inner * q.transpose();
        Self::from_upper_fn(self.dim(), |i, j| 0.5 * (product[(i, j)] + product[(j, i)]))
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymmetricMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymmetricMatrix> for Vec<Vec<f64>> {
    fn from(m: SymmetricMatrix) -> Self {
        m.to_rows()
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Eigenvalues sorted descending with matching orthonormal eigenvector columns.
///
/// Each eigenvector's first coordinate with magnitude above `1e-12` is
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl EigenSystem {
    /// Builds an eigensystem from explicit parts, sorting by descending
    /// eigenvalue and applying the sign convention.
    ///
    /// `vectors` must have orthonormal columns (within `1e-8`).
    pub fn from_parts(values: Vec<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        check_dim(n, vectors.nrows())?;
        check_dim(n, vectors.ncols())?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k,
                col: k,
                value: values[k],
            });
        }
        let gram = vectors.transpose() * &vectors;
        let off = (gram - DMatrix::<f64>::identity(n, n)).amax();
        if off > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "eigenvector columns are not orthonormal (max |U'U - I| = {off:e})"
            )));
        }
        Ok(Self::sorted(DVector::from_vec(values), vectors))
    }

    /// Eigensystem of `diag(values)` with the canonical basis as eigenvectors.
    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        Self::from_parts(values.to_vec(), DMatrix::identity(values.len(), values.len()))
    }

    fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let n = values.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let sorted_values = DVector::from_iterator(n, order.iter().map(|&k| values[k]));
        let mut sorted_vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut column = vectors.column(src).into_owned();
            if let Some(lead) = column.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
                if *lead < 0.0 {
                    column.neg_mut();
                }
            }
            sorted_vectors.set_column(dst, &column);
        }
        Self {
            values: sorted_values,
            vectors: sorted_vectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvalues, descending.
    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    /// Eigenvectors as columns of an orthogonal matrix.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> DVectorView<'_, f64> {
        self.vectors.column(k)
    }

    pub fn trace(&self) -> f64 {
        self.values.sum()
    }

    pub fn operator_norm(&self) -> f64 {
        self.values.amax()
    }

    /// Treats the source as a covariance matrix: eigenvalues in
    /// `[-PSD_TOLERANCE * max(1, |lambda_1|), 0)` become zero and anything
    /// more negative is rejected.
    pub fn into_psd(mut self) -> Result<Self> {
        let floor = -PSD_TOLERANCE * self.operator_norm().max(1.0);
        for value in self.values.iter_mut() {
            if *value < floor {
                return Err(Error::NotPsd { value: *value });
            }
            if *value < 0.0 {
                *value = 0.0;
            }
        }
        Ok(self)
    }

    /// `U diag(spectrum) U'`.
    pub fn assemble(&self, spectrum: &[f64]) -> Result<SymmetricMatrix> {
        check_dim(self.dim(), spectrum.len())?;
        let mut scaled = self.vectors.clone();
        for (mut column, &value) in scaled.column_iter_mut().zip(spectrum) {
            column *= value;
        }
        let product = scaled * self.vectors.transpose();
        SymmetricMatrix::from_upper_fn(self.dim(), |i, j| 0.5 * (product[(i, j)] + product[(j, i)]))
    }

    /// `U diag(lambda) U'`, the source matrix up to rounding.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.assemble(self.values())
            .expect("spectrum length matches by construction")
    }

    /// `u_k' M u_k` for every eigenvector, the diagonal of `U' M U`.
    pub fn projected_diagonal(&self, m: &SymmetricMatrix) -> Result<Vec<f64>> {
        check_dim(self.dim(), m.dim())?;
        let mu = m.as_matrix() * &self.vectors;
        Ok(self
            .vectors
            .column_iter()
            .zip(mu.column_iter())
            .map(|(u, mu)| u.dot(&mu))
            .collect())
    }

    /// Maximal runs of eigenvalues closer than `tolerance * max(1, |lambda_1|)`
    /// to their neighbour, as half-open index ranges. Singletons are omitted.
    pub fn clusters(&self, tolerance: f64) -> Vec<(usize, usize)> {
        let gap = tolerance * self.operator_norm().max(1.0);
        let values = self.values();
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=values.len() {
            if k == values.len() || values[k - 1] - values[k] > gap {
                if k - start > 1 {
                    out.push((start, k));
                }
                start = k;
            }
        }
        out
    }
}

/// Symmetric eigendecomposition, eigenvalues descending.
pub fn eig_sym(m: &SymmetricMatrix) -> Result<EigenSystem> {
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, 0).ok_or(Error::EigenSolver)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenSolver);
    }
    Ok(EigenSystem::sorted(eig.eigenvalues, eig.eigenvectors))
}

pub fn frobenius_norm(m: &SymmetricMatrix) -> f64 {
    m.frobenius_norm()
}

pub fn operator_norm(m: &SymmetricMatrix) -> f64 {
    m.operator_norm()
}

/// PSD square root `S` with `S S = m`.
pub fn sym_sqrt(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    let eig = eig_sym(m)?.into_psd()?;
    let roots: Vec<f64> = eig.values().iter().map(|v| v.sqrt()).collect();
    eig.assemble(&roots)
}
