use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is empty")]
    Empty,

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("matrix is not symmetric: entries ({row}, {col}) and ({col}, {row}) differ by {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("symmetric eigensolver did not converge")]
    EigenSolver,

    #[error("eigenvalue {value:e} is below the PSD tolerance; not a covariance matrix")]
    NotPsd { value: f64 },

    #[error("evaluation point {re}{im:+}i lies on the eigenvalue {eigenvalue}")]
    Pole { re: f64, im: f64, eigenvalue: f64 },

    #[error("denominator |1 - q + z G| = {modulus:e} vanishes")]
    Singular { modulus: f64 },

    #[error("interval [{lo}, {hi}] around eigenvalue #{index} also contains eigenvalue {other}; shrink epsilon")]
    AmbiguousInterval { index: usize, lo: f64, hi: f64, other: f64 },

    #[error("trapezoid quadrature on [{lo}, {hi}] did not converge after {intervals} intervals")]
    Quadrature { lo: f64, hi: f64, intervals: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid covariance model: {0}")]
    InvalidModel(String),

    #[error("non-numeric cell {cell:?} at row {row}, column {col}")]
    Parse { row: usize, col: usize, cell: String },

    #[error("row {row} has {found} columns, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}
