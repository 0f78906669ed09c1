//! Comma-separated matrix files.
//!
//! A first row in which no cell parses as a number is taken as a header and
//! skipped. Values are written with 17 significant digits so they read back
//! bit-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn io_error(path: &Path, err: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

/// Reads a dense matrix. Row and column numbers in errors are 1-based and
/// count the header line when present.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_matrix(file).map_err(|e| match e {
        Error::Io { message, .. } => io_error(path, message),
        other => other,
    })
}

pub fn read_matrix<R: std::io::Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::Io {
            path: String::new(),
            message: e.to_string(),
        })?;
        if record.iter().all(|cell| cell.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, usize> = record
            .iter()
            .enumerate()
            .map(|(col, cell)| cell.parse::<f64>().map_err(|_| col))
            .collect();
        match parsed {
            Ok(values) => {
                if let Some(first) = rows.first() {
                    if values.len() != first.len() {
                        return Err(Error::Ragged {
                            row: line + 1,
                            expected: first.len(),
                            found: values.len(),
                        });
                    }
                }
                rows.push(values);
            }
            Err(_) if line == 0 && record.iter().all(|cell| cell.parse::<f64>().is_err()) => continue,
            Err(col) => {
                return Err(Error::Parse {
                    row: line + 1,
                    col: col + 1,
                    cell: record[col].to_string(),
                })
            }
        }
    }
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn write_matrix<W: Write>(mut out: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_matrix(BufWriter::new(file), m).map_err(|e| io_error(path, e))
}

/// 17 significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}
