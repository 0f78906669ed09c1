use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rie_core::estimators::{assemble, center_rows, empirical_covariance, lp_clean_with};
use rie_core::io::{format_value, read_matrix_csv, write_matrix_csv};
use rie_core::simulation::{make_sigma, sample_gaussian};
use rie_core::transforms::{stieltjes_g, stieltjes_invert};
use rie_core::{eig_sym, CleaningParams, EigenSystem};
use serde::Serialize;

use crate::args::{CleanArgs, Orientation, SimulateArgs, SpectrumArgs};

#[derive(Debug)]
pub enum CliError {
    Core(rie_core::Error),
    Usage(String),
    Write { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Core(e) => e.fmt(f),
            Self::Usage(msg) => f.write_str(msg),
            Self::Write { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl From<rie_core::Error> for CliError {
    fn from(e: rie_core::Error) -> Self {
        Self::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn output_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> CliResult<()> {
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(wrap)?);
    write(&mut out).and_then(|_| out.flush()).map_err(wrap)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")
    })
}

fn load_data(path: &Path, orientation: &Orientation) -> CliResult<DMatrix<f64>> {
    let mut data = read_matrix_csv(path)?;
    if orientation.transpose {
        data = data.transpose();
    }
    if orientation.center {
        center_rows(&mut data);
    }
    let (n, t) = data.shape();
    if n > t {
        eprintln!("warning: more variables ({n}) than observations ({t}); the sample covariance is singular");
    }
    Ok(data)
}

fn spectrum_of(data: &DMatrix<f64>) -> CliResult<EigenSystem> {
    Ok(eig_sym(&empirical_covariance(data)?)?.into_psd()?)
}

/// Contents of `report.json` written by `rie clean`.
#[derive(Debug, Serialize)]
pub struct CleanReport {
    pub n: usize,
    #[serde(rename = "T")]
    pub t_samples: usize,
    pub q: f64,
    pub eta: f64,
    /// Absent when `--eta` was given.
    pub alpha: Option<f64>,
    pub eigenvalues: Vec<f64>,
    pub cleaned_eigenvalues: Vec<f64>,
    pub trace_before: f64,
    pub trace_after: f64,
}

pub fn clean(args: &CleanArgs) -> CliResult<()> {
    let params = CleaningParams {
        alpha: args.alpha,
        eta: args.eta,
        q: args.q,
        trace_preserve: args.trace_preserve,
    };
    params.validate()?;
    let data = load_data(&args.input, &args.orientation)?;
    let (n, t) = data.shape();
    let eig = spectrum_of(&data)?;
    let cleaned = lp_clean_with(&eig, t, &params)?;
    let estimate = assemble(&eig, &cleaned)?;

    output_dir(&args.out)?;
    write_matrix_csv(&args.out.join("cleaned_covariance.csv"), estimate.as_matrix())?;
    let report = CleanReport {
        n,
        t_samples: t,
        q: cleaned.q.unwrap_or(n as f64 / t as f64),
        eta: cleaned.eta.unwrap_or(f64::NAN),
        alpha: cleaned.alpha,
        eigenvalues: eig.values().to_vec(),
        trace_before: eig.trace(),
        trace_after: cleaned.cleaned.iter().sum(),
        cleaned_eigenvalues: cleaned.cleaned,
    };
    write_json(&args.out.join("report.json"), &report)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let sigma = make_sigma(&args.model)?;
    let data = sample_gaussian(&sigma, args.samples, args.seed.seed)?;
    output_dir(&args.out)?;
    write_matrix_csv(&args.out.join("data.csv"), &data)?;
    write_matrix_csv(&args.out.join("sigma.csv"), sigma.as_matrix())?;
    Ok(())
}

pub fn spectrum(args: &SpectrumArgs) -> CliResult<()> {
    if let Some(eta) = args.eta {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(CliError::Usage(format!("--eta must be positive, got {eta}")));
        }
    }
    let data = match (&args.input, &args.model) {
        (Some(path), _) => load_data(path, &args.orientation)?,
        (None, Some(model)) => {
            let sigma = make_sigma(model)?;
            let t = args.samples.unwrap_or(2 * sigma.dim());
            if t == 0 {
                return Err(CliError::Usage("--samples must be positive".into()));
            }
            sample_gaussian(&sigma, t, args.seed.seed)?
        }
        (None, None) => return Err(CliError::Usage("either --input or --model is required".into())),
    };
    let t = data.ncols();
    let eig = spectrum_of(&data)?;
    let eta = args.eta.unwrap_or((t as f64).powf(-0.5));
    let grid = stieltjes_invert(
        |z| stieltjes_g(&eig, t, z).expect("off-axis resolvent"),
        &args.grid.points(),
        eta,
    )?;

    output_dir(&args.out)?;
    write_text(&args.out.join("density.csv"), |out| {
        for (x, d) in grid.grid.iter().zip(&grid.density) {
            writeln!(out, "{},{}", format_value(*x), format_value(*d))?;
        }
        Ok(())
    })?;
    write_text(&args.out.join("eigenvalues.csv"), |out| {
        for v in eig.values() {
            writeln!(out, "{}", format_value(*v))?;
        }
        Ok(())
    })
}
