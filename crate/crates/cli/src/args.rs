use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rie_core::CovarianceModel;

#[derive(Debug, Parser)]
#[command(name = "rie", version, about = "Rotationally invariant covariance cleaning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean the sample covariance of a data CSV.
    Clean(CleanArgs),
    /// Draw Gaussian samples from a covariance model.
    Simulate(SimulateArgs),
    /// Run a verification suite and write per-trial reports.
    Verify(VerifyArgs),
    /// Smoothed spectral density of a sample covariance on a grid.
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Args)]
pub struct Orientation {
    /// Rows are observations and columns are variables.
    #[arg(long)]
    pub transpose: bool,
    /// Subtract each variable's sample mean. The divisor stays T.
    #[arg(long)]
    pub center: bool,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    #[arg(long, env = "RIE_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Data CSV, one row per variable and one column per observation.
    #[arg(long, short)]
    pub input: PathBuf,
    #[command(flatten)]
    pub orientation: Orientation,
    /// Resolution exponent: eta = T^-alpha.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Fixed resolution, overrides --alpha.
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Aspect ratio override (default n / T).
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Rescale cleaned eigenvalues to keep the trace of the sample covariance.
    #[arg(long)]
    pub trace_preserve: bool,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// identity:N, diagonal:V1,V2,.., toeplitz:RHO:N, spiked:N:BASE:S1,S2,.. or file:PATH
    #[arg(long, short)]
    pub model: CovarianceModel,
    /// Number of observations T.
    #[arg(long, short = 'T')]
    pub samples: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Theorem1,
    Lemma,
    Stein,
    Concentration,
    Identities,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Self::Theorem1 => "theorem1",
            Self::Lemma => "lemma",
            Self::Stein => "stein",
            Self::Concentration => "concentration",
            Self::Identities => "identities",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Covariance model for the theorem1 and lemma suites.
    #[arg(long, short)]
    pub model: Option<CovarianceModel>,
    /// Observations per draw (default 2n).
    #[arg(long, short = 'T')]
    pub samples: Option<usize>,
    /// Trials per suite; each suite has its own default.
    #[arg(long)]
    pub trials: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Worker threads (default: available parallelism).
    #[arg(long, short)]
    pub jobs: Option<usize>,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Data CSV; alternatively sample from --model.
    #[arg(long, short, required_unless_present = "model", conflicts_with = "model")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub orientation: Orientation,
    #[arg(long, short)]
    pub model: Option<CovarianceModel>,
    /// Observations when sampling from --model (default 2n).
    #[arg(long, short = 'T', requires = "model")]
    pub samples: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Evaluation grid as lo:hi:count.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Grid,
    /// Distance from the real axis (default T^-1/2).
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => {
                let step = (self.hi - self.lo) / (n - 1) as f64;
                (0..n)
                    .map(|i| if i + 1 == n { self.hi } else { self.lo + step * i as f64 })
                    .collect()
            }
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(format!("expected lo:hi:count, got {s:?}"));
        };
        let number = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad grid bound {v:?}"));
        let grid = Grid {
            lo: number(lo)?,
            hi: number(hi)?,
            count: count.trim().parse().map_err(|_| format!("bad grid count {count:?}"))?,
        };
        if !grid.lo.is_finite() || !grid.hi.is_finite() {
            return Err("grid bounds must be finite".into());
        }
        if grid.count > 1 && grid.lo >= grid.hi {
            return Err(format!("grid needs lo < hi, got {} and {}", grid.lo, grid.hi));
        }
        Ok(grid)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.count)
    }
}
