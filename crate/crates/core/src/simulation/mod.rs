//! Ground-truth covariance models, seeded Gaussian sampling and Monte Carlo
//! verifiers.
//!
//! Every trial owns a ChaCha8 generator seeded with the master seed and using
//! the trial index as its stream number, so results do not depend on how
//! trials are scheduled across threads.

mod appendix;
mod theorem;

pub use appendix::*;
pub use theorem::*;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{sym_sqrt, SymmetricMatrix};

/// Multiple of the standard error within which Monte Carlo estimates must agree.
pub const MC_SIGMA_THRESHOLD: f64 = 4.0;

/// Generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `count` independent jobs on a pool of `jobs` threads, keeping results
/// in index order.
pub fn run_parallel<T, F>(count: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

/// Ground-truth covariance families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CovarianceModel {
    Identity {
        dim: usize,
    },
    Diagonal {
        values: Vec<f64>,
    },
    /// `base * I + sum_s strength_s v_s v_s'` with orthonormal `v_s`.
    Spiked {
        dim: usize,
        base: f64,
        strengths: Vec<f64>,
        directions: Vec<Vec<f64>>,
    },
    /// Entries `rho^|i - j|`.
    Toeplitz {
        dim: usize,
        rho: f64,
    },
    FromFile {
        path: PathBuf,
    },
}

impl CovarianceModel {
    /// Spiked model along the first canonical axes.
    pub fn spiked_canonical(dim: usize, base: f64, strengths: Vec<f64>) -> Self {
        let directions = (0..strengths.len())
            .map(|s| {
                let mut v = vec![0.0; dim];
                if s < dim {
                    v[s] = 1.0;
                }
                v
            })
            .collect();
        Self::Spiked {
            dim,
            base,
            strengths,
            directions,
        }
    }

    /// Same family at another dimension. Diagonal values are cycled, spike
    /// directions are re-drawn along canonical axes.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Ok(match self {
            Self::Identity { .. } => Self::Identity { dim },
            Self::Toeplitz { rho, .. } => Self::Toeplitz { dim, rho: *rho },
            Self::Diagonal { values } if !values.is_empty() => Self::Diagonal {
                values: values.iter().copied().cycle().take(dim).collect(),
            },
            Self::Spiked { base, strengths, .. } => Self::spiked_canonical(dim, *base, strengths.clone()),
            other => return Err(Error::InvalidModel(format!("cannot resize model {other}"))),
        })
    }
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        match self {
            Self::Identity { dim } => write!(f, "identity:{dim}"),
            Self::Diagonal { values } => write!(f, "diagonal:{}", join(values)),
            Self::Spiked {
                dim, base, strengths, ..
            } => write!(f, "spiked:{dim}:{base}:{}", join(strengths)),
            Self::Toeplitz { dim, rho } => write!(f, "toeplitz:{rho}:{dim}"),
            Self::FromFile { path } => write!(f, "file:{}", path.display()),
        }
    }
}

impl FromStr for CovarianceModel {
    type Err = Error;

    /// `identity:N`, `diagonal:V1,V2,..`, `toeplitz:RHO:N`,
    /// `spiked:N:BASE:S1,S2,..` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidModel(format!("cannot parse model spec {s:?}"));
        let parse_dim = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        let parse_f = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let parse_list = |v: &str| v.split(',').map(parse_f).collect::<Result<Vec<_>>>();
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split(':').collect();
        match (kind.trim(), parts.as_slice()) {
            ("identity", [n]) => Ok(Self::Identity { dim: parse_dim(n)? }),
            ("diagonal", [values]) => Ok(Self::Diagonal {
                values: parse_list(values)?,
            }),
            ("toeplitz", [rho, n]) => Ok(Self::Toeplitz {
                dim: parse_dim(n)?,
                rho: parse_f(rho)?,
            }),
            ("spiked", [n, base, strengths]) => Ok(Self::spiked_canonical(
                parse_dim(n)?,
                parse_f(base)?,
                parse_list(strengths)?,
            )),
            ("file", _) => Ok(Self::FromFile {
                path: PathBuf::from(rest),
            }),
            _ => Err(bad()),
        }
    }
}

/// Instantiates the model's covariance matrix.
pub fn make_sigma(model: &CovarianceModel) -> Result<SymmetricMatrix> {
    let sigma = match model {
        CovarianceModel::Identity { dim } => SymmetricMatrix::identity(*dim)?,
        CovarianceModel::Diagonal { values } => {
            if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
                return Err(Error::InvalidModel(format!("negative variance {v}")));
            }
            SymmetricMatrix::diagonal(values)?
        }
        CovarianceModel::Toeplitz { dim, rho } => {
            if !(rho.abs() < 1.0) {
                return Err(Error::InvalidModel(format!("toeplitz needs |rho| < 1, got {rho}")));
            }
            SymmetricMatrix::from_upper_fn(*dim, |i, j| rho.powi((j - i) as i32))?
        }
        CovarianceModel::Spiked {
            dim,
            base,
            strengths,
            directions,
        } => spiked_sigma(*dim, *base, strengths, directions)?,
        CovarianceModel::FromFile { path } => {
            let m = crate::io::read_matrix_csv(path)?;
            let sigma = SymmetricMatrix::from_dense(&m)?;
            crate::spectral::eig_sym(&sigma)?.into_psd()?;
            sigma
        }
    };
    if !(sigma.trace() > 0.0) {
        return Err(Error::InvalidModel(format!("{model} has zero trace")));
    }
    Ok(sigma)
}

fn spiked_sigma(dim: usize, base: f64, strengths: &[f64], directions: &[Vec<f64>]) -> Result<SymmetricMatrix> {
    if strengths.len() != directions.len() {
        return Err(Error::InvalidModel(format!(
            "{} spike strengths but {} directions",
            strengths.len(),
            directions.len()
        )));
    }
    if strengths.len() > dim {
        return Err(Error::InvalidModel(format!(
            "{} spikes exceed dimension {dim}",
            strengths.len()
        )));
    }
    if base < 0.0 || strengths.iter().any(|&s| base + s < 0.0) {
        return Err(Error::InvalidModel("spiked covariance would not be PSD".into()));
    }
    for (a, u) in directions.iter().enumerate() {
        if u.len() != dim {
            return Err(Error::InvalidModel(format!(
                "spike direction {a} has length {}",
                u.len()
            )));
        }
        for (b, v) in directions.iter().enumerate().skip(a) {
            let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            if (dot - target).abs() > 1e-8 {
                return Err(Error::InvalidModel(format!(
                    "spike directions {a} and {b} are not orthonormal (dot = {dot})"
                )));
            }
        }
    }
    SymmetricMatrix::from_upper_fn(dim, |i, j| {
        let spikes: f64 = strengths.iter().zip(directions).map(|(s, v)| s * v[i] * v[j]).sum();
        if i == j {
            base + spikes
        } else {
            spikes
        }
    })
}

/// Scale statistics of a ground-truth covariance: the cleaning theory needs
/// `||Sigma||` and `Tr Sigma / n` of the same order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeStats {
    pub operator_norm: f64,
    pub mean_eigenvalue: f64,
    pub ratio: f64,
}

impl RegimeStats {
    pub fn of(sigma: &SymmetricMatrix) -> Self {
        let operator_norm = sigma.operator_norm();
        let mean_eigenvalue = sigma.trace() / sigma.dim() as f64;
        Self {
            operator_norm,
            mean_eigenvalue,
            ratio: operator_norm / mean_eigenvalue,
        }
    }
}

/// Draws `n x T` matrices `Sigma^{1/2} Y` with `Y` i.i.d. standard normal.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    root: SymmetricMatrix,
    /// Set when `Sigma` is diagonal; rows are then scaled instead of multiplied.
    diagonal_root: Option<Vec<f64>>,
}

impl GaussianSampler {
    pub fn new(sigma: &SymmetricMatrix) -> Result<Self> {
        let n = sigma.dim();
        let is_diagonal = (0..n).all(|j| (0..j).all(|i| sigma.get(i, j) == 0.0));
        if is_diagonal {
            let roots = (0..n)
                .map(|i| {
                    let v = sigma.get(i, i);
                    if v < 0.0 {
                        Err(Error::NotPsd { value: v })
                    } else {
                        Ok(v.sqrt())
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Self {
                root: SymmetricMatrix::diagonal(&roots)?,
                diagonal_root: Some(roots),
            })
        } else {
            Ok(Self {
                root: sym_sqrt(sigma)?,
                diagonal_root: None,
            })
        }
    }

    pub fn dim(&self) -> usize {
        self.root.dim()
    }

    pub fn root(&self) -> &SymmetricMatrix {
        &self.root
    }

    /// Standard normals are drawn observation by observation (column-major).
    pub fn sample<R: Rng + ?Sized>(&self, t_samples: usize, rng: &mut R) -> DMatrix<f64> {
        let n = self.dim();
        let draws: Vec<f64> = (0..n * t_samples).map(|_| rng.sample(StandardNormal)).collect();
        let mut y = DMatrix::from_vec(n, t_samples, draws);
        match &self.diagonal_root {
            Some(roots) => {
                for (mut row, &r) in y.row_iter_mut().zip(roots) {
                    row *= r;
                }
                y
            }
            None => self.root.as_matrix() * y,
        }
    }
}

/// Random covariance `A A' / dim + ridge I` with `A` standard Gaussian.
pub fn random_covariance<R: Rng + ?Sized>(dim: usize, ridge: f64, rng: &mut R) -> Result<SymmetricMatrix> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = &a * a.transpose() / dim as f64 + DMatrix::<f64>::identity(dim, dim) * ridge;
    SymmetricMatrix::from_dense(&m)
}

/// One `n x T` Gaussian data matrix with covariance `sigma`, fully determined
/// by `seed`.
pub fn sample_gaussian(sigma: &SymmetricMatrix, t_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = GaussianSampler::new(sigma)?;
    Ok(sampler.sample(t_samples, &mut trial_rng(seed, 0)))
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Whether two Monte Carlo estimates agree within [`MC_SIGMA_THRESHOLD`]
/// combined standard errors. Exact agreement is required when both
/// estimates are noiseless.
/// Agreement of two sides evaluated on the same draws, judged by the
/// standard error of their per-draw difference.
pub(crate) fn paired_agree(lhs: &Moments, rhs: &Moments, diff: &Moments) -> (bool, f64) {
    let combined = diff.std_error();
    let slack = 1e-12 * lhs.mean().abs().max(rhs.mean().abs()).max(1.0);
    let ok = (lhs.mean() - rhs.mean()).abs() <= MC_SIGMA_THRESHOLD * combined + slack;
    (ok, combined)
}

pub(crate) fn mc_agree(a: f64, se_a: f64, b: f64, se_b: f64) -> (bool, f64) {
    let combined = se_a.hypot(se_b);
    let gap = (a - b).abs();
    let slack = 1e-12 * a.abs().max(b.abs()).max(1.0);
    let ok = gap <= MC_SIGMA_THRESHOLD * combined + slack;
    (ok, combined)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_examples() {
        let id = make_sigma(&CovarianceModel::Identity { dim: 3 }).unwrap();
        assert_eq!(id, SymmetricMatrix::identity(3).unwrap());
        let d = make_sigma(&CovarianceModel::Diagonal {
            values: vec![1.0, 2.0, 3.0],
        })
        .unwrap();
        assert_eq!(d, SymmetricMatrix::diagonal(&[1.0, 2.0, 3.0]).unwrap());
        let t = make_sigma(&CovarianceModel::Toeplitz { dim: 2, rho: 0.5 }).unwrap();
        assert_eq!(t.to_rows(), vec![vec![1.0, 0.5], vec![0.5, 1.0]]);
        let es = crate::spectral::eig_sym(&t).unwrap();
        assert!((es.values()[0] - 1.5).abs() < 1e-14 && (es.values()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn model_errors() {
        assert!(make_sigma(&CovarianceModel::Toeplitz { dim: 3, rho: 1.0 }).is_err());
        let skew = CovarianceModel::Spiked {
            dim: 2,
            base: 1.0,
            strengths: vec![1.0, 1.0],
            directions: vec![vec![1.0, 0.0], vec![1.0, 1.0]],
        };
        assert!(matches!(make_sigma(&skew), Err(Error::InvalidModel(_))));
        let missing = CovarianceModel::FromFile {
            path: "/nonexistent/sigma.csv".into(),
        };
        assert!(matches!(make_sigma(&missing), Err(Error::Io { .. })));
    }

    #[test]
    fn spiked_model_contains_spike() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let model = CovarianceModel::Spiked {
            dim: 4,
            base: 1.0,
            strengths: vec![10.0],
            directions: vec![vec![r, 0.0, r, 0.0]],
        };
        let sigma = make_sigma(&model).unwrap();
        let es = crate::spectral::eig_sym(&sigma).unwrap();
        assert!((es.values()[0] - 11.0).abs() < 1e-8);
        assert!(es.values()[1..].iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn model_spec_round_trip() {
        for spec in ["identity:5", "diagonal:1,2.5,3", "toeplitz:0.5:10", "spiked:6:1:10,4"] {
            let model: CovarianceModel = spec.parse().unwrap();
            assert_eq!(model.to_string(), spec);
        }
        assert!("wishart:3".parse::<CovarianceModel>().is_err());
        assert!("identity:x".parse::<CovarianceModel>().is_err());
    }

    #[test]
    fn zero_covariance_samples_zero() {
        let x = sample_gaussian(&SymmetricMatrix::zeros(2).unwrap(), 5, 1).unwrap();
        assert_eq!(x, DMatrix::zeros(2, 5));
    }

    #[test]
    fn sampling_is_deterministic() {
        let sigma = make_sigma(&CovarianceModel::Toeplitz { dim: 3, rho: 0.3 }).unwrap();
        let a = sample_gaussian(&sigma, 7, 42).unwrap();
        let b = sample_gaussian(&sigma, 7, 42).unwrap();
        let c = sample_gaussian(&sigma, 7, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn unit_variance_second_moment() {
        let t = 100_000;
        let x = sample_gaussian(&SymmetricMatrix::identity(1).unwrap(), t, 7).unwrap();
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / t as f64;
        assert!((m2 - 1.0).abs() < 3.0 * (2.0 / t as f64).sqrt());
    }

    #[test]
    fn scaled_variance() {
        let t = 100_000;
        let x = sample_gaussian(&SymmetricMatrix::diagonal(&[4.0]).unwrap(), t, 11).unwrap();
        let mut m = Moments::default();
        x.iter().for_each(|&v| m.push(v));
        // Var of the sample variance of N(0, s^2) is 2 s^4 / (T - 1).
        let se = (2.0 * 16.0 / (t as f64 - 1.0)).sqrt();
        assert!((m.variance() - 4.0).abs() < 3.0 * se);
    }

    #[test]
    fn parallel_results_keep_order() {
        let out = run_parallel(50, 3, |i| Ok(i * i)).unwrap();
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
