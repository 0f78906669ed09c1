//! Gaussian integration by parts and concentration, checked by Monte Carlo.
//!
//! * scalar Stein identity: `E[X_i f(X)] = sum_k Sigma_ik E[d_k f(X)]`
//! * matrix form: `E[X' F(X) X] = Tr(Sigma E[F(X)]) + sum_k (E[Sigma d_k F(X) X])_k`
//! * Poincare: `Var f(X) <= E ||grad f(X)||^2` for standard Gaussian `X`
//! * tails: `P(|f(X) - E f(X)| >= t) <= 2 exp(-t^2 / (2 k^2))` for
//!   `k`-Lipschitz `f`

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{mc_agree, paired_agree, trial_rng, GaussianSampler, Moments, MC_SIGMA_THRESHOLD};
use crate::error::{Error, Result};
use crate::spectral::SymmetricMatrix;

/// Central-difference step, relative to `max(1, |x_k|)`.
pub const FD_STEP: f64 = 1e-5;

/// Scalar test functions with closed-form gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteinFunction {
    /// `a' x`
    Linear(Vec<f64>),
    /// `x' A x`, `A` not necessarily symmetric.
    Quadratic(Vec<Vec<f64>>),
    /// `sin(b' x) + cos(x_0)`
    SmoothBounded(Vec<f64>),
    /// `(c' x)^3 + x_0 x_{d-1}^2`
    Cubic(Vec<f64>),
}

impl SteinFunction {
    pub const IDS: [&'static str; 4] = ["linear", "quadratic", "smooth_bounded", "cubic"];

    /// Registry instance of dimension `dim` with fixed coefficients.
    pub fn from_id(id: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let coeffs = |f: fn(usize) -> f64| (0..dim).map(f).collect::<Vec<_>>();
        match id {
            "linear" => Ok(Self::Linear(coeffs(|k| 1.0 / (k as f64 + 1.0)))),
            "quadratic" => Ok(Self::Quadratic(
                (0..dim)
                    .map(|i| {
                        (0..dim)
                            .map(|j| {
                                if i == j {
                                    1.0
                                } else {
                                    (i as f64 + 1.0) / (j as f64 + 3.0)
                                }
                            })
                            .collect()
                    })
                    .collect(),
            )),
            "smooth_bounded" => Ok(Self::SmoothBounded(coeffs(|k| 0.5 * (k as f64 + 1.0)))),
            "cubic" => Ok(Self::Cubic(coeffs(|k| if k % 2 == 0 { 0.5 } else { -0.25 }))),
            other => Err(Error::InvalidParameter(format!(
                "unknown Stein test function {other:?}"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Linear(_) => "linear",
            Self::Quadratic(_) => "quadratic",
            Self::SmoothBounded(_) => "smooth_bounded",
            Self::Cubic(_) => "cubic",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear(a) | Self::SmoothBounded(a) | Self::Cubic(a) => a.len(),
            Self::Quadratic(a) => a.len(),
        }
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        match self {
            Self::Linear(a) => (dot(a), a.clone()),
            Self::Quadratic(a) => {
                let d = x.len();
                let mut value = 0.0;
                let mut grad = vec![0.0; d];
                for i in 0..d {
                    for j in 0..d {
                        value += x[i] * a[i][j] * x[j];
                        grad[i] += a[i][j] * x[j];
                        grad[j] += a[i][j] * x[i];
                    }
                }
                (value, grad)
            }
            Self::SmoothBounded(b) => {
                let s = dot(b);
                let mut grad: Vec<f64> = b.iter().map(|b| b * s.cos()).collect();
                grad[0] -= x[0].sin();
                (s.sin() + x[0].cos(), grad)
            }
            Self::Cubic(c) => {
                let s = dot(c);
                let last = x.len() - 1;
                let mut grad: Vec<f64> = c.iter().map(|c| 3.0 * s * s * c).collect();
                grad[0] += x[last] * x[last];
                grad[last] += 2.0 * x[0] * x[last];
                (s.powi(3) + x[0] * x[last] * x[last], grad)
            }
        }
    }
}

/// One coordinate `i0` of the scalar identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinComponent {
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub combined_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinSummary {
    pub function: String,
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub components: Vec<SteinComponent>,
    pub pass: bool,
}

fn sample_vectors(sigma: &SymmetricMatrix, trials: usize, seed: u64) -> Result<DMatrix<f64>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    Ok(GaussianSampler::new(sigma)?.sample(trials, &mut trial_rng(seed, 0)))
}

/// Monte Carlo estimates of both sides of the scalar identity for every
/// coordinate, agreeing within 4 standard errors of the per-draw difference.
pub fn verify_stein(sigma: &SymmetricMatrix, f: &SteinFunction, trials: usize, seed: u64) -> Result<SteinSummary> {
    let d = sigma.dim();
    crate::spectral::check_dim(d, f.dim())?;
    let x = sample_vectors(sigma, trials, seed)?;
    let mut lhs = vec![Moments::default(); d];
    let mut rhs = vec![Moments::default(); d];
    let mut diff = vec![Moments::default(); d];
    for column in x.column_iter() {
        let point: Vec<f64> = column.iter().copied().collect();
        let (value, grad) = f.eval(&point);
        for i in 0..d {
            let left = point[i] * value;
            let right: f64 = (0..d).map(|k| sigma.get(i, k) * grad[k]).sum();
            lhs[i].push(left);
            rhs[i].push(right);
            diff[i].push(left - right);
        }
    }
    let components: Vec<SteinComponent> = (0..d)
        .map(|i| {
            let (pass, combined_se) = paired_agree(&lhs[i], &rhs[i], &diff[i]);
            SteinComponent {
                index: i,
                lhs: lhs[i].mean(),
                rhs: rhs[i].mean(),
                se_lhs: lhs[i].std_error(),
                se_rhs: rhs[i].std_error(),
                combined_se,
                pass,
            }
        })
        .collect();
    Ok(SteinSummary {
        function: f.id().to_string(),
        dim: d,
        trials,
        seed,
        pass: components.iter().all(|c| c.pass),
        components,
    })
}

/// Monte Carlo `E[X_i X_j]` (the linear-family left-hand sides) against
/// `Sigma_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentSummary {
    pub estimate: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub pass: bool,
}

pub fn verify_second_moments(sigma: &SymmetricMatrix, trials: usize, seed: u64) -> Result<SecondMomentSummary> {
    let d = sigma.dim();
    let x = sample_vectors(sigma, trials, seed)?;
    let mut moments = vec![vec![Moments::default(); d]; d];
    for column in x.column_iter() {
        for i in 0..d {
            for j in 0..d {
                moments[i][j].push(column[i] * column[j]);
            }
        }
    }
    let mut pass = true;
    for i in 0..d {
        for j in 0..d {
            let (ok, _) = mc_agree(moments[i][j].mean(), moments[i][j].std_error(), sigma.get(i, j), 0.0);
            pass &= ok;
        }
    }
    Ok(SecondMomentSummary {
        estimate: moments.iter().map(|r| r.iter().map(Moments::mean).collect()).collect(),
        std_error: moments
            .iter()
            .map(|r| r.iter().map(Moments::std_error).collect())
            .collect(),
        pass,
    })
}

/// Matrix-valued test functions for the matrix form of the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFunction {
    /// `F(x) = A`.
    Constant(Vec<Vec<f64>>),
    /// `F(x) = (z - x x')^{-1}`, `|Im z| >= 1`.
    Resolvent { dim: usize, z: Complex64 },
    /// `F(x) = exp(-|x|^2 / 2) B`; derivatives by central differences.
    GaussianBump(Vec<Vec<f64>>),
}

/// Resolvent probes must satisfy `|Im z| >= 1`.
pub const MIN_RESOLVENT_IMAG: f64 = 1.0;

impl MatrixFunction {
    pub const IDS: [&'static str; 3] = ["constant", "resolvent", "gaussian_bump"];

    pub fn from_id(id: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let pattern = |scale: f64| -> Vec<Vec<f64>> {
            (0..dim)
                .map(|i| {
                    (0..dim)
                        .map(|j| {
                            if i == j {
                                1.0
                            } else {
                                scale * (i as f64 - j as f64 + 0.5)
                            }
                        })
                        .collect()
                })
                .collect()
        };
        match id {
            "constant" => Ok(Self::Constant(pattern(0.3))),
            "resolvent" => Self::resolvent(dim, Complex64::new(0.0, 2.0)),
            "gaussian_bump" => Ok(Self::GaussianBump(pattern(0.5))),
            other => Err(Error::InvalidParameter(format!(
                "unknown matrix test function {other:?}"
            ))),
        }
    }

    pub fn resolvent(dim: usize, z: Complex64) -> Result<Self> {
        if z.im.abs() < MIN_RESOLVENT_IMAG {
            return Err(Error::InvalidParameter(format!(
                "resolvent probe {z} must satisfy |Im z| >= {MIN_RESOLVENT_IMAG}"
            )));
        }
        Ok(Self::Resolvent { dim, z })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Constant(_) => "constant",
            Self::Resolvent { .. } => "resolvent",
            Self::GaussianBump(_) => "gaussian_bump",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(a) | Self::GaussianBump(a) => a.len(),
            Self::Resolvent { dim, .. } => *dim,
        }
    }

    fn to_complex(a: &[Vec<f64>]) -> DMatrix<Complex64> {
        DMatrix::from_fn(a.len(), a.len(), |i, j| Complex64::new(a[i][j], 0.0))
    }

    pub fn value(&self, x: &DVector<f64>) -> DMatrix<Complex64> {
        match self {
            Self::Constant(a) => Self::to_complex(a),
            Self::Resolvent { z, .. } => {
                // Sherman-Morrison: (z - x x')^{-1} = I/z + x x' / (z (z - x'x)).
                let d = x.len();
                let s = x.norm_squared();
                let coef = (z * (z - s)).inv();
                DMatrix::from_fn(d, d, |i, j| {
                    let diag = if i == j { z.inv() } else { Complex64::new(0.0, 0.0) };
                    diag + coef * (x[i] * x[j])
                })
            }
            Self::GaussianBump(b) => Self::to_complex(b) * Complex64::new((-0.5 * x.norm_squared()).exp(), 0.0),
        }
    }

    /// `d F / d x_k`.
    pub fn derivative(&self, x: &DVector<f64>, k: usize) -> DMatrix<Complex64> {
        let d = x.len();
        match self {
            Self::Constant(_) => DMatrix::zeros(d, d),
            Self::Resolvent { .. } => {
                // d(z - A)^{-1} = (z - A)^{-1} dA (z - A)^{-1} with dA = e_k x' + x e_k'.
                let f = self.value(x);
                let da = DMatrix::from_fn(d, d, |i, j| {
                    let mut v = 0.0;
                    if i == k {
                        v += x[j];
                    }
                    if j == k {
                        v += x[i];
                    }
                    Complex64::new(v, 0.0)
                });
                &f * da * &f
            }
            Self::GaussianBump(_) => self.finite_difference(x, k),
        }
    }

    /// Central difference with step `FD_STEP * max(1, |x_k|)`.
    pub fn finite_difference(&self, x: &DVector<f64>, k: usize) -> DMatrix<Complex64> {
        let h = FD_STEP * x[k].abs().max(1.0);
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        (self.value(&plus) - self.value(&minus)) / Complex64::new(2.0 * h, 0.0)
    }
}

/// Real or imaginary part of the matrix identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSteinPart {
    pub part: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub combined_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSteinSummary {
    pub function: String,
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
    pub parts: Vec<MatrixSteinPart>,
    pub pass: bool,
}

pub fn verify_stein_matrix(
    sigma: &SymmetricMatrix,
    f: &MatrixFunction,
    trials: usize,
    seed: u64,
) -> Result<MatrixSteinSummary> {
    let d = sigma.dim();
    crate::spectral::check_dim(d, f.dim())?;
    if let MatrixFunction::Resolvent { z, .. } = f {
        if z.im.abs() < MIN_RESOLVENT_IMAG {
            return Err(Error::InvalidParameter(format!(
                "resolvent probe {z} too close to the real axis"
            )));
        }
    }
    let sigma_c = sigma.as_matrix().map(|v| Complex64::new(v, 0.0));
    let samples = sample_vectors(sigma, trials, seed)?;
    let mut lhs = [Moments::default(); 2];
    let mut rhs = [Moments::default(); 2];
    let mut diff = [Moments::default(); 2];
    for column in samples.column_iter() {
        let x = column.into_owned();
        let xc = x.map(|v| Complex64::new(v, 0.0));
        let fx = f.value(&x);
        let left = (xc.transpose() * &fx * &xc)[(0, 0)];
        let mut right = (&sigma_c * &fx).trace();
        for k in 0..d {
            let v = &sigma_c * f.derivative(&x, k) * &xc;
            right += v[k];
        }
        lhs[0].push(left.re);
        lhs[1].push(left.im);
        rhs[0].push(right.re);
        rhs[1].push(right.im);
        diff[0].push(left.re - right.re);
        diff[1].push(left.im - right.im);
    }
    let parts: Vec<MatrixSteinPart> = ["re", "im"]
        .iter()
        .enumerate()
        .map(|(p, name)| {
            let (pass, combined_se) = paired_agree(&lhs[p], &rhs[p], &diff[p]);
            MatrixSteinPart {
                part: name.to_string(),
                lhs: lhs[p].mean(),
                rhs: rhs[p].mean(),
                se_lhs: lhs[p].std_error(),
                se_rhs: rhs[p].std_error(),
                combined_se,
                pass,
            }
        })
        .collect();
    Ok(MatrixSteinSummary {
        function: f.id().to_string(),
        dim: d,
        trials,
        seed,
        pass: parts.iter().all(|p| p.pass),
        parts,
    })
}

/// Lipschitz test functions of a standard Gaussian vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzFunction {
    /// `a' x`, constant `|a|`.
    Linear(Vec<f64>),
    /// `max_i x_i`, constant 1.
    MaxCoordinate(usize),
    /// `|x|`, constant 1.
    EuclideanNorm(usize),
    /// `sqrt(1 + x_0^2) - 1`, constant 1.
    SmoothAbs(usize),
    /// Constant function, Lipschitz constant 0.
    Constant(usize),
}

impl LipschitzFunction {
    pub const IDS: [&'static str; 5] = ["linear", "max_coordinate", "euclidean_norm", "smooth_abs", "constant"];

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "linear" => Ok(Self::Linear(vec![1.0, -2.0, 0.5])),
            "max_coordinate" => Ok(Self::MaxCoordinate(10)),
            "euclidean_norm" => Ok(Self::EuclideanNorm(10)),
            "smooth_abs" => Ok(Self::SmoothAbs(3)),
            "constant" => Ok(Self::Constant(3)),
            other => Err(Error::InvalidParameter(format!(
                "unknown Lipschitz test function {other:?}"
            ))),
        }
    }

    pub fn registry() -> Vec<Self> {
        Self::IDS
            .iter()
            .map(|id| Self::from_id(id).expect("registered id"))
            .collect()
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Linear(_) => "linear",
            Self::MaxCoordinate(_) => "max_coordinate",
            Self::EuclideanNorm(_) => "euclidean_norm",
            Self::SmoothAbs(_) => "smooth_abs",
            Self::Constant(_) => "constant",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear(a) => a.len(),
            Self::MaxCoordinate(d) | Self::EuclideanNorm(d) | Self::SmoothAbs(d) | Self::Constant(d) => *d,
        }
    }

    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            Self::Linear(a) => a.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Self::Constant(_) => 0.0,
            _ => 1.0,
        }
    }

    /// Value and squared gradient norm at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, f64) {
        match self {
            Self::Linear(a) => (a.iter().zip(x).map(|(a, x)| a * x).sum(), a.iter().map(|v| v * v).sum()),
            Self::MaxCoordinate(_) => (x.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0),
            Self::EuclideanNorm(_) => (x.iter().map(|v| v * v).sum::<f64>().sqrt(), 1.0),
            Self::SmoothAbs(_) => {
                let r = (1.0 + x[0] * x[0]).sqrt();
                (r - 1.0, x[0] * x[0] / (r * r))
            }
            Self::Constant(_) => (1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
    pub slack: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSummary {
    pub function: String,
    pub dim: usize,
    pub lipschitz: f64,
    pub trials: usize,
    pub seed: u64,
    pub variance: f64,
    pub se_variance: f64,
    pub mean_grad_sq: f64,
    pub se_grad_sq: f64,
    pub poincare_ok: bool,
    pub tails: Vec<TailCheck>,
    pub pass: bool,
}

/// Poincare and sub-Gaussian tail checks for one Lipschitz function.
pub fn verify_concentration(f: &LipschitzFunction, trials: usize, seed: u64) -> Result<ConcentrationSummary> {
    if trials < 2 {
        return Err(Error::InvalidParameter("at least two trials are required".into()));
    }
    let d = f.dim();
    let samples = sample_vectors(&SymmetricMatrix::identity(d)?, trials, seed)?;
    let mut values = Vec::with_capacity(trials);
    let mut value_moments = Moments::default();
    let mut grad = Moments::default();
    for column in samples.column_iter() {
        let point: Vec<f64> = column.iter().copied().collect();
        let (v, g2) = f.eval(&point);
        values.push(v);
        value_moments.push(v);
        grad.push(g2);
    }
    let n = trials as f64;
    let mean = value_moments.mean();
    let variance = value_moments.variance();
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let se_variance = ((m4 - variance * variance).max(0.0) / n).sqrt();
    let poincare_ok = variance <= grad.mean() + MC_SIGMA_THRESHOLD * se_variance.hypot(grad.std_error());

    let k = f.lipschitz_constant();
    let tails: Vec<TailCheck> = if k > 0.0 {
        [1.0, 2.0, 3.0]
            .iter()
            .map(|&mult| {
                let t = mult * k;
                let empirical = values.iter().filter(|v| (*v - mean).abs() >= t).count() as f64 / n;
                let bound = 2.0 * (-t * t / (2.0 * k * k)).exp();
                let p = bound.min(1.0);
                let slack = MC_SIGMA_THRESHOLD * (p * (1.0 - p) / n).sqrt();
                TailCheck {
                    t,
                    empirical,
                    bound,
                    slack,
                    ok: empirical <= bound + slack,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ConcentrationSummary {
        function: f.id().to_string(),
        dim: d,
        lipschitz: k,
        trials,
        seed,
        variance,
        se_variance,
        mean_grad_sq: grad.mean(),
        se_grad_sq: grad.std_error(),
        pass: poincare_ok && tails.iter().all(|t| t.ok),
        poincare_ok,
        tails,
    })
}

/// Runs [`verify_concentration`] on every registered function.
pub fn verify_concentration_suite(trials: usize, seed: u64) -> Result<Vec<ConcentrationSummary>> {
    LipschitzFunction::registry()
        .iter()
        .map(|f| verify_concentration(f, trials, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_difference_gradient(f: &SteinFunction, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let h = 1e-6;
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[k] += h;
                m[k] -= h;
                (f.eval(&p).0 - f.eval(&m).0) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn stein_gradients_match_finite_differences() {
        let x = [0.3, -1.1, 0.7];
        for dim in 1..=3 {
            for id in SteinFunction::IDS {
                let f = SteinFunction::from_id(id, dim).unwrap();
                let (_, grad) = f.eval(&x[..dim]);
                let fd = finite_difference_gradient(&f, &x[..dim]);
                for (a, b) in grad.iter().zip(&fd) {
                    assert!((a - b).abs() < 1e-6, "{id} d={dim}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn unknown_ids_rejected() {
        assert!(SteinFunction::from_id("bessel", 2).is_err());
        assert!(MatrixFunction::from_id("bessel", 2).is_err());
        assert!(LipschitzFunction::from_id("bessel").is_err());
    }

    #[test]
    fn linear_stein_is_second_moment() {
        // d = 1, f(x) = x: both sides estimate sigma^2.
        let sigma = SymmetricMatrix::diagonal(&[2.5]).unwrap();
        let s = verify_stein(&sigma, &SteinFunction::Linear(vec![1.0]), 50_000, 3).unwrap();
        assert!(s.pass);
        assert_eq!(s.components[0].rhs, 2.5);
        assert!((s.components[0].lhs - 2.5).abs() < 0.1);
    }

    #[test]
    fn odd_moment_vanishes() {
        let sigma = SymmetricMatrix::diagonal(&[1.7]).unwrap();
        let f = SteinFunction::Quadratic(vec![vec![1.0]]);
        let s = verify_stein(&sigma, &f, 50_000, 5).unwrap();
        assert!(s.pass);
        assert!(s.components[0].lhs.abs() < 4.0 * s.components[0].se_lhs + 1e-12);
    }

    #[test]
    fn resolvent_derivative_matches_finite_difference() {
        let f = MatrixFunction::resolvent(3, Complex64::new(0.5, 1.5)).unwrap();
        let x = DVector::from_vec(vec![0.4, -1.2, 0.9]);
        for k in 0..3 {
            let analytic = f.derivative(&x, k);
            let fd = f.finite_difference(&x, k);
            assert!((analytic - fd).iter().all(|c| c.norm() < 1e-8));
        }
    }

    #[test]
    fn sherman_morrison_matches_inverse() {
        let z = Complex64::new(0.0, 2.0);
        let f = MatrixFunction::resolvent(2, z).unwrap();
        let x = DVector::from_vec(vec![1.3, -0.4]);
        let a = DMatrix::from_fn(2, 2, |i, j| {
            let id = if i == j { z } else { Complex64::new(0.0, 0.0) };
            id - Complex64::new(x[i] * x[j], 0.0)
        });
        let inv = a.try_inverse().unwrap();
        assert!((inv - f.value(&x)).iter().all(|c| c.norm() < 1e-14));
    }

    #[test]
    fn resolvent_needs_distance_from_axis() {
        assert!(MatrixFunction::resolvent(2, Complex64::new(1.0, 0.5)).is_err());
    }

    #[test]
    fn identity_matrix_function_is_exact_trace() {
        let sigma = SymmetricMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let f = MatrixFunction::Constant(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = verify_stein_matrix(&sigma, &f, 20_000, 1).unwrap();
        assert_eq!(s.parts[0].rhs, 3.0);
        assert_eq!(s.parts[0].se_rhs, 0.0);
        assert!(s.pass);
    }

    #[test]
    fn constant_matrix_matches_closed_form() {
        let sigma = SymmetricMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let a = vec![vec![1.0, 0.5], vec![-0.2, 0.7]];
        let s = verify_stein_matrix(&sigma, &MatrixFunction::Constant(a.clone()), 100_000, 2).unwrap();
        let tr_a_sigma: f64 = (0..2)
            .map(|i| (0..2).map(|j| a[i][j] * sigma.get(j, i)).sum::<f64>())
            .sum();
        assert!((s.parts[0].rhs - tr_a_sigma).abs() < 1e-12);
        assert!(s.pass, "{s:?}");
    }

    #[test]
    fn concentration_linear_equality_case() {
        let f = LipschitzFunction::Linear(vec![1.0, -2.0, 0.5]);
        let s = verify_concentration(&f, 100_000, 8).unwrap();
        assert_eq!(s.mean_grad_sq, 5.25);
        assert!((s.variance - 5.25).abs() < 4.0 * s.se_variance);
        assert!(s.pass);
    }

    #[test]
    fn concentration_constant_function() {
        let s = verify_concentration(&LipschitzFunction::Constant(3), 1000, 8).unwrap();
        assert_eq!(s.variance, 0.0);
        assert!(s.poincare_ok && s.tails.is_empty());
    }

    #[test]
    fn concentration_norm_has_margin() {
        let s = verify_concentration(&LipschitzFunction::EuclideanNorm(10), 100_000, 12).unwrap();
        assert!(s.variance < 1.0 - 10.0 * s.se_variance, "{s:?}");
    }
}
