//! Resolvent traces of the empirical covariance and Stieltjes inversion.
//!
//! With `E` the empirical covariance of `T` samples, eigenvalues `lambda_k`
//! and eigenvectors `u_k`, and `R(z) = (z - E)^{-1}`:
//!
//! * `G(z) = (1/T) Tr R(z)        = (1/T) sum_k 1 / (z - lambda_k)`
//! * `L(z) = (1/T) Tr R(z) Sigma  = (1/T) sum_k (u_k' Sigma u_k) / (z - lambda_k)`
//! * `H(z) = (1/T) Tr R(z) E      = (1/T) sum_k lambda_k / (z - lambda_k)`
//!
//! All three are normalized by `T`, not by `n`. `H = z G - q` holds exactly
//! since `z R - I = R E`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{EigenSystem, SymmetricMatrix};

/// Minimum distance from a real evaluation point to the spectrum.
pub const POLE_TOLERANCE: f64 = 1e-12;

/// Eigenvalues closer than this are one cluster for [`rn_ratio_oracle`].
pub const CLUSTER_TOLERANCE: f64 = 1e-9;

/// Fraction of the gap to the nearest distinct eigenvalue used as the default
/// half-width of the integration window in [`rn_ratio_oracle`].
pub const DEFAULT_EPSILON_FRACTION: f64 = 0.45;

const THEOREM_DENOMINATOR_FLOOR: f64 = 1e-12;
const CLEANING_DENOMINATOR_FLOOR: f64 = 1e-14;

/// The functionals `G`, `L`, `H` evaluated at one complex point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventPoint {
    pub z: Complex64,
    pub g: Complex64,
    /// Only available when the true covariance is known.
    pub l: Option<Complex64>,
    pub h: Complex64,
    pub q: f64,
    pub t_samples: usize,
}

impl ResolventPoint {
    pub fn evaluate(
        eigensystem: &EigenSystem,
        sigma: Option<&SymmetricMatrix>,
        t_samples: usize,
        z: Complex64,
    ) -> Result<Self> {
        let weights = sigma.map(|s| eigensystem.projected_diagonal(s)).transpose()?;
        Self::evaluate_weighted(eigensystem, weights.as_deref(), t_samples, z)
    }

    /// Same as [`ResolventPoint::evaluate`] with `u_k' Sigma u_k` precomputed.
    pub fn evaluate_weighted(
        eigensystem: &EigenSystem,
        weights: Option<&[f64]>,
        t_samples: usize,
        z: Complex64,
    ) -> Result<Self> {
        check_samples(t_samples)?;
        let values = eigensystem.values();
        check_pole(values, z)?;
        let inv_t = 1.0 / t_samples as f64;
        let mut g = Complex64::new(0.0, 0.0);
        let mut h = Complex64::new(0.0, 0.0);
        let mut l = Complex64::new(0.0, 0.0);
        for (k, &lambda) in values.iter().enumerate() {
            let r = (z - lambda).inv();
            g += r;
            h += r * lambda;
            if let Some(w) = weights {
                l += r * w[k];
            }
        }
        Ok(Self {
            z,
            g: g * inv_t,
            l: weights.map(|_| l * inv_t),
            h: h * inv_t,
            q: values.len() as f64 * inv_t,
            t_samples,
        })
    }

    /// `|L - (1 - 1/(1 - q + z G))|`.
    pub fn theorem1_residual(&self) -> Option<Result<f64>> {
        self.l
            .map(|l| theorem1_rhs(self.g, self.z, self.q).map(|rhs| (l - rhs).norm()))
    }

    /// `|H - (L + L H)|`.
    pub fn relation_residual(&self) -> Option<f64> {
        self.l.map(|l| (self.h - (l + l * self.h)).norm())
    }

    /// `|H - (z G - q)|`, zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        (self.h - (self.z * self.g - self.q)).norm()
    }
}

fn check_samples(t_samples: usize) -> Result<()> {
    if t_samples == 0 {
        Err(Error::InvalidParameter("sample count T must be positive".into()))
    } else {
        Ok(())
    }
}

fn check_pole(values: &[f64], z: Complex64) -> Result<()> {
    if z.im == 0.0 {
        if let Some(&eigenvalue) = values.iter().find(|&&v| (z.re - v).abs() <= POLE_TOLERANCE) {
            return Err(Error::Pole {
                re: z.re,
                im: z.im,
                eigenvalue,
            });
        }
    }
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite evaluation point {z}")));
    }
    Ok(())
}

fn weighted_trace(values: &[f64], weights: impl Fn(usize) -> f64, t_samples: usize, z: Complex64) -> Result<Complex64> {
    check_samples(t_samples)?;
    check_pole(values, z)?;
    let sum: Complex64 = values
        .iter()
        .enumerate()
        .map(|(k, &lambda)| (z - lambda).inv() * weights(k))
        .sum();
    Ok(sum / t_samples as f64)
}

/// `G(z) = (1/T) sum_k 1/(z - lambda_k)`.
pub fn stieltjes_g(eigensystem: &EigenSystem, t_samples: usize, z: Complex64) -> Result<Complex64> {
    weighted_trace(eigensystem.values(), |_| 1.0, t_samples, z)
}

/// `L(z) = (1/T) Tr (z - E)^{-1} Sigma`.
pub fn stieltjes_l(
    eigensystem: &EigenSystem,
    sigma: &SymmetricMatrix,
    t_samples: usize,
    z: Complex64,
) -> Result<Complex64> {
    let weights = eigensystem.projected_diagonal(sigma)?;
    weighted_trace(eigensystem.values(), |k| weights[k], t_samples, z)
}

/// `H(z) = (1/T) Tr (z - E)^{-1} E`.
pub fn h_functional(eigensystem: &EigenSystem, t_samples: usize, z: Complex64) -> Result<Complex64> {
    let values = eigensystem.values();
    weighted_trace(values, |k| values[k], t_samples, z)
}

/// Asymptotic value of `L(z)`: `1 - 1/(1 - q + z g)`.
pub fn theorem1_rhs(g: Complex64, z: Complex64, q: f64) -> Result<Complex64> {
    let denom = 1.0 - q + z * g;
    let modulus = denom.norm();
    if modulus <= THEOREM_DENOMINATOR_FLOOR {
        return Err(Error::Singular { modulus });
    }
    Ok(1.0 - denom.inv())
}

/// Nonlinear shrinkage of one eigenvalue: `lambda / |1 - q + lambda g|^2`,
/// where `g = G(lambda + i eta)`.
pub fn cleaned_eigenvalue(lambda: f64, g_at_lambda: Complex64, q: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let modulus = (1.0 - q + g_at_lambda * lambda).norm();
    if modulus < CLEANING_DENOMINATOR_FLOOR {
        return Err(Error::Singular { modulus });
    }
    Ok(lambda / (modulus * modulus))
}

/// Default window half-width for [`rn_ratio_oracle`] around eigenvalue `k`:
/// 0.45 times the distance to the nearest eigenvalue outside its cluster.
/// Falls back to `0.45 * max(1, |lambda_k|)` when every eigenvalue sits in
/// the same cluster.
pub fn default_epsilon(eigensystem: &EigenSystem, k: usize) -> f64 {
    let values = eigensystem.values();
    let center = values[k];
    values
        .iter()
        .map(|v| (v - center).abs())
        .filter(|&gap| gap > CLUSTER_TOLERANCE)
        .min_by(f64::total_cmp)
        .map(|gap| DEFAULT_EPSILON_FRACTION * gap)
        .unwrap_or(DEFAULT_EPSILON_FRACTION * center.abs().max(1.0))
}

/// Cleaned eigenvalue recovered as a ratio of spectral masses:
/// `int Im L(x + i eta) dx / int Im G(x + i eta) dx` over
/// `[lambda_k - epsilon, lambda_k + epsilon]`.
///
/// Tends to `u_k' Sigma u_k` as `eta -> 0`. Eigenvalues within
/// [`CLUSTER_TOLERANCE`] of `lambda_k` are treated as one cluster, in which
/// case the limit is the cluster average of `u_j' Sigma u_j`.
pub fn rn_ratio_oracle(
    eigensystem: &EigenSystem,
    sigma: &SymmetricMatrix,
    t_samples: usize,
    k: usize,
    epsilon: f64,
    eta: f64,
) -> Result<f64> {
    let weights = eigensystem.projected_diagonal(sigma)?;
    rn_ratio_weighted(eigensystem.values(), &weights, t_samples, k, epsilon, eta)
}

pub(crate) fn rn_ratio_weighted(
    values: &[f64],
    weights: &[f64],
    t_samples: usize,
    k: usize,
    epsilon: f64,
    eta: f64,
) -> Result<f64> {
    check_samples(t_samples)?;
    if k >= values.len() {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue index {k} out of range for dimension {}",
            values.len()
        )));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let center = values[k];
    let (lo, hi) = (center - epsilon, center + epsilon);
    if let Some(&other) = values.iter().find(|&&v| {
        let gap = (v - center).abs();
        gap > CLUSTER_TOLERANCE && gap <= epsilon
    }) {
        return Err(Error::AmbiguousInterval {
            index: k,
            lo,
            hi,
            other,
        });
    }

    // Im 1/(x + i eta - lambda) = -eta / ((x - lambda)^2 + eta^2); the common
    // factor -eta/T cancels in the ratio.
    let eta2 = eta * eta;
    let [num, den] = integrate_refined(lo, hi, |x| {
        let mut acc = [0.0, 0.0];
        for (&lambda, &w) in values.iter().zip(weights) {
            let d = x - lambda;
            let lorentz = 1.0 / (d * d + eta2);
            acc[0] += w * lorentz;
            acc[1] += lorentz;
        }
        acc
    })?;
    Ok(num / den)
}

const QUADRATURE_START_INTERVALS: usize = 2000;
const QUADRATURE_MAX_DOUBLINGS: u32 = 14;
const QUADRATURE_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Composite trapezoid rule on `[lo, hi]` starting from 2000 intervals and
/// halving the step until every component changes by less than `1e-10`
/// relative.
pub(crate) fn integrate_refined<const N: usize>(lo: f64, hi: f64, f: impl Fn(f64) -> [f64; N]) -> Result<[f64; N]> {
    let width = hi - lo;
    let mut intervals = QUADRATURE_START_INTERVALS;
    let mut h = width / intervals as f64;
    let mut sum = [0.0; N];
    let (fa, fb) = (f(lo), f(hi));
    for c in 0..N {
        sum[c] = 0.5 * (fa[c] + fb[c]);
    }
    for i in 1..intervals {
        let fx = f(lo + i as f64 * h);
        for c in 0..N {
            sum[c] += fx[c];
        }
    }
    let mut estimate = sum.map(|s| s * h);
    for _ in 0..QUADRATURE_MAX_DOUBLINGS {
        let half = 0.5 * h;
        for i in 0..intervals {
            let fx = f(lo + half + i as f64 * h);
            for c in 0..N {
                sum[c] += fx[c];
            }
        }
        intervals *= 2;
        h = half;
        let refined = sum.map(|s| s * h);
        let converged =
            (0..N).all(|c| (refined[c] - estimate[c]).abs() <= QUADRATURE_RELATIVE_TOLERANCE * refined[c].abs());
        estimate = refined;
        if converged {
            return Ok(estimate);
        }
    }
    Err(Error::Quadrature { lo, hi, intervals })
}

/// Density `-(1/pi) Im g(x_j + i eta)` sampled on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasureGrid {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub eta: f64,
}

impl SignedMeasureGrid {
    /// Trapezoid integral of the sampled density across the whole grid.
    pub fn total_mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")))
    }
}

/// Smoothed density of the measure whose Stieltjes transform is `transform`.
pub fn stieltjes_invert(
    transform: impl Fn(Complex64) -> Complex64,
    grid: &[f64],
    eta: f64,
) -> Result<SignedMeasureGrid> {
    check_eta(eta)?;
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("grid must be strictly ascending".into()));
    }
    let density = grid
        .iter()
        .map(|&x| -transform(Complex64::new(x, eta)).im / std::f64::consts::PI)
        .collect();
    Ok(SignedMeasureGrid {
        grid: grid.to_vec(),
        density,
        eta,
    })
}

/// Mass that the inverted density at resolution `eta` assigns to `[lo, hi]`,
/// by refined trapezoid quadrature.
pub fn inverted_mass(transform: impl Fn(Complex64) -> Complex64, lo: f64, hi: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
    }
    let [mass] = integrate_refined(lo, hi, |x| {
        [-transform(Complex64::new(x, eta)).im / std::f64::consts::PI]
    })?;
    Ok(mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag(values: &[f64]) -> EigenSystem {
        EigenSystem::from_diagonal(values).unwrap()
    }

    #[test]
    fn g_examples() {
        let g = stieltjes_g(&diag(&[1.0]), 2, c(0.0, 1.0)).unwrap();
        assert!((g - c(-0.25, -0.25)).norm() < 1e-15);
        let g = stieltjes_g(&diag(&[0.0, 0.0]), 2, c(2.0, 0.0)).unwrap();
        assert!((g - c(0.5, 0.0)).norm() < 1e-15);
        let g = stieltjes_g(&diag(&[1.0, 3.0]), 4, c(2.0, 1.0)).unwrap();
        assert!((g - c(0.0, -0.25)).norm() < 1e-15);
    }

    #[test]
    fn g_pole_on_real_axis() {
        let err = stieltjes_g(&diag(&[1.0, 3.0]), 4, c(3.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Pole { eigenvalue, .. } if eigenvalue == 3.0));
        assert!(stieltjes_g(&diag(&[1.0, 3.0]), 4, c(2.0, 0.0)).is_ok());
    }

    #[test]
    fn l_examples() {
        let es = diag(&[2.5, 1.0, 0.3]);
        let z = c(0.7, 0.2);
        let g = stieltjes_g(&es, 5, z).unwrap();
        let l = stieltjes_l(&es, &SymmetricMatrix::identity(3).unwrap(), 5, z).unwrap();
        assert_eq!(g, l);
        let l0 = stieltjes_l(&es, &SymmetricMatrix::zeros(3).unwrap(), 5, z).unwrap();
        assert_eq!(l0, c(0.0, 0.0));
        assert!(matches!(
            stieltjes_l(&es, &SymmetricMatrix::zeros(2).unwrap(), 5, z),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn h_examples() {
        let h = h_functional(&diag(&[1.0]), 2, c(0.0, 1.0)).unwrap();
        assert!((h - c(-0.25, -0.25)).norm() < 1e-15);
        let h = h_functional(&diag(&[0.0, 0.0, 0.0]), 2, c(0.5, 0.5)).unwrap();
        assert_eq!(h, c(0.0, 0.0));
        let es = diag(&[1.0, 3.0]);
        let z = c(2.0, 1.0);
        let h = h_functional(&es, 4, z).unwrap();
        let hand = (c(1.0, 1.0).inv() + c(-1.0, 1.0).inv() * 3.0) / 4.0;
        assert!((h - hand).norm() < 1e-15);
        let g = stieltjes_g(&es, 4, z).unwrap();
        assert!((h - (z * g - 0.5)).norm() < 1e-15);
    }

    #[test]
    fn theorem1_rhs_examples() {
        assert_eq!(theorem1_rhs(c(0.0, 0.0), c(1.0, 1.0), 0.0).unwrap(), c(0.0, 0.0));
        // z g = 1 with q = 1
        assert_eq!(theorem1_rhs(c(0.5, 0.0), c(2.0, 0.0), 1.0).unwrap(), c(0.0, 0.0));
        assert!(matches!(
            theorem1_rhs(c(0.0, 0.0), c(1.0, 0.0), 1.0),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn cleaned_eigenvalue_examples() {
        assert_eq!(cleaned_eigenvalue(0.0, c(3.0, -7.0), 0.4).unwrap(), 0.0);
        assert_eq!(cleaned_eigenvalue(2.0, c(0.0, 0.0), 0.0).unwrap(), 2.0);
        assert!(matches!(
            cleaned_eigenvalue(1.0, c(-1.0, 0.0), 0.0),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn rn_ratio_is_exact_for_identity_sigma() {
        let es = diag(&[3.0, 1.5, 0.2]);
        let sigma = SymmetricMatrix::identity(3).unwrap();
        for eta in [1e-1, 1e-3] {
            let r = rn_ratio_oracle(&es, &sigma, 6, 1, default_epsilon(&es, 1), eta).unwrap();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rn_ratio_single_pole() {
        let es = diag(&[0.8]);
        let sigma = SymmetricMatrix::diagonal(&[2.7]).unwrap();
        for (eps, eta) in [(0.1, 1e-2), (1.0, 1e-5), (0.01, 0.5)] {
            let r = rn_ratio_oracle(&es, &sigma, 1, 0, eps, eta).unwrap();
            assert!((r - 2.7).abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn rn_ratio_rejects_ambiguous_window() {
        let es = diag(&[2.0, 1.0]);
        let sigma = SymmetricMatrix::identity(2).unwrap();
        let err = rn_ratio_oracle(&es, &sigma, 2, 0, 1.5, 1e-3).unwrap_err();
        assert!(matches!(err, Error::AmbiguousInterval { other, .. } if other == 1.0));
    }

    #[test]
    fn rn_ratio_averages_degenerate_cluster() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u = DMatrix::from_row_slice(3, 3, &[r, r, 0.0, r, -r, 0.0, 0.0, 0.0, 1.0]);
        let es = EigenSystem::from_parts(vec![1.0, 1.0, 3.0], u).unwrap();
        let sigma = SymmetricMatrix::diagonal(&[0.5, 1.5, 2.0]).unwrap();
        let w = es.projected_diagonal(&sigma).unwrap();
        let ratio = rn_ratio_oracle(&es, &sigma, 3, 1, default_epsilon(&es, 1), 1e-6).unwrap();
        assert!((ratio - 0.5 * (w[1] + w[2])).abs() < 1e-6);
    }

    #[test]
    fn inversion_of_point_mass() {
        let mass = inverted_mass(|z| z.inv(), -1.0, 1.0, 1e-3).unwrap();
        let closed_form = 2.0 / PI * (1e3f64).atan();
        assert!((mass - closed_form).abs() < 1e-9);
        assert!((closed_form - 0.999363).abs() < 1e-6);
    }

    #[test]
    fn inversion_of_zero_transform() {
        let grid: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let out = stieltjes_invert(|_| c(0.0, 0.0), &grid, 0.1).unwrap();
        assert!(out.density.iter().all(|&d| d == 0.0));
        assert_eq!(out.total_mass(), 0.0);
    }

    #[test]
    fn inversion_of_two_atoms() {
        let g = |z: Complex64| z.inv() * 0.5 + (z - 1.0).inv() * 0.5;
        let mass = inverted_mass(g, -0.4, 0.4, 1e-4).unwrap();
        assert!((mass - 0.5).abs() < 1e-3);
    }

    #[test]
    fn inversion_rejects_bad_input() {
        assert!(stieltjes_invert(|z| z.inv(), &[0.0, 1.0], 0.0).is_err());
        assert!(stieltjes_invert(|z| z.inv(), &[1.0, 0.0], 0.1).is_err());
        assert!(stieltjes_invert(|z| z.inv(), &[], 0.1).unwrap().grid.is_empty());
    }

    #[test]
    fn lorentzian_peak_height() {
        let es = diag(&[1.0]);
        let out = stieltjes_invert(|z| stieltjes_g(&es, 1, z).unwrap(), &[1.0], 1e-2).unwrap();
        assert!((out.density[0] - 1.0 / (PI * 0.01)).abs() < 1e-9);
    }
}
