//! Rotationally invariant covariance cleaning.
//!
//! Given an `n x T` sample matrix `X`, the empirical covariance `E = X X' / T`
//! keeps its eigenvectors and has each eigenvalue `lambda` replaced by
//!
//! ```text
//! lambda / |1 - q + lambda G(lambda + i eta)|^2,   G(z) = (1/T) Tr (z - E)^{-1},
//! ```
//!
//! with `q = n / T` and `eta = T^{-alpha}`. The crate also ships the oracle
//! estimator (known `Sigma`), resolvent functionals, Stieltjes inversion, and
//! Monte Carlo verifiers for the identities the cleaning formula rests on.
//!
//! ```
//! use rie_core::{estimators, simulation, spectral};
//!
//! let sigma = simulation::make_sigma(&"toeplitz:0.5:20".parse().unwrap()).unwrap();
//! let x = simulation::sample_gaussian(&sigma, 60, 7).unwrap();
//! let e = estimators::empirical_covariance(&x).unwrap();
//! let eig = spectral::eig_sym(&e).unwrap().into_psd().unwrap();
//! let cleaned = estimators::lp_clean(&eig, 60, 0.5, false).unwrap();
//! let estimate = estimators::assemble(&eig, &cleaned).unwrap();
//! assert_eq!(estimate.dim(), 20);
//! ```

pub mod error;
pub mod estimators;
pub mod io;
pub mod simulation;
pub mod spectral;
pub mod transforms;

pub use error::{Error, Result};
pub use estimators::{CleanedSpectrum, CleaningParams, EstimatorReport};
pub use num_complex::Complex64;
pub use simulation::{CovarianceModel, TrialReport};
pub use spectral::{eig_sym, EigenSystem, SymmetricMatrix};
pub use transforms::{ResolventPoint, SignedMeasureGrid};
