//! Monte Carlo checks of the resolvent relations and the sample-covariance
//! scale bounds.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{median, run_parallel, trial_rng, GaussianSampler, Moments, RegimeStats, MC_SIGMA_THRESHOLD};
use crate::error::{Error, Result};
use crate::estimators::{empirical_covariance, lp_clean, report, EstimatorReport, DEFAULT_ALPHA};
use crate::spectral::{eig_sym, EigenSystem, SymmetricMatrix};
use crate::transforms::{theorem1_rhs, ResolventPoint};

/// Probes closer to the real axis than this are rejected.
pub const MIN_PROBE_IMAG: f64 = 0.05;

/// Probe shapes in units of `Tr Sigma / n`.
pub const DEFAULT_PROBE_SHAPES: [(f64, f64); 4] = [(1.0, 0.5), (1.0, 0.1), (0.5, 0.5), (2.0, 0.25)];

/// Tolerance for `|H - (z G - q)|`.
pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// Empirical floor for `min |1 + H|` over probes.
pub const ONE_PLUS_H_FLOOR: f64 = 0.01;

/// Default probes scaled to the spectrum of `sigma`.
pub fn default_probes(sigma: &SymmetricMatrix) -> Vec<Complex64> {
    scaled_probes(&DEFAULT_PROBE_SHAPES, sigma.trace() / sigma.dim() as f64)
}

pub fn scaled_probes(shapes: &[(f64, f64)], scale: f64) -> Vec<Complex64> {
    shapes.iter().map(|&(re, im)| Complex64::new(re, im) * scale).collect()
}

/// A ground-truth covariance prepared for repeated sampling.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub label: String,
    pub sigma: SymmetricMatrix,
    pub sampler: GaussianSampler,
    pub regime: RegimeStats,
    pub t_samples: usize,
}

impl Experiment {
    pub fn new(model: &super::CovarianceModel, t_samples: usize) -> Result<Self> {
        let sigma = super::make_sigma(model)?;
        Self::from_sigma(model.to_string(), sigma, t_samples)
    }

    pub fn from_sigma(label: impl Into<String>, sigma: SymmetricMatrix, t_samples: usize) -> Result<Self> {
        if t_samples == 0 {
            return Err(Error::InvalidParameter("sample count T must be positive".into()));
        }
        Ok(Self {
            label: label.into(),
            sampler: GaussianSampler::new(&sigma)?,
            regime: RegimeStats::of(&sigma),
            sigma,
            t_samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn q(&self) -> f64 {
        self.dim() as f64 / self.t_samples as f64
    }

    /// Sample covariance eigensystem of one seeded draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EigenSystem> {
        let x = self.sampler.sample(self.t_samples, rng);
        eig_sym(&empirical_covariance(&x)?)?.into_psd()
    }
}

/// Per-probe values and residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub z: Complex64,
    pub g: Complex64,
    pub l: Complex64,
    pub h: Complex64,
    /// `|L - (1 - 1/(1 - q + z G))|`.
    pub theorem1_residual: f64,
    /// `|H - (L + L H)|`.
    pub relation_residual: f64,
    /// `|H - (z G - q)|`.
    pub identity_residual: f64,
    pub im_h_abs: f64,
    /// `|eta| (Tr E / T) / (2 x^2 + 2 ||E||^2 + eta^2)`.
    pub im_h_lower_bound: f64,
    pub imh_bound_ok: bool,
    pub one_plus_h_abs: f64,
}

/// One Monte Carlo draw checked at every probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub model: String,
    pub seed: u64,
    pub trial: u64,
    pub n: usize,
    pub t_samples: usize,
    pub q: f64,
    pub probes: Vec<ProbeReport>,
    pub imh_bound_ok: bool,
    pub min_one_plus_h: f64,
    /// `||E|| / (q ||Sigma||)`.
    pub opnorm_ratio: f64,
    /// `Tr E / Tr Sigma`.
    pub trace_ratio: f64,
    pub regime: RegimeStats,
    pub estimator_report: EstimatorReport,
}

impl TrialReport {
    pub fn theorem1_residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.probes.iter().map(|p| p.theorem1_residual)
    }
}

/// `|Im H| >= |eta| (Tr E / T) / (2 x^2 + 2 ||E||^2 + eta^2)` at `z = x + i eta`.
pub fn im_h_lower_bound(z: Complex64, trace_e: f64, opnorm_e: f64, t_samples: usize) -> f64 {
    let (x, eta) = (z.re, z.im);
    eta.abs() * (trace_e / t_samples as f64) / (2.0 * x * x + 2.0 * opnorm_e * opnorm_e + eta * eta)
}

fn check_probes(probes: &[Complex64]) -> Result<()> {
    match probes.iter().find(|z| z.im.abs() < MIN_PROBE_IMAG) {
        Some(z) => Err(Error::InvalidParameter(format!(
            "probe {z} is closer than {MIN_PROBE_IMAG} to the real axis"
        ))),
        None => Ok(()),
    }
}

fn probe_report(es: &EigenSystem, weights: &[f64], t_samples: usize, z: Complex64) -> Result<ProbeReport> {
    let point = ResolventPoint::evaluate_weighted(es, Some(weights), t_samples, z)?;
    let l = point.l.expect("weights supplied");
    let rhs = theorem1_rhs(point.g, z, point.q)?;
    let im_h_abs = point.h.im.abs();
    let bound = im_h_lower_bound(z, es.trace(), es.operator_norm(), t_samples);
    Ok(ProbeReport {
        z,
        g: point.g,
        l,
        h: point.h,
        theorem1_residual: (l - rhs).norm(),
        relation_residual: (point.h - (l + l * point.h)).norm(),
        identity_residual: point.identity_residual(),
        im_h_abs,
        im_h_lower_bound: bound,
        imh_bound_ok: im_h_abs >= bound,
        one_plus_h_abs: (point.h + 1.0).norm(),
    })
}

/// Draws one dataset and records the asymptotic-relation residuals at each
/// probe, the deterministic `Im H` bound, the `|1 + H|` guard, the scale
/// ratios, and the estimator errors at `alpha = 1/2`.
pub fn verify_theorem1(experiment: &Experiment, probes: &[Complex64], seed: u64, trial: u64) -> Result<TrialReport> {
    check_probes(probes)?;
    let es = experiment.draw(&mut trial_rng(seed, trial))?;
    let weights = es.projected_diagonal(&experiment.sigma)?;
    let t = experiment.t_samples;
    let probe_reports = probes
        .iter()
        .map(|&z| probe_report(&es, &weights, t, z))
        .collect::<Result<Vec<_>>>()?;
    let cleaned = lp_clean(&es, t, DEFAULT_ALPHA, false)?;
    let q = experiment.q();
    Ok(TrialReport {
        model: experiment.label.clone(),
        seed,
        trial,
        n: experiment.dim(),
        t_samples: t,
        q,
        imh_bound_ok: probe_reports.iter().all(|p| p.imh_bound_ok),
        min_one_plus_h: probe_reports
            .iter()
            .map(|p| p.one_plus_h_abs)
            .fold(f64::INFINITY, f64::min),
        probes: probe_reports,
        opnorm_ratio: es.operator_norm() / (q * experiment.regime.operator_norm),
        trace_ratio: es.trace() / experiment.sigma.trace(),
        regime: experiment.regime,
        estimator_report: report(&experiment.sigma, &es, &cleaned)?,
    })
}

/// Median residuals at one problem size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub t_samples: usize,
    pub trials: usize,
    /// Median of the first probe's theorem residual.
    pub median_theorem1_residual: f64,
    pub median_relation_residual: f64,
    pub min_one_plus_h: f64,
    pub imh_violations: usize,
}

/// Residual medians along a ladder of sizes with `T = round(t_ratio * n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub model: String,
    pub probe: Complex64,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceStudy {
    pub fn theorem1_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].median_theorem1_residual < w[0].median_theorem1_residual)
    }

    pub fn relation_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].median_relation_residual < w[0].median_relation_residual)
    }

    pub fn final_theorem1_median(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.median_theorem1_residual)
    }
}

/// Convergence study of the resolvent relations. `probe_shape` is scaled by
/// `Tr Sigma / n` at every size. Returns the summary and every trial report.
pub fn convergence_study(
    model: &super::CovarianceModel,
    sizes: &[usize],
    t_ratio: f64,
    probe_shape: Complex64,
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<(ConvergenceStudy, Vec<TrialReport>)> {
    let mut points = Vec::with_capacity(sizes.len());
    let mut all = Vec::new();
    for (level, &n) in sizes.iter().enumerate() {
        let t = ((t_ratio * n as f64).round() as usize).max(1);
        let experiment = Experiment::new(&model.with_dim(n)?, t)?;
        let scale = experiment.regime.mean_eigenvalue;
        let probes = [probe_shape * scale];
        let offset = (level * trials) as u64;
        let reports = run_parallel(trials, jobs, |i| {
            verify_theorem1(&experiment, &probes, seed, offset + i as u64)
        })?;
        let mut theorem: Vec<f64> = reports.iter().map(|r| r.probes[0].theorem1_residual).collect();
        let mut relation: Vec<f64> = reports.iter().map(|r| r.probes[0].relation_residual).collect();
        points.push(ConvergencePoint {
            n,
            t_samples: t,
            trials,
            median_theorem1_residual: median(&mut theorem),
            median_relation_residual: median(&mut relation),
            min_one_plus_h: reports.iter().map(|r| r.min_one_plus_h).fold(f64::INFINITY, f64::min),
            imh_violations: reports.iter().filter(|r| !r.imh_bound_ok).count(),
        });
        all.extend(reports);
    }
    Ok((
        ConvergenceStudy {
            model: model.to_string(),
            probe: probe_shape,
            points,
        },
        all,
    ))
}

/// Scale statistics of the sample covariance across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub model: String,
    pub n: usize,
    pub t_samples: usize,
    pub trials: usize,
    pub mean_trace_ratio: f64,
    pub se_trace_ratio: f64,
    /// Sample variance of `Tr E`.
    pub var_trace: f64,
    /// `2 Tr Sigma^2 / T`.
    pub var_bound: f64,
    /// `||E|| / ||Sigma||`.
    pub mean_opnorm_ratio: f64,
    pub max_opnorm_ratio: f64,
    /// `||E|| / ((1 + q) ||Sigma||)`.
    pub max_opnorm_ratio_one_plus_q: f64,
    pub min_trace_ratio: f64,
    /// Mean of `Tr E / Tr Sigma` within 4 standard errors of 1.
    pub trace_mean_ok: bool,
    /// `var_trace <= 1.5 * var_bound`.
    pub variance_ok: bool,
}

/// Slack on the variance bound for Monte Carlo noise.
pub const VARIANCE_SLACK: f64 = 1.5;

/// Per-trial values behind [`LemmaSummary`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaTrial {
    pub trial: u64,
    pub trace_e: f64,
    pub opnorm_e: f64,
}

pub fn verify_lemma_bounds(
    experiment: &Experiment,
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<(LemmaSummary, Vec<LemmaTrial>)> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let t = experiment.t_samples;
    let records = run_parallel(trials, jobs, |i| {
        let mut rng = trial_rng(seed, i as u64);
        let x = experiment.sampler.sample(t, &mut rng);
        let e = empirical_covariance(&x)?;
        Ok(LemmaTrial {
            trial: i as u64,
            trace_e: e.trace(),
            opnorm_e: e.operator_norm(),
        })
    })?;
    let trace_sigma = experiment.sigma.trace();
    let opnorm_sigma = experiment.regime.operator_norm;
    let sigma2: DMatrix<f64> = experiment.sigma.as_matrix() * experiment.sigma.as_matrix();
    let var_bound = 2.0 * sigma2.trace() / t as f64;

    let mut trace_ratio = Moments::default();
    let mut trace = Moments::default();
    let mut op = Moments::default();
    let mut max_op = 0.0f64;
    let mut min_tr = f64::INFINITY;
    for r in &records {
        trace_ratio.push(r.trace_e / trace_sigma);
        trace.push(r.trace_e);
        op.push(r.opnorm_e / opnorm_sigma);
        max_op = max_op.max(r.opnorm_e / opnorm_sigma);
        min_tr = min_tr.min(r.trace_e / trace_sigma);
    }
    let q = experiment.q();
    let summary = LemmaSummary {
        model: experiment.label.clone(),
        n: experiment.dim(),
        t_samples: t,
        trials,
        mean_trace_ratio: trace_ratio.mean(),
        se_trace_ratio: trace_ratio.std_error(),
        var_trace: trace.variance(),
        var_bound,
        mean_opnorm_ratio: op.mean(),
        max_opnorm_ratio: max_op,
        max_opnorm_ratio_one_plus_q: max_op / (1.0 + q),
        min_trace_ratio: min_tr,
        trace_mean_ok: (trace_ratio.mean() - 1.0).abs() <= MC_SIGMA_THRESHOLD * trace_ratio.std_error(),
        variance_ok: trace.variance() <= VARIANCE_SLACK * var_bound,
    };
    Ok((summary, records))
}

/// Exact-identity and `Im H` bound checks on one random instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityInstance {
    pub instance: u64,
    pub n: usize,
    pub t_samples: usize,
    pub probes: Vec<Complex64>,
    pub max_identity_residual: f64,
    pub imh_violations: usize,
    pub identity_ok: bool,
}

/// Random covariance `A A' / n` (with `A` standard Gaussian) of random size
/// `n <= max_dim`, sampled with a random `T`, checked at the default probes.
pub fn verify_identities_instance(max_dim: usize, seed: u64, instance: u64) -> Result<IdentityInstance> {
    let mut rng = trial_rng(seed, instance);
    let n = rng.random_range(1..=max_dim.max(1));
    let t = rng.random_range(1..=3 * n);
    let sigma = super::random_covariance(n, 0.0, &mut rng)?;
    let sampler = GaussianSampler::new(&sigma)?;
    let x = sampler.sample(t, &mut rng);
    let es = eig_sym(&empirical_covariance(&x)?)?.into_psd()?;
    let probes = default_probes(&sigma);
    let mut max_residual = 0.0f64;
    let mut violations = 0;
    for &z in &probes {
        let point = ResolventPoint::evaluate(&es, None, t, z)?;
        max_residual = max_residual.max(point.identity_residual());
        let bound = im_h_lower_bound(z, es.trace(), es.operator_norm(), t);
        if point.h.im.abs() < bound {
            violations += 1;
        }
    }
    Ok(IdentityInstance {
        instance,
        n,
        t_samples: t,
        probes,
        max_identity_residual: max_residual,
        imh_violations: violations,
        identity_ok: max_residual <= IDENTITY_TOLERANCE,
    })
}

pub fn verify_identities(instances: usize, max_dim: usize, seed: u64, jobs: usize) -> Result<Vec<IdentityInstance>> {
    run_parallel(instances, jobs, |i| verify_identities_instance(max_dim, seed, i as u64))
}
