use std::io::Write;

use rie_core::simulation::{
    convergence_study, make_sigma, random_covariance, trial_rng, verify_concentration_suite, verify_identities,
    verify_lemma_bounds, verify_stein, verify_stein_matrix, Experiment, MatrixFunction, SteinFunction,
    ONE_PLUS_H_FLOOR,
};
use rie_core::{Complex64, CovarianceModel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Suite, VerifyArgs};
use crate::commands::{output_dir, write_json, write_text, CliError, CliResult};

const THEOREM1_TOLERANCE: f64 = 0.05;
const IDENTITY_MAX_DIM: usize = 50;
const STEIN_MAX_DIM: usize = 3;

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
}

fn check(name: &'static str, pass: bool) -> Check {
    Check { name, pass }
}

#[derive(Debug, Serialize)]
struct SuiteSummary {
    suite: &'static str,
    pass: bool,
    checks: Vec<Check>,
    details: Value,
}

impl SuiteSummary {
    fn new(suite: &'static str, checks: Vec<Check>, details: Value) -> Self {
        Self {
            suite,
            pass: checks.iter().all(|c| c.pass),
            checks,
            details,
        }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    suite: &'static str,
    seed: u64,
    pass: bool,
    suites: Vec<SuiteSummary>,
}

/// One line of `trials.jsonl`.
#[derive(Serialize)]
struct Line<'a, T: Serialize> {
    suite: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

struct Context {
    seed: u64,
    jobs: usize,
    trials: Option<usize>,
    model: Option<CovarianceModel>,
    samples: Option<usize>,
    lines: Vec<String>,
}

impl Context {
    fn push<T: Serialize>(&mut self, suite: &str, record: &T) -> CliResult<()> {
        let line = serde_json::to_string(&Line { suite, record })
            .map_err(|e| CliError::Usage(format!("cannot serialize {suite} record: {e}")))?;
        self.lines.push(line);
        Ok(())
    }

    fn trials(&self, default: usize) -> CliResult<usize> {
        match self.trials {
            Some(0) => Err(CliError::Usage("--trials must be positive".into())),
            Some(n) => Ok(n),
            None => Ok(default),
        }
    }

    fn experiment(&self, default: CovarianceModel) -> CliResult<(CovarianceModel, Experiment)> {
        let model = self.model.clone().unwrap_or(default);
        let n = make_sigma(&model)?.dim();
        let t = self.samples.unwrap_or(2 * n);
        Ok((model.clone(), Experiment::new(&model, t)?))
    }
}

/// Runs the requested suites; returns whether every check passed.
pub fn run(args: &VerifyArgs) -> CliResult<bool> {
    let jobs = match args.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be positive".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let mut ctx = Context {
        seed: args.seed.seed,
        jobs,
        trials: args.trials,
        model: args.model.clone(),
        samples: args.samples,
        lines: Vec::new(),
    };
    let suites = match args.suite {
        Suite::All => vec![
            Suite::Identities,
            Suite::Theorem1,
            Suite::Lemma,
            Suite::Stein,
            Suite::Concentration,
        ],
        one => vec![one],
    };
    let mut summaries = Vec::new();
    for suite in suites {
        let summary = match suite {
            Suite::Theorem1 => theorem1(&mut ctx)?,
            Suite::Lemma => lemma(&mut ctx)?,
            Suite::Stein => stein(&mut ctx)?,
            Suite::Concentration => concentration(&mut ctx)?,
            Suite::Identities => identities(&mut ctx)?,
            Suite::All => unreachable!(),
        };
        let tag = if summary.pass { "PASS" } else { "FAIL" };
        eprintln!("[{tag}] {}", summary.suite);
        summaries.push(summary);
    }
    let summary = Summary {
        suite: args.suite.name(),
        seed: ctx.seed,
        pass: summaries.iter().all(|s| s.pass),
        suites: summaries,
    };

    output_dir(&args.out)?;
    write_text(&args.out.join("trials.jsonl"), |out| {
        for line in &ctx.lines {
            writeln!(out, "{line}")?;
        }
        Ok(())
    })?;
    write_json(&args.out.join("summary.json"), &summary)?;
    Ok(summary.pass)
}

fn identities(ctx: &mut Context) -> CliResult<SuiteSummary> {
    let instances = verify_identities(ctx.trials(100)?, IDENTITY_MAX_DIM, ctx.seed, ctx.jobs)?;
    for instance in &instances {
        ctx.push("identities", instance)?;
    }
    let worst = instances.iter().map(|i| i.max_identity_residual).fold(0.0, f64::max);
    let violations: usize = instances.iter().map(|i| i.imh_violations).sum();
    Ok(SuiteSummary::new(
        "identities",
        vec![
            check("identity_residual", instances.iter().all(|i| i.identity_ok)),
            check("imh_lower_bound", violations == 0),
        ],
        json!({
            "instances": instances.len(),
            "max_identity_residual": worst,
            "imh_violations": violations,
        }),
    ))
}

/// Sizes n/8, n/4, n/2, n for resizable models, otherwise just n.
fn ladder(model: &CovarianceModel, n: usize) -> Vec<usize> {
    if model.with_dim(n).is_err() {
        return vec![n];
    }
    let mut sizes: Vec<usize> = [8, 4, 2, 1].iter().map(|d| (n / d).max(1)).collect();
    sizes.dedup();
    sizes
}

fn theorem1(ctx: &mut Context) -> CliResult<SuiteSummary> {
    let (model, experiment) = ctx.experiment(CovarianceModel::Identity { dim: 400 })?;
    let n = experiment.dim();
    let ratio = experiment.t_samples as f64 / n as f64;
    let (study, reports) = convergence_study(
        &model,
        &ladder(&model, n),
        ratio,
        Complex64::new(1.0, 0.5),
        ctx.trials(50)?,
        ctx.seed,
        ctx.jobs,
    )?;
    for report in &reports {
        ctx.push("theorem1", report)?;
    }
    let final_median = study.final_theorem1_median();
    let min_one_plus_h = study
        .points
        .iter()
        .map(|p| p.min_one_plus_h)
        .fold(f64::INFINITY, f64::min);
    Ok(SuiteSummary::new(
        "theorem1",
        vec![
            check("median_residual_decreasing", study.theorem1_monotone()),
            check("final_median_below_tolerance", final_median < THEOREM1_TOLERANCE),
            check("imh_lower_bound", study.points.iter().all(|p| p.imh_violations == 0)),
            check("one_plus_h_floor", min_one_plus_h > ONE_PLUS_H_FLOOR),
        ],
        json!({
            "study": study,
            "tolerance": THEOREM1_TOLERANCE,
            "relation_median_decreasing": study.relation_monotone(),
        }),
    ))
}

fn lemma(ctx: &mut Context) -> CliResult<SuiteSummary> {
    let (_, experiment) = ctx.experiment(CovarianceModel::Identity { dim: 100 })?;
    let (summary, records) = verify_lemma_bounds(&experiment, ctx.trials(10_000)?, ctx.seed, ctx.jobs)?;
    for record in &records {
        ctx.push("lemma", record)?;
    }
    Ok(SuiteSummary::new(
        "lemma",
        vec![
            check("trace_mean", summary.trace_mean_ok),
            check("trace_variance", summary.variance_ok),
        ],
        serde_json::to_value(&summary).unwrap_or(Value::Null),
    ))
}

#[derive(Serialize)]
struct SteinRecord<'a, T: Serialize> {
    form: &'static str,
    #[serde(flatten)]
    summary: &'a T,
}

fn stein(ctx: &mut Context) -> CliResult<SuiteSummary> {
    let trials = ctx.trials(100_000)?;
    let mut checks = 0;
    let mut failures = Vec::new();
    for dim in 1..=STEIN_MAX_DIM {
        let sigma = random_covariance(dim, 0.2, &mut trial_rng(ctx.seed, u64::MAX - dim as u64))?;
        for id in SteinFunction::IDS {
            let s = verify_stein(&sigma, &SteinFunction::from_id(id, dim)?, trials, ctx.seed)?;
            checks += 1;
            if !s.pass {
                failures.push(format!("{id}/d={dim}"));
            }
            ctx.push(
                "stein",
                &SteinRecord {
                    form: "scalar",
                    summary: &s,
                },
            )?;
        }
        for id in MatrixFunction::IDS {
            let s = verify_stein_matrix(&sigma, &MatrixFunction::from_id(id, dim)?, trials, ctx.seed)?;
            checks += 1;
            if !s.pass {
                failures.push(format!("matrix {id}/d={dim}"));
            }
            ctx.push(
                "stein",
                &SteinRecord {
                    form: "matrix",
                    summary: &s,
                },
            )?;
        }
    }
    Ok(SuiteSummary::new(
        "stein",
        vec![check("all_identities", failures.is_empty())],
        json!({ "checks": checks, "trials": trials, "failures": failures }),
    ))
}

fn concentration(ctx: &mut Context) -> CliResult<SuiteSummary> {
    let summaries = verify_concentration_suite(ctx.trials(100_000)?, ctx.seed)?;
    for s in &summaries {
        ctx.push("concentration", s)?;
    }
    let failures: Vec<&str> = summaries
        .iter()
        .filter(|s| !s.pass)
        .map(|s| s.function.as_str())
        .collect();
    Ok(SuiteSummary::new(
        "concentration",
        vec![
            check("poincare", summaries.iter().all(|s| s.poincare_ok)),
            check("tails", summaries.iter().all(|s| s.tails.iter().all(|t| t.ok))),
        ],
        json!({ "functions": summaries.len(), "failures": failures }),
    ))
}
