//! Suite execution. Independent runs go through a rayon pool; results are
//! sorted by record key before they are returned, so the output does not
//! depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use irm_core::diagnostics::{leakage_with_classifier, PFormula};
use irm_core::envgen::{
    gen_sem, gen_unit_test, scramble, shuffle_spurious, EnvironmentData, Example, SemSpec, Split, Task, UnitTestConfig,
};
use irm_core::error::Error as CoreError;
use irm_core::invariance::{pooled_classifier, ProjectedMoments};
use irm_core::rng::{derive_seed, hash_str};
use irm_core::trainers::{evaluate, predict, train, Method, TrainResult};

use crate::config::{ExperimentConfig, Selection, Suite, Variant};
use crate::error::Result;
use crate::record::{sort_records, Metric, RunRecord};
use crate::sweeps::{figure1_points, rosenfeld_sweep, Moments};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub example: String,
    pub variant: Variant,
    pub method: String,
    pub lambda: f64,
    pub candidates: Vec<LambdaCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    /// Pooled validation risk averaged over the seeds that completed.
    pub mean_risk: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutput {
    pub records: Vec<RunRecord>,
    pub selections: Vec<LambdaChoice>,
}

impl SuiteOutput {
    pub fn has_failures(&self) -> bool {
        self.records.iter().any(RunRecord::is_failure)
    }
}

/// Seed shared by every method for the samples of one `(example, seed)`,
/// so that methods are compared on identical data.
pub fn data_seed(cfg: &ExperimentConfig, example: &str, seed_index: u64) -> u64 {
    derive_seed(&[
        cfg.root_seed,
        hash_str(cfg.suite.as_str()),
        hash_str(example),
        hash_str("data"),
        seed_index,
    ])
}

/// Initialization seed of one training run.
pub fn train_seed(cfg: &ExperimentConfig, example: &str, method: Method, seed_index: u64) -> u64 {
    derive_seed(&[
        cfg.root_seed,
        hash_str(cfg.suite.as_str()),
        hash_str(example),
        hash_str(method.name()),
        seed_index,
    ])
}

pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    cfg.validate()?;
    let mut out = match cfg.suite {
        Suite::UnitTests => run_unit_tests(cfg)?,
        Suite::SemTheory => run_sem_theory(cfg)?,
        Suite::ArjovskySweep | Suite::Figure1 => run_arjovsky(cfg)?,
        Suite::RosenfeldSweep => run_rosenfeld(cfg)?,
    };
    sort_records(&mut out.records);
    out.selections
        .sort_by(|a, b| (&a.example, a.variant, &a.method).cmp(&(&b.example, b.variant, &b.method)));
    Ok(out)
}

pub struct UnitData {
    pub train: Vec<EnvironmentData>,
    pub validation: Vec<EnvironmentData>,
    pub test: Vec<EnvironmentData>,
}

/// Training and validation draws (spurious block shuffled for the oracle) and
/// shuffled test draws, all rotated for the scrambled variant.
pub fn unit_data(
    cfg: &ExperimentConfig,
    example: Example,
    variant: Variant,
    oracle: bool,
    seed_index: u64,
) -> Result<UnitData> {
    let ucfg = UnitTestConfig {
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        ..UnitTestConfig::for_example(example)
    };
    let seed = data_seed(cfg, &example.to_string(), seed_index);
    let rotation = derive_seed(&[seed, hash_str("scramble")]);
    let finish = |d: EnvironmentData, e: usize, split: Split| -> Result<EnvironmentData> {
        let d = if oracle && split != Split::Test {
            shuffle_spurious(
                &d,
                derive_seed(&[seed, e as u64, hash_str(split.as_str()), hash_str("oracle")]),
            )?
        } else {
            d
        };
        Ok(match variant {
            Variant::Plain => d,
            Variant::Scrambled => scramble(&d, rotation),
        })
    };
    let split = |s: Split| -> Result<Vec<EnvironmentData>> {
        (0..ucfg.n_env)
            .map(|e| finish(gen_unit_test(example, &ucfg, e, s, seed)?, e, s))
            .collect()
    };
    Ok(UnitData {
        train: split(Split::Train)?,
        validation: split(Split::Validation)?,
        test: split(Split::Test)?,
    })
}

/// Squared-error risk of the trained predictor on all validation draws.
fn pooled_validation_risk(r: &TrainResult, validation: &[EnvironmentData]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for d in validation {
        let pred = predict(&r.theta_final, &r.w_final, d)?;
        sum += (&pred - &d.y).norm_squared();
        n += d.n();
    }
    Ok(sum / n as f64)
}

fn failure(base: &RunRecord, err: &CoreError) -> RunRecord {
    let step = match err {
        CoreError::Diverged { step, .. } => *step as f64,
        _ => 0.0,
    };
    RunRecord {
        metric: Metric::Failed,
        value: step,
        detail: Some(err.to_string()),
        ..base.clone()
    }
}

/// Errors that end one training run without invalidating the suite.
pub fn run_failure(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::Diverged { .. }
            | CoreError::InvalidMatrix(_)
            | CoreError::Degenerate(_)
            | CoreError::DegenerateCoefficient(_)
            | CoreError::NotPsd { .. }
    )
}

/// Outcome of one `(example, variant, method, seed, lambda)` run: pooled
/// validation risk and per-environment test error, or the error that ended it.
type Candidate = std::result::Result<(f64, Vec<f64>), CoreError>;

/// Trains one seed at every lambda in `grid` on shared data.
fn unit_job(
    cfg: &ExperimentConfig,
    example: Example,
    variant: Variant,
    method: Method,
    seed_index: u64,
    grid: &[f64],
) -> Result<Vec<Candidate>> {
    let data = unit_data(cfg, example, variant, method == Method::Oracle, seed_index)?;
    let seed = train_seed(cfg, &example.to_string(), method, seed_index);
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let r = match train(&cfg.train_config(method, lambda, seed), &data.train) {
            Ok(r) => r,
            Err(e) if run_failure(&e) => {
                out.push(Err(e));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let risk = if grid.len() > 1 {
            pooled_validation_risk(&r, &data.validation)?
        } else {
            0.0
        };
        let errors = data
            .test
            .iter()
            .map(|d| evaluate(&r.theta_final, &r.w_final, d))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        out.push(Ok((risk, errors)));
    }
    Ok(out)
}

/// Index of the lambda with the fewest failed seeds, ties broken by the mean
/// validation risk over the seeds that completed.
fn select_lambda(per_seed: &[Vec<Candidate>], grid: &[f64]) -> (usize, Vec<LambdaCandidate>) {
    let stats: Vec<LambdaCandidate> = grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let risks: Vec<f64> = per_seed
                .iter()
                .filter_map(|c| c[i].as_ref().ok().map(|r| r.0))
                .collect();
            LambdaCandidate {
                lambda,
                mean_risk: (!risks.is_empty()).then(|| risks.iter().sum::<f64>() / risks.len() as f64),
                failures: per_seed.len() - risks.len(),
            }
        })
        .collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| {
            let key = |c: &LambdaCandidate| (c.failures, c.mean_risk.unwrap_or(f64::INFINITY));
            let (ka, kb) = (key(&stats[a]), key(&stats[b]));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        })
        .expect("non-empty grid");
    (best, stats)
}

fn run_unit_tests(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let grid_for = |method: Method| -> Vec<f64> {
        if method.penalized() && cfg.selection == Selection::Pooled {
            cfg.lambda_grid.clone()
        } else {
            vec![cfg.lambda]
        }
    };
    let mut jobs = Vec::new();
    for &example in &cfg.examples {
        for &variant in &cfg.variants {
            for &method in &cfg.methods {
                for &seed in &cfg.seeds {
                    jobs.push((example, variant, method, seed));
                }
            }
        }
    }
    let results: Vec<Vec<Candidate>> = jobs
        .par_iter()
        .map(|&(example, variant, method, seed)| unit_job(cfg, example, variant, method, seed, &grid_for(method)))
        .collect::<Result<_>>()?;

    let mut out = SuiteOutput::default();
    let per_group = cfg.seeds.len();
    for (group, chunk) in jobs.chunks(per_group).zip(results.chunks(per_group)) {
        let (example, variant, method, _) = group[0];
        let grid = grid_for(method);
        let (best, candidates) = select_lambda(chunk, &grid);
        let name = example.to_string();
        let metric = if example.task() == Task::Regression {
            Metric::Mse
        } else {
            Metric::ClassError
        };
        for (&(_, _, _, seed), per_lambda) in group.iter().zip(chunk) {
            let record = |env: usize, value: f64| RunRecord {
                suite: cfg.suite,
                example: name.clone(),
                variant,
                env: format!("E{env}"),
                split: Split::Test.as_str().into(),
                method: method.name().into(),
                seed,
                metric,
                value,
                detail: None,
            };
            match &per_lambda[best] {
                Ok((_, errors)) => out
                    .records
                    .extend(errors.iter().enumerate().map(|(e, &v)| record(e, v))),
                Err(err) => out
                    .records
                    .extend((0..UnitTestConfig::for_example(example).n_env).map(|e| failure(&record(e, 0.0), err))),
            }
        }
        if grid.len() > 1 {
            out.selections.push(LambdaChoice {
                example: name,
                variant,
                method: method.name().into(),
                lambda: grid[best],
                candidates,
            });
        }
    }
    Ok(out)
}

fn run_sem_theory(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let spec = SemSpec::default_with_seed(cfg.spec_seed);
    let population = spec.population_moments_all()?;
    let mut jobs = Vec::new();
    for &method in &cfg.methods {
        for &seed in &cfg.seeds {
            jobs.push((method, seed));
        }
    }
    let results: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(method, seed_index)| -> Result<Vec<RunRecord>> {
            let base = RunRecord {
                suite: cfg.suite,
                example: "SEM".into(),
                variant: Variant::Plain,
                env: "all".into(),
                split: "population".into(),
                method: method.name().into(),
                seed: seed_index,
                metric: Metric::Leakage,
                value: 0.0,
                detail: None,
            };
            let dseed = data_seed(cfg, "SEM", seed_index);
            let envs = (0..spec.environments.len())
                .map(|e| gen_sem(&spec, e, cfg.n_train, dseed))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let tcfg = cfg.train_config(method, cfg.lambda, train_seed(cfg, "SEM", method, seed_index));
            let r = match train(&tcfg, &envs) {
                Ok(r) => r,
                Err(e) if run_failure(&e) => return Ok(vec![failure(&base, &e)]),
                Err(e) => return Err(e.into()),
            };
            let theta = &r.theta_final;
            let (w, classifier) = if method.baseline().is_some() {
                (r.w_final.w.clone(), r.w_final.clone())
            } else {
                let w = pooled_classifier(theta, &population, 0.0)?;
                (w.w.clone(), w)
            };
            let mut recs = vec![RunRecord {
                value: leakage_with_classifier(theta, &w, &spec)?,
                ..base.clone()
            }];
            for (e, m) in population.iter().enumerate() {
                let p = ProjectedMoments::new(theta, m)?;
                for (metric, value) in [
                    (Metric::PenaltyV1, p.penalty_irmv1(&classifier.w)?),
                    (Metric::PenaltyV2, p.penalty_irmv2(&classifier.w)?),
                ] {
                    recs.push(RunRecord {
                        env: format!("E{e}"),
                        metric,
                        value,
                        ..base.clone()
                    });
                }
            }
            Ok(recs)
        })
        .collect::<Result<_>>()?;
    Ok(SuiteOutput {
        records: results.into_iter().flatten().collect(),
        selections: vec![],
    })
}

fn run_arjovsky(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let mut records = Vec::new();
    let runs: Vec<(u64, Moments, &str)> = if cfg.closed_form {
        vec![(0, Moments::ClosedForm, "population")]
    } else {
        cfg.seeds
            .iter()
            .map(|&s| {
                let seed = data_seed(cfg, "Arjovsky", s);
                (s, Moments::Sampled { n: cfg.n_mc, seed }, "sample")
            })
            .collect()
    };
    for (seed, moments, split) in runs {
        for p in figure1_points(&cfg.c_grid, cfg.sigma, moments)? {
            for (metric, value) in [
                (Metric::Kappa, p.kappa),
                (Metric::PenaltyV1, 4.0 * p.full),
                (Metric::PenaltyV2, p.half),
            ] {
                // A singular Gram has no finite condition number; the c = 0
                // penalties are still recorded.
                if !value.is_finite() {
                    continue;
                }
                records.push(RunRecord {
                    suite: cfg.suite,
                    example: "Arjovsky".into(),
                    variant: Variant::Plain,
                    env: p.c.to_string(),
                    split: split.into(),
                    method: "none".into(),
                    seed,
                    metric,
                    value,
                    detail: None,
                });
            }
        }
    }
    Ok(SuiteOutput {
        records,
        selections: vec![],
    })
}

fn run_rosenfeld(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    let spec = SemSpec::default_with_seed(cfg.spec_seed);
    let mut records = Vec::new();
    for &s in &cfg.seeds {
        let seed = data_seed(cfg, "MaskedSEM", s);
        for p in rosenfeld_sweep(&spec, cfg.env_index, &cfg.epsilons, PFormula::Unscaled, cfg.n_mc, seed)? {
            for (metric, value) in [
                (Metric::Kappa, p.kappa_empirical),
                (Metric::PenaltyV1, p.penalty_v1),
                (Metric::PenaltyV2, p.penalty_v2),
            ] {
                records.push(RunRecord {
                    suite: cfg.suite,
                    example: "MaskedSEM".into(),
                    variant: Variant::Plain,
                    env: format!("E{}", cfg.env_index),
                    split: p.epsilon.to_string(),
                    method: "none".into(),
                    seed: s,
                    metric,
                    value,
                    detail: None,
                });
            }
        }
    }
    Ok(SuiteOutput {
        records,
        selections: vec![],
    })
}
