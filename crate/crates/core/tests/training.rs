//! End-to-end training on the synthetic environments.

use irm_core::diagnostics::theorem1_leakage;
use irm_core::envgen::{gen_unit_test, shuffle_spurious, Example, SemSpec, Split, UnitTestConfig};
use irm_core::error::Error;
use irm_core::trainers::{evaluate, train, train_on_moments, Method, TrainConfig};

fn unit_envs(example: Example, split: Split, seed: u64) -> Vec<irm_core::envgen::EnvironmentData> {
    let cfg = UnitTestConfig {
        n_train: 2_000,
        n_test: 2_000,
        ..UnitTestConfig::for_example(example)
    };
    (0..cfg.n_env)
        .map(|e| gen_unit_test(example, &cfg, e, split, seed).unwrap())
        .collect()
}

#[test]
fn irmv2_recovers_the_invariant_direction_on_population_moments() {
    let spec = SemSpec::default_with_seed(0);
    let moments = spec.population_moments_all().unwrap();
    let cfg = TrainConfig {
        lambda: 300.0,
        learning_rate: 3e-3,
        seed: 4,
        ..TrainConfig::new(Method::Irmv2)
    };
    let r = train_on_moments(&cfg, &moments).unwrap();
    let leak = theorem1_leakage(&r.theta_final, &spec).unwrap();
    assert!(leak < 0.05, "leakage {leak}");
    let erm = train_on_moments(&TrainConfig { lambda: 0.0, ..cfg }, &moments).unwrap();
    assert!(theorem1_leakage(&erm.theta_final, &spec).unwrap() > leak);
}

#[test]
fn oracle_beats_erm_on_the_first_example() {
    let train_envs = unit_envs(Example::Example1, Split::Train, 5);
    let shuffled: Vec<_> = train_envs
        .iter()
        .enumerate()
        .map(|(e, d)| shuffle_spurious(d, 100 + e as u64).unwrap())
        .collect();
    let test = &unit_envs(Example::Example1, Split::Test, 5)[0];
    let erm = train(&TrainConfig::new(Method::Erm), &train_envs).unwrap();
    let oracle = train(&TrainConfig::new(Method::Oracle), &shuffled).unwrap();
    let (e, o) = (
        evaluate(&erm.theta_final, &erm.w_final, test).unwrap(),
        evaluate(&oracle.theta_final, &oracle.w_final, test).unwrap(),
    );
    assert!(o < 0.2 && e > 3.0 * o, "oracle {o}, erm {e}");
}

#[test]
fn training_is_deterministic() {
    let envs = unit_envs(Example::Example2, Split::Train, 6);
    let cfg = TrainConfig {
        d_phi: 3,
        steps: 200,
        seed: 9,
        ..TrainConfig::new(Method::Irmv2)
    };
    let (a, b) = (train(&cfg, &envs).unwrap(), train(&cfg, &envs).unwrap());
    assert_eq!(a.theta_final, b.theta_final);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn huge_step_reports_divergence() {
    let envs = unit_envs(Example::Example1, Split::Train, 7);
    let cfg = TrainConfig {
        learning_rate: 50.0,
        ..TrainConfig::new(Method::Erm)
    };
    match train(&cfg, &envs) {
        Err(Error::Diverged { step, .. }) => assert!(step < cfg.steps),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.trace.len())),
    }
}

#[test]
fn result_serializes_to_json() {
    let envs = unit_envs(Example::Example3, Split::Train, 8);
    let cfg = TrainConfig {
        steps: 20,
        learning_rate: 1e-3,
        grad_check_every: Some(10),
        ..TrainConfig::new(Method::Irmv1)
    };
    let r = train(&cfg, &envs).unwrap();
    assert_eq!(r.grad_checks.len(), 2);
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["trace"].as_array().unwrap().len(), 20);
    assert_eq!(v["config"]["method"], "IRMv1");
    let back: irm_core::trainers::TrainConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(back, cfg);
}
