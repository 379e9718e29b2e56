//! Experiment configuration and its flat `key = value` file format.
//!
//! Lines are `key = value`; `#` starts a comment. `suite` selects the
//! per-suite defaults and is applied first wherever it appears; the other keys
//! override those defaults in file order. Lists are comma separated.
//!
//! | key | meaning |
//! |-----|---------|
//! | `suite` | `unit_tests`, `sem_theory`, `arjovsky_sweep`, `rosenfeld_sweep`, `figure1` |
//! | `methods` | method names, e.g. `ERM,IRMv2` |
//! | `examples` | unit-test example ids, e.g. `1,2` |
//! | `variants` | `plain`, `scrambled` |
//! | `seeds` | number of seeds `n` (indices `0..n`) |
//! | `seed_list` | explicit seed indices |
//! | `root_seed` | root of every derived seed |
//! | `n_train`, `n_test` | samples per environment |
//! | `steps`, `learning_rate`, `optimizer`, `schedule`, `d_phi`, `lambda0` | trainer settings |
//! | `selection` | `pooled` (pick from `lambda_grid` by pooled validation risk) or `fixed` |
//! | `lambda`, `lambda_grid` | penalty weight for `fixed`, candidates for `pooled` |
//! | `epsilons`, `env_index`, `spec_seed`, `n_mc` | masked-representation sweep |
//! | `c_grid`, `sigma`, `closed_form` | two-feature regression sweep |
//! | `out` | output directory |

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use irm_core::envgen::Example;
use irm_core::trainers::{Method, OptimizerKind, Schedule, TrainConfig};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    UnitTests,
    SemTheory,
    ArjovskySweep,
    RosenfeldSweep,
    Figure1,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::UnitTests => "unit_tests",
            Suite::SemTheory => "sem_theory",
            Suite::ArjovskySweep => "arjovsky_sweep",
            Suite::RosenfeldSweep => "rosenfeld_sweep",
            Suite::Figure1 => "figure1",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "unit_tests" => Ok(Suite::UnitTests),
            "sem_theory" => Ok(Suite::SemTheory),
            "arjovsky_sweep" => Ok(Suite::ArjovskySweep),
            "rosenfeld_sweep" => Ok(Suite::RosenfeldSweep),
            "figure1" => Ok(Suite::Figure1),
            _ => Err(format!("unknown suite '{s}'")),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    /// Inputs rotated by a fixed random orthogonal matrix.
    Scrambled,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Scrambled => "scrambled",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Variant::Plain),
            "scrambled" => Ok(Variant::Scrambled),
            _ => Err(format!("unknown variant '{s}'")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Train every value of `lambda_grid` and keep the one with the lowest
    /// squared-error risk on validation draws pooled over training environments.
    Pooled,
    /// Use `lambda` as given.
    Fixed,
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(Selection::Pooled),
            "fixed" => Ok(Selection::Fixed),
            _ => Err(format!("unknown selection '{s}'")),
        }
    }
}

pub const DEFAULT_SEEDS: u64 = 10;
pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub methods: Vec<Method>,
    pub examples: Vec<Example>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub root_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    pub d_phi: usize,
    pub lambda0: f64,
    pub selection: Selection,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub env_index: usize,
    pub spec_seed: u64,
    pub n_mc: usize,
    pub c_grid: Vec<f64>,
    pub sigma: f64,
    pub closed_form: bool,
    pub out: Option<PathBuf>,
}

/// `0` followed by 61 log-spaced points over `[1e-3, 1e3]`.
pub fn default_c_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..=60).map(|i| 10f64.powf(-3.0 + 0.1 * i as f64)));
    grid
}

impl ExperimentConfig {
    pub fn for_suite(suite: Suite) -> Self {
        let mut cfg = Self {
            suite,
            methods: Method::ALL.to_vec(),
            examples: vec![Example::Example1, Example::Example2, Example::Example3],
            variants: vec![Variant::Plain, Variant::Scrambled],
            seeds: (0..DEFAULT_SEEDS).collect(),
            root_seed: 0,
            n_train: 10_000,
            n_test: 10_000,
            steps: 2000,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Gd,
            schedule: Schedule::Constant,
            d_phi: 3,
            lambda0: 1.0,
            selection: Selection::Pooled,
            lambda: 1.0,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            epsilons: vec![1.0, 2.0, 4.0, 8.0],
            env_index: 0,
            spec_seed: 0,
            n_mc: 100_000,
            c_grid: default_c_grid(),
            sigma: 1.0,
            closed_form: suite != Suite::ArjovskySweep,
            out: None,
        };
        match suite {
            Suite::SemTheory => {
                cfg.methods = vec![Method::Irmv2];
                cfg.selection = Selection::Fixed;
                cfg.lambda = 300.0;
                cfg.learning_rate = 3e-3;
                cfg.d_phi = 1;
            }
            Suite::ArjovskySweep | Suite::RosenfeldSweep | Suite::Figure1 => {
                cfg.methods = vec![];
                cfg.seeds = vec![0];
            }
            Suite::UnitTests => {}
        }
        cfg
    }

    /// Parses the `key = value` format on top of the defaults for its suite.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| BenchError::ConfigLine {
                line: i + 1,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let suite = match pairs.iter().rev().find(|(_, k, _)| k == "suite") {
            Some((line, _, v)) => v.parse().map_err(|msg| BenchError::ConfigLine { line: *line, msg })?,
            None => Suite::UnitTests,
        };
        let mut cfg = Self::for_suite(suite);
        for (line, k, v) in &pairs {
            if k != "suite" {
                cfg.set(k, v)
                    .map_err(|msg| BenchError::ConfigLine { line: *line, msg })?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one setting; `suite` is not accepted here.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn one<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value '{v}' for {key}"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',').map(|s| one(key, s.trim())).collect()
        }
        match key {
            "methods" => self.methods = parse_methods(value)?,
            "examples" => {
                self.examples = list::<u32>(key, value)?
                    .into_iter()
                    .map(|id| Example::from_id(id).map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "variants" => {
                self.variants = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<std::result::Result<_, _>>()?
            }
            "seeds" => self.seeds = (0..one::<u64>(key, value)?).collect(),
            "seed_list" => self.seeds = list(key, value)?,
            "root_seed" => self.root_seed = one(key, value)?,
            "n_train" => self.n_train = one(key, value)?,
            "n_test" => self.n_test = one(key, value)?,
            "steps" => self.steps = one(key, value)?,
            "learning_rate" => self.learning_rate = one(key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "schedule" => self.schedule = value.parse()?,
            "d_phi" => self.d_phi = one(key, value)?,
            "lambda0" => self.lambda0 = one(key, value)?,
            "selection" => self.selection = value.parse()?,
            "lambda" => self.lambda = one(key, value)?,
            "lambda_grid" => self.lambda_grid = list(key, value)?,
            "epsilons" => self.epsilons = list(key, value)?,
            "env_index" => self.env_index = one(key, value)?,
            "spec_seed" => self.spec_seed = one(key, value)?,
            "n_mc" => self.n_mc = one(key, value)?,
            "c_grid" => self.c_grid = list(key, value)?,
            "sigma" => self.sigma = one(key, value)?,
            "closed_form" => self.closed_form = one(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        let trains = matches!(self.suite, Suite::UnitTests | Suite::SemTheory);
        if trains && self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.suite == Suite::UnitTests && (self.examples.is_empty() || self.variants.is_empty()) {
            return bad("examples and variants must not be empty");
        }
        if trains && self.selection == Selection::Pooled && self.suite == Suite::UnitTests {
            if self.lambda_grid.is_empty() {
                return bad("lambda_grid must not be empty for pooled selection");
            }
            if self.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
                return bad("lambda_grid entries must be >= 0");
            }
        }
        if self.n_train == 0 || self.n_test == 0 || self.n_mc == 0 {
            return bad("sample sizes must be >= 1");
        }
        if self.epsilons.iter().any(|e| !(*e >= 1.0)) {
            return bad("epsilons must be >= 1");
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !c.is_finite()) {
            return bad("c_grid must be non-empty and finite");
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if trains {
            self.train_config(self.methods[0], self.lambda, 0).validate()?;
        }
        Ok(())
    }

    /// Trainer settings for one run. For IRMv1A the penalty value goes to
    /// `lambda0`, the offset of its adaptive coefficient.
    pub fn train_config(&self, method: Method, lambda: f64, seed: u64) -> TrainConfig {
        let mut t = TrainConfig::new(method);
        t.lambda = lambda;
        t.lambda0 = if method == Method::Irmv1a { lambda } else { self.lambda0 };
        t.d_phi = self.d_phi;
        t.steps = self.steps;
        t.learning_rate = self.learning_rate;
        t.schedule = self.schedule;
        t.optimizer = self.optimizer;
        t.seed = seed;
        t
    }
}

pub fn parse_methods(value: &str) -> std::result::Result<Vec<Method>, String> {
    let mut out: Vec<Method> = value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}
