use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use irm_bench::config::parse_methods;
use irm_bench::selfcheck::{duplicated_spec, run_selfcheck};
use irm_bench::suite::{run_failure, train_seed, unit_data};
use irm_bench::sweeps::{figure1_sweep, rosenfeld_sweep, write_curves_csv, write_profiles_csv, Moments};
use irm_bench::{
    aggregate_table, read_records_csv, run_suite, write_records_csv, BenchError, ExperimentConfig, Selection, Suite,
    Variant,
};
use irm_core::diagnostics::{check_nondegeneracy, theorem1_leakage, PFormula};
use irm_core::envgen::{invariant_projection, write_csv, Example, SemSpec, Split};
use irm_core::trainers::{evaluate, train, Method};

#[derive(Parser)]
#[command(
    name = "irmbench",
    version,
    about = "Invariant risk minimization experiments on synthetic environments"
)]
struct Cli {
    /// Root seed for every derived seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, global = true)]
    methods: Option<String>,
    /// Fixed penalty weight (disables grid selection).
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the train, validation and test draws of one example as CSV.
    Gen {
        #[arg(long, default_value_t = 1)]
        example: u32,
        #[arg(long, default_value = "plain")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed_index: u64,
    },
    /// Train one method on one example and report per-environment test error.
    Train {
        #[arg(long, default_value_t = 1)]
        example: u32,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value = "plain")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed_index: u64,
    },
    /// Run a full suite and write records, lambda choices and the table.
    Suite {
        #[arg(long)]
        suite: Option<Suite>,
    },
    /// Penalty curves and kappa over the scale grid of the two-feature example.
    Figure1 {
        #[arg(long)]
        sigma: Option<f64>,
        /// Use this many samples instead of exact moments.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Condition number of the masked representation against its lower bound.
    KappaSweep {
        /// Comma-separated epsilon values.
        #[arg(long)]
        epsilons: Option<String>,
        #[arg(long, default_value = "unscaled")]
        which: PFormula,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        env: Option<usize>,
    },
    /// Non-degeneracy report and spurious leakage on the default SEM spec.
    Diagnose {
        #[arg(long, default_value_t = 0)]
        spec_seed: u64,
        /// Replace the last environment with a copy of the first.
        #[arg(long)]
        duplicate: bool,
    },
    /// Aggregate record CSVs into the mean ± std table.
    Table { files: Vec<PathBuf> },
    /// Run the quick invariant checks.
    Selfcheck,
}

enum Failure {
    Usage(String),
    Runtime(String),
    /// Stdout was closed by the reader, as in `irmbench gen | head`.
    Closed,
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_) | BenchError::ConfigLine { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<irm_core::error::Error> for Failure {
    fn from(e: irm_core::error::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn out(text: &str) -> Result<(), Failure> {
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli, suite: Option<Suite>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_file(path)?;
            if suite.is_some_and(|s| s != cfg.suite) {
                return Err(Failure::Usage(format!(
                    "--suite disagrees with suite = {} in {}",
                    cfg.suite,
                    path.display()
                )));
            }
            cfg
        }
        None => ExperimentConfig::for_suite(suite.unwrap_or(Suite::UnitTests)),
    };
    if let Some(s) = cli.seed {
        cfg.root_seed = s;
    }
    if let Some(m) = &cli.methods {
        cfg.methods = parse_methods(m).map_err(Failure::Usage)?;
    }
    if let Some(l) = cli.lambda {
        cfg.lambda = l;
        cfg.selection = Selection::Fixed;
    }
    if let Some(s) = cli.steps {
        cfg.steps = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `bytes` to `dir/name`, or to stdout without an output directory.
fn emit(dir: Option<&Path>, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            fs::write(d.join(name), bytes)?;
        }
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn example(id: u32) -> Result<Example, Failure> {
    Example::from_id(id).map_err(|e| Failure::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let say = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Gen {
            example: id,
            variant,
            seed_index,
        } => {
            let cfg = load_config(&cli, None)?;
            let ex = example(*id)?;
            let data = unit_data(&cfg, ex, *variant, false, *seed_index)?;
            let mut parts = Vec::new();
            for (split, envs) in [
                (Split::Train, &data.train),
                (Split::Validation, &data.validation),
                (Split::Test, &data.test),
            ] {
                for (e, d) in envs.iter().enumerate() {
                    parts.push((e, split, d));
                }
            }
            let mut buf = Vec::new();
            write_csv(&mut buf, &parts)?;
            emit(cfg.out.as_deref(), &format!("{ex}_{variant}.csv"), &buf)?;
            Ok(true)
        }
        Command::Train {
            example: id,
            method,
            variant,
            seed_index,
        } => {
            let cfg = load_config(&cli, None)?;
            let ex = example(*id)?;
            let data = unit_data(&cfg, ex, *variant, *method == Method::Oracle, *seed_index)?;
            let tcfg = cfg.train_config(
                *method,
                cfg.lambda,
                train_seed(&cfg, &ex.to_string(), *method, *seed_index),
            );
            let result = match train(&tcfg, &data.train) {
                Ok(r) => r,
                Err(e) if run_failure(&e) => {
                    eprintln!("{e}");
                    return Ok(false);
                }
                Err(e) => return Err(e.into()),
            };
            let errors = data
                .test
                .iter()
                .map(|d| evaluate(&result.theta_final, &result.w_final, d))
                .collect::<Result<Vec<_>, _>>()?;
            let summary = json!({
                "example": ex.to_string(),
                "variant": variant.as_str(),
                "method": method.name(),
                "lambda": cfg.lambda,
                "final_loss": result.trace.last().map(|t| t.loss),
                "test_error": errors,
            });
            out(&(serde_json::to_string_pretty(&summary).map_err(BenchError::from)? + "\n"))?;
            if let Some(dir) = cfg.out.as_deref() {
                emit(
                    Some(dir),
                    "train_result.json",
                    &serde_json::to_vec_pretty(&result).map_err(BenchError::from)?,
                )?;
            }
            Ok(true)
        }
        Command::Suite { suite } => {
            let cfg = load_config(&cli, *suite)?;
            say(format!("running {} with {} seed(s)", cfg.suite, cfg.seeds.len()));
            let run = run_suite(&cfg)?;
            let mut csv = Vec::new();
            write_records_csv(&mut csv, &run.records)?;
            let failures: Vec<_> = run.records.iter().filter(|r| r.is_failure()).collect();
            match cfg.out.as_deref() {
                Some(dir) => {
                    emit(Some(dir), "records.csv", &csv)?;
                    emit(
                        Some(dir),
                        "selections.json",
                        &serde_json::to_vec_pretty(&run.selections).map_err(BenchError::from)?,
                    )?;
                    emit(
                        Some(dir),
                        "failures.json",
                        &serde_json::to_vec_pretty(&failures).map_err(BenchError::from)?,
                    )?;
                    if cfg.suite == Suite::UnitTests {
                        let table = aggregate_table(&run.records);
                        emit(Some(dir), "table.txt", table.to_text().as_bytes())?;
                        emit(Some(dir), "table.csv", table.to_csv()?.as_bytes())?;
                        if !cli.quiet {
                            out(&table.to_text())?;
                        }
                    }
                    say(format!("{} records written to {}", run.records.len(), dir.display()));
                }
                None => emit(None, "", &csv)?,
            }
            for f in &failures {
                say(format!(
                    "failed: {} {} {} seed {}: {}",
                    f.example,
                    f.variant,
                    f.method,
                    f.seed,
                    f.detail.as_deref().unwrap_or("")
                ));
            }
            Ok(failures.is_empty())
        }
        Command::Figure1 { sigma, samples } => {
            let cfg = load_config(&cli, Some(Suite::Figure1)).or_else(|_| load_config(&cli, None))?;
            let sigma = sigma.unwrap_or(cfg.sigma);
            let moments = match samples {
                Some(n) => Moments::Sampled {
                    n: *n,
                    seed: cfg.root_seed,
                },
                None => Moments::ClosedForm,
            };
            let values = figure1_sweep(&cfg.c_grid, sigma, moments)?;
            let mut buf = Vec::new();
            write_curves_csv(&mut buf, &values)?;
            emit(cfg.out.as_deref(), "figure1.csv", &buf)?;
            Ok(true)
        }
        Command::KappaSweep {
            epsilons,
            which,
            n,
            env,
        } => {
            let mut cfg = load_config(&cli, Some(Suite::RosenfeldSweep)).or_else(|_| load_config(&cli, None))?;
            if let Some(e) = epsilons {
                cfg.set("epsilons", e).map_err(Failure::Usage)?;
                cfg.validate()?;
            }
            let spec = SemSpec::default_with_seed(cfg.spec_seed);
            let profiles = rosenfeld_sweep(
                &spec,
                env.unwrap_or(cfg.env_index),
                &cfg.epsilons,
                *which,
                n.unwrap_or(cfg.n_mc),
                cfg.root_seed,
            )?;
            let mut buf = Vec::new();
            write_profiles_csv(&mut buf, &profiles)?;
            emit(cfg.out.as_deref(), "kappa_sweep.csv", &buf)?;
            Ok(true)
        }
        Command::Diagnose { spec_seed, duplicate } => {
            let mut cfg = load_config(&cli, Some(Suite::SemTheory)).or_else(|_| load_config(&cli, None))?;
            cfg.spec_seed = *spec_seed;
            let spec = if *duplicate {
                duplicated_spec(*spec_seed)
            } else {
                SemSpec::default_with_seed(*spec_seed)
            };
            let report = check_nondegeneracy(&spec)?;
            let invariant = theorem1_leakage(&invariant_projection(&spec, spec.d_c)?, &spec)?;
            let mut trained = Vec::new();
            if cfg.suite == Suite::SemTheory && !*duplicate {
                for r in run_suite(&cfg)?
                    .records
                    .iter()
                    .filter(|r| r.metric == irm_bench::Metric::Leakage)
                {
                    trained.push(json!({"method": r.method, "seed": r.seed, "leakage": r.value}));
                }
            }
            let doc = json!({
                "nondegeneracy": report,
                "invariant_projection_leakage": invariant,
                "trained_leakage": trained,
            });
            let text = serde_json::to_vec_pretty(&doc).map_err(BenchError::from)?;
            emit(cfg.out.as_deref(), "diagnose.json", &text)?;
            if cfg.out.is_none() {
                out("\n")?;
            }
            Ok(true)
        }
        Command::Table { files } => {
            if files.is_empty() {
                return Err(Failure::Usage("table needs at least one records CSV".into()));
            }
            let mut records = Vec::new();
            for f in files {
                records.extend(read_records_csv(fs::File::open(f)?)?);
            }
            let table = aggregate_table(&records);
            match cli.out.as_deref() {
                Some(dir) => {
                    emit(Some(dir), "table.txt", table.to_text().as_bytes())?;
                    emit(Some(dir), "table.csv", table.to_csv()?.as_bytes())?;
                }
                None => out(&table.to_text())?,
            }
            Ok(true)
        }
        Command::Selfcheck => {
            let checks = run_selfcheck(cli.seed.unwrap_or(0))?;
            let mut all = true;
            for c in &checks {
                all &= c.passed;
                out(&format!(
                    "{} {}  {}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                ))?;
            }
            Ok(all)
        }
    }
}
