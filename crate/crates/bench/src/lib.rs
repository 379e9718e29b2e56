//! Experiment harness for `irm-core`: configuration, suite execution,
//! conditioning sweeps, result tables and self-checks.

pub mod config;
pub mod error;
pub mod instances;
pub mod record;
pub mod selfcheck;
pub mod suite;
pub mod sweeps;
pub mod table;

pub use config::{ExperimentConfig, Selection, Suite, Variant};
pub use error::{BenchError, Result};
pub use record::{read_records_csv, write_records_csv, Metric, RunRecord};
pub use suite::{run_suite, LambdaCandidate, LambdaChoice, SuiteOutput};
pub use sweeps::{figure1_sweep, rosenfeld_sweep};
pub use table::{aggregate_table, Table};
