use std::cmp::Ordering;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{Suite, Variant};
use crate::error::{BenchError, Result};

pub const CSV_HEADER: [&str; 9] = [
    "suite", "example", "variant", "env", "split", "method", "seed", "metric", "value",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    ClassError,
    PenaltyV1,
    PenaltyV2,
    Kappa,
    Leakage,
    /// A run that did not finish; `value` is the step it stopped at.
    Failed,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::ClassError => "class_error",
            Metric::PenaltyV1 => "penalty_v1",
            Metric::PenaltyV2 => "penalty_v2",
            Metric::Kappa => "kappa",
            Metric::Leakage => "leakage",
            Metric::Failed => "failed",
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [
            Metric::Mse,
            Metric::ClassError,
            Metric::PenaltyV1,
            Metric::PenaltyV2,
            Metric::Kappa,
            Metric::Leakage,
            Metric::Failed,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub suite: Suite,
    pub example: String,
    pub variant: Variant,
    pub env: String,
    pub split: String,
    pub method: String,
    pub seed: u64,
    pub metric: Metric,
    pub value: f64,
    /// Failure diagnostics; kept out of the CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Numeric labels compare as numbers so sweeps keep grid order.
fn cmp_label(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

impl RunRecord {
    pub fn key_cmp(&self, other: &Self) -> Ordering {
        self.suite
            .cmp(&other.suite)
            .then_with(|| self.example.cmp(&other.example))
            .then_with(|| self.variant.cmp(&other.variant))
            .then_with(|| cmp_label(&self.env, &other.env))
            .then_with(|| cmp_label(&self.split, &other.split))
            .then_with(|| self.method.cmp(&other.method))
            .then_with(|| self.seed.cmp(&other.seed))
            .then_with(|| self.metric.cmp(&other.metric))
            .then_with(|| self.value.total_cmp(&other.value))
    }

    pub fn is_failure(&self) -> bool {
        self.metric == Metric::Failed
    }
}

pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(RunRecord::key_cmp);
}

pub fn write_records_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.suite.as_str(),
            &r.example,
            r.variant.as_str(),
            &r.env,
            &r.split,
            &r.method,
            &r.seed.to_string(),
            r.metric.as_str(),
            &r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Config(format!("unexpected record header {header:?}")));
    }
    let bad = |what: &str, v: &str| BenchError::Config(format!("bad {what} '{v}' in records"));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        out.push(RunRecord {
            suite: row[0].parse().map_err(|_| bad("suite", &row[0]))?,
            example: row[1].to_string(),
            variant: row[2].parse().map_err(|_| bad("variant", &row[2]))?,
            env: row[3].to_string(),
            split: row[4].to_string(),
            method: row[5].to_string(),
            seed: row[6].parse().map_err(|_| bad("seed", &row[6]))?,
            metric: row[7].parse().map_err(|_| bad("metric", &row[7]))?,
            value: row[8].parse().map_err(|_| bad("value", &row[8]))?,
            detail: None,
        });
    }
    Ok(out)
}
