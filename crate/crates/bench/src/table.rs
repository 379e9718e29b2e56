//! Mean and sample standard deviation per (example, environment) row and
//! method column of the unit-test records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::config::Variant;
use crate::error::Result;
use crate::record::{Metric, RunRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub mean: f64,
    /// `None` for a single value.
    pub std: Option<f64>,
    pub failures: usize,
}

impl Cell {
    pub fn render(&self) -> String {
        if self.n == 0 {
            return String::new();
        }
        match self.std {
            Some(s) => format!("{:.2} ± {:.2}", self.mean, s),
            None => format!("{:.2} ± n/a", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<String>,
    pub methods: Vec<String>,
    /// `cells[row][method]`; `None` when the pair has no records at all.
    pub cells: Vec<Vec<Option<Cell>>>,
}

pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Row label: `Example1.E0`, with an `s` after the example for the scrambled
/// variant (`Example1s.E0`).
pub fn row_label(r: &RunRecord) -> String {
    let s = if r.variant == Variant::Scrambled { "s" } else { "" };
    format!("{}{}.{}", r.example, s, r.env)
}

/// Groups test-error records (`mse`, `class_error`) and failures. Rows are in
/// lexicographic order, methods alphabetical; values are sorted before
/// summing so the result does not depend on record order.
pub fn aggregate_table(records: &[RunRecord]) -> Table {
    let mut values: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut failures: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut rows = BTreeSet::new();
    let mut methods = BTreeSet::new();
    for r in records {
        let key = (row_label(r), r.method.clone());
        match r.metric {
            Metric::Mse | Metric::ClassError => values.entry(key.clone()).or_default().push(r.value),
            Metric::Failed => *failures.entry(key.clone()).or_default() += 1,
            _ => continue,
        }
        rows.insert(key.0);
        methods.insert(key.1);
    }
    let rows: Vec<String> = rows.into_iter().collect();
    let methods: Vec<String> = methods.into_iter().collect();
    let cells = rows
        .iter()
        .map(|row| {
            methods
                .iter()
                .map(|m| {
                    let key = (row.clone(), m.clone());
                    let fails = failures.get(&key).copied().unwrap_or(0);
                    let mut v = values.get(&key).cloned().unwrap_or_default();
                    if v.is_empty() && fails == 0 {
                        return None;
                    }
                    v.sort_by(f64::total_cmp);
                    let (mean, std) = if v.is_empty() { (f64::NAN, None) } else { mean_std(&v) };
                    Some(Cell {
                        n: v.len(),
                        mean,
                        std,
                        failures: fails,
                    })
                })
                .collect()
        })
        .collect();
    Table { rows, methods, cells }
}

impl Table {
    pub fn cell(&self, row: &str, method: &str) -> Option<&Cell> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.methods.iter().position(|m| m == method)?;
        self.cells[i][j].as_ref()
    }

    /// Notes on missing cells, single-run cells and failed runs.
    pub fn footer(&self) -> Vec<String> {
        let mut notes = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, m) in self.methods.iter().enumerate() {
                match &self.cells[i][j] {
                    None => notes.push(format!("{row} / {m}: missing")),
                    Some(c) => {
                        if c.n == 0 {
                            notes.push(format!("{row} / {m}: no completed runs"));
                        } else if c.std.is_none() {
                            notes.push(format!("{row} / {m}: single run, std n/a"));
                        }
                        if c.failures > 0 {
                            notes.push(format!("{row} / {m}: {} failed run(s)", c.failures));
                        }
                    }
                }
            }
        }
        notes
    }

    fn rendered(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.as_ref().map(Cell::render).unwrap_or_default())
                    .collect()
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let cells = self.rendered();
        let w0 = self.rows.iter().map(|r| r.chars().count()).max().unwrap_or(0).max(3);
        let widths: Vec<usize> = self
            .methods
            .iter()
            .enumerate()
            .map(|(j, m)| {
                cells
                    .iter()
                    .map(|r| r[j].chars().count())
                    .max()
                    .unwrap_or(0)
                    .max(m.len())
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:w0$}", "");
        for (m, w) in self.methods.iter().zip(&widths) {
            let _ = write!(out, "  {m:>w$}");
        }
        out.push('\n');
        for (row, vals) in self.rows.iter().zip(&cells) {
            let _ = write!(out, "{row:w0$}");
            for (v, w) in vals.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        let notes = self.footer();
        if !notes.is_empty() {
            out.push('\n');
            for n in notes {
                let _ = writeln!(out, "* {n}");
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row".to_string()];
        header.extend(self.methods.iter().cloned());
        w.write_record(&header)?;
        for (row, vals) in self.rows.iter().zip(self.rendered()) {
            let mut rec = vec![row.clone()];
            rec.extend(vals);
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
