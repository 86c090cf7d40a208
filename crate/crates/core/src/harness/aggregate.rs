use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizers::Trajectory;
use crate::problems::fmt_f64;

pub const AGGREGATE_CSV_HEADER: &str = "iter,mean_grad_norm,mean_dist,n_runs,n_diverged";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub k: usize,
    pub mean_grad_norm: f64,
    pub mean_dist: f64,
    /// Runs averaged into this row.
    pub n_runs: usize,
    /// Runs of this method that diverged anywhere.
    pub n_diverged: usize,
}

/// Seed-averaged curve of one method.
///
/// Diverged runs are left out of the means unless every run diverged, in
/// which case all of them are averaged for as long as they have records.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub label: String,
    pub rows: Vec<AggregateRow>,
}

impl AggregateResult {
    pub fn from_runs(label: String, runs: &[Trajectory]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::invalid("cannot aggregate zero runs"));
        }
        let n_diverged = runs.iter().filter(|t| t.diverged).count();
        let all_diverged = n_diverged == runs.len();
        let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        for t in runs.iter().filter(|t| all_diverged || !t.diverged) {
            for r in &t.records {
                let e = acc.entry(r.k).or_insert((0.0, 0.0, 0));
                e.0 += r.grad_norm;
                e.1 += r.dist;
                e.2 += 1;
            }
        }
        let rows = acc
            .into_iter()
            .map(|(k, (g, d, m))| AggregateRow {
                k,
                mean_grad_norm: g / m as f64,
                mean_dist: d / m as f64,
                n_runs: m,
                n_diverged,
            })
            .collect();
        Ok(Self { label, rows })
    }

    pub fn n_diverged(&self) -> usize {
        self.rows.first().map_or(0, |r| r.n_diverged)
    }

    pub fn all_diverged(&self) -> bool {
        self.rows.first().is_some_and(|r| r.n_runs == r.n_diverged)
    }

    pub fn initial_grad_norm(&self) -> f64 {
        self.rows.first().map_or(f64::NAN, |r| r.mean_grad_norm)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.mean_grad_norm)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(AGGREGATE_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.k,
                fmt_f64(r.mean_grad_norm),
                fmt_f64(r.mean_dist),
                r.n_runs,
                r.n_diverged
            );
        }
        s
    }

    pub fn from_csv(label: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == AGGREGATE_CSV_HEADER => {}
            _ => {
                return Err(Error::Parse { line: 1, msg: format!("expected header `{AGGREGATE_CSV_HEADER}`") })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: i + 1, msg };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", f.len())));
            }
            rows.push(AggregateRow {
                k: f[0].parse().map_err(|e| bad(format!("{e}")))?,
                mean_grad_norm: f[1].parse().map_err(|e| bad(format!("{e}")))?,
                mean_dist: f[2].parse().map_err(|e| bad(format!("{e}")))?,
                n_runs: f[3].parse().map_err(|e| bad(format!("{e}")))?,
                n_diverged: f[4].parse().map_err(|e| bad(format!("{e}")))?,
            });
        }
        if rows.is_empty() {
            return Err(Error::Parse { line: 2, msg: "no data rows".into() });
        }
        Ok(Self { label: label.into(), rows })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(label: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(label, &text)
    }
}
