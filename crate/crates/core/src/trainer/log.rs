//! Iteration log rows and the CSV log file.
//!
//! One row per iteration with a fixed header (widths depend on the expert
//! count K):
//!
//! ```text
//! iteration,episodes,mean_return,success_rate,max_kl,
//! expert_return_0..K-1,curriculum_entropy_0..K-1,policy_entropy_0..K-1
//! ```
//!
//! `episodes` is cumulative and equals `iteration * K * samples_per_expert`.
//! Values are written with Rust's shortest-roundtrip float formatting, so
//! identical runs produce byte-identical files. Wall-clock time is reported
//! on the console only, never in the file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    /// Cumulative environment episodes.
    pub episodes: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Max over experts of the post-projection KL (mean + cov parts).
    pub max_kl: f64,
    pub expert_return: Vec<f64>,
    pub curriculum_entropy: Vec<f64>,
    pub policy_entropy: Vec<f64>,
}

pub fn csv_header(n_experts: usize) -> String {
    let mut s = String::from("iteration,episodes,mean_return,success_rate,max_kl");
    for o in 0..n_experts {
        let _ = write!(s, ",expert_return_{o}");
    }
    for o in 0..n_experts {
        let _ = write!(s, ",curriculum_entropy_{o}");
    }
    for o in 0..n_experts {
        let _ = write!(s, ",policy_entropy_{o}");
    }
    s
}

impl IterationLog {
    pub fn to_csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{}",
            self.iteration, self.episodes, self.mean_return, self.success_rate, self.max_kl
        );
        for v in self.expert_return.iter().chain(&self.curriculum_entropy).chain(&self.policy_entropy) {
            let _ = write!(s, ",{v}");
        }
        s
    }
}

/// A parsed CSV log: column names plus numeric rows.
#[derive(Debug, Clone)]
pub struct LogTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl LogTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read log {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty log file".into()))?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.parse().map_err(|_| Error::Parse(format!("log row {}: bad value '{t}'", i + 2))))
                .collect::<Result<_>>()?;
            if row.len() != columns.len() {
                return Err(Error::Parse(format!("log row {} has {} fields, header has {}", i + 2, row.len(), columns.len())));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Parse(format!("log has no column '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_row_round_trip() {
        let log = IterationLog {
            iteration: 3,
            episodes: 192,
            mean_return: -12.5,
            success_rate: 0.25,
            max_kl: 0.051,
            expert_return: vec![-10.0, -15.0],
            curriculum_entropy: vec![5.1, 5.3],
            policy_entropy: vec![2.0, 2.1],
        };
        let text = format!("{}\n{}\n", csv_header(2), log.to_csv_row());
        let table = LogTable::parse(&text).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.column("mean_return").unwrap(), vec![-12.5]);
        assert_eq!(table.column("curriculum_entropy_1").unwrap(), vec![5.3]);
        assert_eq!(table.column("episodes").unwrap(), vec![192.0]);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = "a,b\n1.0,2.0\n3.0\n";
        assert!(LogTable::parse(text).is_err());
    }
}
