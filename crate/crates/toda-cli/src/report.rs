//! JSON reports and CSV tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::Serialize;
use toda::checks::{Metric, Status};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCheck {
    pub name: String,
    pub status: Status,
    pub metrics: Vec<Metric>,
    pub notes: Vec<String>,
}

impl ReportCheck {
    /// Fails when any metric fails.
    pub fn hard(name: impl Into<String>, metrics: Vec<Metric>, notes: Vec<String>) -> Self {
        let status = if metrics.iter().all(Metric::passes) {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name: name.into(),
            status,
            metrics,
            notes,
        }
    }

    /// Inconclusive rather than failed when a metric misses: used for fit
    /// quality and boundary mass, which reject a run without refuting anything.
    pub fn advisory(name: impl Into<String>, metrics: Vec<Metric>, notes: Vec<String>) -> Self {
        let mut check = Self::hard(name, metrics, notes);
        if check.status == Status::Fail {
            check.status = Status::Inconclusive;
        }
        check
    }

    pub fn error(name: impl Into<String>, message: String) -> Self {
        Self {
            name: name.into(),
            status: Status::Fail,
            metrics: Vec::new(),
            notes: vec![format!("error: {message}")],
        }
    }

    pub fn line(&self) -> String {
        let detail = self
            .metrics
            .iter()
            .map(|m| {
                format!(
                    "{} = {:.3e} ({} {:.1e})",
                    m.name,
                    m.value,
                    if m.upper { "<" } else { ">" },
                    m.tolerance
                )
            })
            .chain(self.notes.iter().cloned())
            .collect::<Vec<_>>()
            .join("; ");
        format!("{:<12} {}: {}", self.status.label(), self.name, detail)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: RunConfig,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub checks: Vec<ReportCheck>,
    /// Truncation tails, edge fractions and similar quantities that are
    /// reported but not asserted.
    pub diagnostics: BTreeMap<String, f64>,
    pub results: serde_json::Value,
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

impl Report {
    pub fn new(config: RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: config.command,
            config,
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
            checks: Vec::new(),
            diagnostics: BTreeMap::new(),
            results: serde_json::Value::Null,
        }
    }

    pub fn any_failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn write_json(&mut self, path: &Path) -> std::io::Result<()> {
        self.finished_unix_ms = unix_ms();
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }
}

/// Round-trip float formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Rows of a CSV file, written in one pass at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// A cell value; complex values expand to `re`, `im` columns.
pub enum Cell {
    Real(f64),
    Complex(Complex64),
    Int(i64),
    Text(String),
}

impl Table {
    /// `columns` names complex columns once; they expand to `<name>_re`, `<name>_im`.
    pub fn new(columns: &[(&str, bool)]) -> Self {
        let header = columns
            .iter()
            .flat_map(|&(name, complex)| {
                if complex {
                    vec![format!("{name}_re"), format!("{name}_im")]
                } else {
                    vec![name.to_string()]
                }
            })
            .collect();
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        let row: Vec<String> = cells
            .into_iter()
            .flat_map(|c| match c {
                Cell::Real(x) => vec![fmt_f64(x)],
                Cell::Complex(z) => vec![fmt_f64(z.re), fmt_f64(z.im)],
                Cell::Int(n) => vec![n.to_string()],
                Cell::Text(s) => vec![s],
            })
            .collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(std::io::Error::other)?;
        for row in &self.rows {
            w.write_record(row).map_err(std::io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        std::fs::File::create(path)?.write_all(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn complex_columns_expand() {
        let mut t = Table::new(&[("t", false), ("z", true)]);
        t.push(vec![Cell::Real(1.0), Cell::Complex(Complex64::new(2.0, -3.0))]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        t.write(&path).unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "t,z_re,z_im\n1e0,2e0,-3e0\n");
    }

    #[test]
    fn advisory_is_never_a_failure() {
        let c = ReportCheck::advisory("fit", vec![Metric::below("rms", 0.2, 0.05)], Vec::new());
        assert_eq!(c.status, Status::Inconclusive);
        let h = ReportCheck::hard("fit", vec![Metric::below("rms", 0.2, 0.05)], Vec::new());
        assert_eq!(h.status, Status::Fail);
    }
}
