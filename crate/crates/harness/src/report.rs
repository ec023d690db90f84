//! Artifacts of one experiment run: CSV tables, `summary.json` and the
//! config echo.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::Result;

/// Pass/fail verdict of one bound comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A CSV artifact held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file_name: &str, header: &[&str]) -> Self {
        Self {
            file_name: file_name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// CSV bytes with LF line endings.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub results: Map<String, Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub timings: Vec<(String, f64)>,
}

impl ReportBundle {
    pub fn new(config: &ExperimentConfig, threads: usize) -> Self {
        Self {
            kind: config.experiment,
            config: config.clone(),
            threads,
            results: Map::new(),
            checks: Vec::new(),
            tables: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn time(&mut self, phase: &str, start: std::time::Instant) {
        self.timings.push((phase.into(), start.elapsed().as_secs_f64()));
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, file_name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file_name == file_name)
    }

    pub fn summary(&self) -> Value {
        let timings: Map<String, Value> = self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        json!({
            "experiment": self.kind.name(),
            "version": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
            "seed": self.config.seed,
            "threads": self.threads,
            "config": self.config.to_text(),
            "artifacts": self.tables.iter().map(|t| t.file_name.clone()).collect::<Vec<_>>(),
            "results": Value::Object(self.results.clone()),
            "checks": self.checks,
            "all_passed": self.all_passed(),
            "timings_s": timings,
        })
    }

    /// Writes every table, `summary.json` and `config.cfg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in &self.tables {
            let p = dir.join(&t.file_name);
            std::fs::write(&p, t.to_bytes()?)?;
            written.push(p);
        }
        let p = dir.join("summary.json");
        std::fs::write(&p, serde_json::to_string_pretty(&self.summary())? + "\n")?;
        written.push(p);
        let p = dir.join("config.cfg");
        std::fs::write(&p, self.config.to_text())?;
        written.push(p);
        Ok(written)
    }
}
