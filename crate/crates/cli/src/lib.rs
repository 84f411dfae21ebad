//! Scenario runner behind the `pilotwave` binary.

pub mod assertions;
pub mod config;
pub mod run;
pub mod scenarios;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

pub use assertions::AssertionResult;
pub use config::Scenario;
pub use run::execute;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("output error: {0}")]
    Output(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) | RunError::Output(_) => 3,
        }
    }

    fn status(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config_error",
            RunError::Runtime(_) | RunError::Output(_) => "runtime_error",
        }
    }
}

/// Core errors met while building a scenario are configuration problems.
impl From<pilotwave_core::Error> for RunError {
    fn from(e: pilotwave_core::Error) -> Self {
        RunError::Config(e.to_string())
    }
}

/// A CSV series: header row, then one row per record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, RunError> {
        let io = |e: csv::Error| RunError::Output(e.to_string());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(io)?;
        }
        w.into_inner().map_err(|e| RunError::Output(e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub description: String,
    pub master_seed: u64,
    pub status: String,
    pub metrics: BTreeMap<String, f64>,
    pub assertions: Vec<AssertionResult>,
    pub files: Vec<String>,
    pub error: Option<String>,
}

impl Summary {
    pub fn failed(name: &str, description: &str, seed: u64, err: &RunError) -> Self {
        Self {
            scenario: name.to_string(),
            description: description.to_string(),
            master_seed: seed,
            status: err.status().to_string(),
            metrics: BTreeMap::new(),
            assertions: Vec::new(),
            files: Vec::new(),
            error: Some(err.to_string()),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == "pass"
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub summary: Summary,
    pub tables: BTreeMap<String, Table>,
}

impl Report {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.summary.metrics.get(name).copied()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    /// Writes every table as `<name>.csv` plus `summary.json`.
    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        for (name, table) in &self.tables {
            write_file(&dir.join(format!("{name}.csv")), &table.to_csv()?)?;
        }
        write_summary(dir, &self.summary)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    std::fs::write(path, bytes).map_err(|e| RunError::Output(format!("{}: {e}", path.display())))
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| RunError::Output(format!("{}: {e}", dir.display())))?;
    let mut text =
        serde_json::to_string_pretty(summary).map_err(|e| RunError::Output(e.to_string()))?;
    text.push('\n');
    write_file(&dir.join("summary.json"), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["t", "l1"]);
        t.push(vec![0.0, 0.25]);
        t.push(vec![0.5, 1e-20]);
        let text = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(text, "t,l1\n0,0.25\n0.5,0.00000000000000000001\n");
        assert_eq!(t.column("l1").unwrap(), vec![0.25, 1e-20]);
    }
}
