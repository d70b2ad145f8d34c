//! Report tables, written as CSV and JSON side by side.
//!
//! Every file starts with the manifest hash: a `# manifest-sha256: <hex>`
//! line in CSV, a `manifest_sha256` field in JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{io_err, CliError, Result};

pub const MANIFEST_PREFIX: &str = "# manifest-sha256: ";

/// Table ids in the order they are written.
pub const TABLE_IDS: [&str; 9] = [
    "ci-records",
    "ci-overview",
    "learnability-runs",
    "tc-ar-grid",
    "intervals",
    "kappa",
    "delta-pred",
    "correlations",
    "failures",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    manifest_sha256: String,
    table: String,
    columns: Vec<String>,
    rows: Vec<serde_json::Map<String, Value>>,
}

/// Converts a float into a JSON value; non-finite values become null.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Table {
    pub fn new(id: &str, columns: &[&str]) -> Self {
        Table {
            id: id.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width for table {}",
            self.id
        );
        self.rows.push(row);
    }

    pub fn to_csv(&self, manifest_hash: &str) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell_text))?;
        }
        let body = w
            .into_inner()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(format!(
            "{MANIFEST_PREFIX}{manifest_hash}\n{}",
            String::from_utf8_lossy(&body)
        ))
    }

    pub fn to_json(&self, manifest_hash: &str) -> Result<String> {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                self.columns
                    .iter()
                    .cloned()
                    .zip(row.iter().cloned())
                    .collect()
            })
            .collect();
        let file = TableFile {
            manifest_sha256: manifest_hash.to_string(),
            table: self.id.clone(),
            columns: self.columns.clone(),
            rows,
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn write(&self, dir: &Path, manifest_hash: &str) -> Result<()> {
        let csv_path = dir.join(format!("{}.csv", self.id));
        fs::write(&csv_path, self.to_csv(manifest_hash)?).map_err(io_err(&csv_path))?;
        let json_path = dir.join(format!("{}.json", self.id));
        fs::write(&json_path, self.to_json(manifest_hash)?).map_err(io_err(json_path))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!(
                "unknown output format {other:?}; expected csv or json"
            )),
        }
    }
}

/// Contents of one table file from a report directory.
pub fn read_table(dir: &Path, id: &str, format: OutputFormat) -> Result<String> {
    if !TABLE_IDS.contains(&id) {
        return Err(CliError::UnknownTable(id.to_string()));
    }
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let path = dir.join(format!("{id}.{ext}"));
    fs::read_to_string(&path).map_err(io_err(path))
}

/// The manifest hash recorded in a CSV table, if present.
pub fn manifest_hash_of(csv_text: &str) -> Option<&str> {
    csv_text.lines().next()?.strip_prefix(MANIFEST_PREFIX)
}

/// CSV text without its manifest line.
pub fn csv_body(csv_text: &str) -> &str {
    match csv_text.strip_prefix(MANIFEST_PREFIX) {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => csv_text,
    }
}
