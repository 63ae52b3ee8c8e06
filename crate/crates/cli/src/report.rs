//! Result tables and their CSV / JSON serializations.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i128),
    Float(f64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// 17 significant digits, so every finite value round-trips.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(x) => x.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self, out: &mut String) {
        match self {
            Cell::Int(x) => write!(out, "{x}").unwrap(),
            Cell::Float(x) if x.is_finite() => out.push_str(&format_float(*x)),
            // JSON has no infinities
            Cell::Float(x) if x.is_infinite() => out.push_str(if *x > 0.0 { "\"Infinity\"" } else { "\"-Infinity\"" }),
            Cell::Float(_) | Cell::Empty => out.push_str("null"),
            Cell::Bool(b) => write!(out, "{b}").unwrap(),
            Cell::Text(s) => json_string(out, s),
        }
    }
}

fn json_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings serialize"));
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// A two-column `key,value` table.
    pub fn key_values(name: &str, pairs: Vec<(&str, Cell)>) -> Self {
        let mut t = Table::new(name, &["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.into(), v]);
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: String,
    pub config: RunConfig,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

/// First 16 hex digits of the SHA-256 of the canonical config.
pub fn config_digest(config: &RunConfig) -> String {
    let hash = Sha256::digest(config.canonical_json().as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Report { command: command.into(), config: config.clone(), tables: Vec::new(), warnings: Vec::new() }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// CSV carries one table: the first, or the one named.
    pub fn to_csv(&self, table: Option<&str>) -> Result<Vec<u8>> {
        let t = match table {
            Some(name) => match self.table(name) {
                Some(t) => t,
                None => {
                    let names: Vec<&str> = self.tables.iter().map(|t| t.name.as_str()).collect();
                    bail!("no table `{name}` in this report (have: {})", names.join(", "));
                }
            },
            None => self.tables.first().ok_or_else(|| anyhow::anyhow!("report has no tables"))?,
        };
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&t.columns)?;
        for row in &t.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str("{\n  \"command\": ");
        json_string(&mut out, &self.command);
        out.push_str(",\n  \"config_digest\": ");
        json_string(&mut out, &config_digest(&self.config));
        out.push_str(",\n  \"config\": ");
        out.push_str(&self.config.canonical_json());
        out.push_str(",\n  \"tables\": [");
        for (i, t) in self.tables.iter().enumerate() {
            out.push_str(if i == 0 { "\n    {\"name\": " } else { ",\n    {\"name\": " });
            json_string(&mut out, &t.name);
            out.push_str(", \"columns\": [");
            for (j, c) in t.columns.iter().enumerate() {
                if j > 0 {
                    out.push_str(", ");
                }
                json_string(&mut out, c);
            }
            out.push_str("], \"rows\": [");
            for (j, row) in t.rows.iter().enumerate() {
                out.push_str(if j == 0 { "\n      [" } else { ",\n      [" });
                for (k, cell) in row.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    cell.json(&mut out);
                }
                out.push(']');
            }
            out.push_str(if t.rows.is_empty() { "]}" } else { "\n    ]}" });
        }
        out.push_str(if self.tables.is_empty() { "],\n  \"warnings\": [" } else { "\n  ],\n  \"warnings\": [" });
        for (i, w) in self.warnings.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            json_string(&mut out, w);
        }
        out.push_str("]\n}\n");
        out.into_bytes()
    }

    pub fn emit(&self, format: Format, table: Option<&str>) -> Result<Vec<u8>> {
        match format {
            Format::Csv => self.to_csv(table),
            Format::Json => Ok(self.to_json()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn sample() -> Report {
        let cfg = parse_config(r#"{"group": {"cyclic": 2}}"#).unwrap();
        let mut r = Report::new("demo", &cfg);
        let mut t = Table::new("main", &["N", "note", "x"]);
        t.push(vec![1usize.into(), "a,\"b\"".into(), 0.82.into()]);
        t.push(vec![2usize.into(), Cell::Empty, f64::INFINITY.into()]);
        r.tables.push(t);
        r.warnings.push("empirical".into());
        r
    }

    #[test]
    fn csv_quotes_and_formats() {
        let csv = String::from_utf8(sample().to_csv(None).unwrap()).unwrap();
        assert_eq!(csv, "N,note,x\n1,\"a,\"\"b\"\"\",8.1999999999999995e-1\n2,,inf\n");
    }

    #[test]
    fn json_is_valid_and_ordered() {
        let bytes = sample().to_json();
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["tables"][0]["rows"][1][2], "Infinity");
        assert_eq!(v["tables"][0]["rows"][0][2].as_f64(), Some(0.82));
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.find("\"command\"").unwrap() < text.find("\"config_digest\"").unwrap());
        assert_eq!(v["config_digest"].as_str().unwrap().len(), 16);
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }
}
