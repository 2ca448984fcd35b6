//! Tables and their CSV / JSON-lines encodings.

use std::io::Write;
use std::path::Path;

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Cell {
        v.map_or(Cell::Empty, Cell::Num)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => format_f64(*x),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(i) => (*i).into(),
            Cell::Num(x) => serde_json::Number::from_f64(*x).map_or(serde_json::Value::Null, Into::into),
            Cell::Text(s) => s.clone().into(),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

/// Shortest round-trip form; exponent notation outside [1e-4, 1e15).
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    pub fn for_path(path: Option<&Path>) -> Format {
        match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("jsonl") => Format::JsonLines,
            _ => Format::Csv,
        }
    }
}

fn config_json(cfg: &Config) -> Result<String, CliError> {
    serde_json::to_string(cfg).map_err(|e| CliError::Runtime(format!("cannot encode config: {e}")))
}

pub fn encode(table: &Table, cfg: &Config, format: Format) -> Result<Vec<u8>, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("encoding output: {e}"));
    let mut buf = Vec::new();
    match format {
        Format::Csv => {
            writeln!(buf, "# config: {}", config_json(cfg)?).map_err(io)?;
            let mut w = csv::Writer::from_writer(&mut buf);
            let csv_err = |e: csv::Error| CliError::Runtime(format!("encoding output: {e}"));
            w.write_record(&table.header).map_err(csv_err)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::csv)).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        Format::JsonLines => {
            writeln!(buf, "{{\"config\":{}}}", config_json(cfg)?).map_err(io)?;
            for row in &table.rows {
                let fields: Vec<String> = table
                    .header
                    .iter()
                    .zip(row)
                    .map(|(k, v)| format!("{}:{}", serde_json::Value::from(*k), v.json()))
                    .collect();
                writeln!(buf, "{{{}}}", fields.join(",")).map_err(io)?;
            }
        }
    }
    Ok(buf)
}

/// Writes to `path`, or stdout as CSV when there is none.
pub fn write(table: &Table, cfg: &Config, path: Option<&Path>) -> Result<(), CliError> {
    let bytes = encode(table, cfg, Format::for_path(path))?;
    match path {
        Some(p) => {
            std::fs::write(p, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))
        }
        None => std::io::stdout().write_all(&bytes).map_err(|e| CliError::Runtime(format!("cannot write stdout: {e}"))),
    }
}
