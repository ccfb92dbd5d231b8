//! Tabular reports rendered as multi-block CSV or a single JSON document.
//!
//! CSV layout: a `#meta` record, then for each block a `#block,<name>` record,
//! its header and rows. Records have different widths, so the writer runs in
//! flexible mode; quoting follows RFC 4180.

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(x) => json!(x.to_string()),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Shortest round-trip form, in exponent notation for very small or large magnitudes.
fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Block {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Self { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in block {}", self.name);
        self.rows.push(row);
    }
}

/// Run identification written at the top of every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Every parameter that influences the output.
    pub config: Value,
}

impl Meta {
    fn fields(&self) -> Vec<String> {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        vec![
            "#meta".into(),
            format!("command={}", self.command),
            format!("version={}", self.version),
            format!("config_hash={}", self.config_hash),
            format!("seed={seed}"),
            format!("config={}", self.config),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub meta: Meta,
    pub blocks: Vec<Block>,
    /// Nested records only present in JSON output.
    pub records: Vec<Value>,
}

impl Report {
    pub fn new(meta: Meta) -> Self {
        Self { meta, blocks: Vec::new(), records: Vec::new() }
    }

    pub fn render(&self, format: Format) -> Vec<u8> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
        w.write_record(self.meta.fields()).expect("in-memory write");
        for b in &self.blocks {
            w.write_record(["#block", b.name.as_str()]).expect("in-memory write");
            w.write_record(&b.columns).expect("in-memory write");
            for row in &b.rows {
                w.write_record(row.iter().map(Cell::csv)).expect("in-memory write");
            }
        }
        w.into_inner().expect("in-memory flush")
    }

    fn to_json(&self) -> Vec<u8> {
        let mut blocks = Map::new();
        for b in &self.blocks {
            let rows: Vec<Value> = b
                .rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = b.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                    Value::Object(obj)
                })
                .collect();
            blocks.insert(b.name.clone(), Value::Array(rows));
        }
        let mut doc = json!({ "meta": self.meta, "blocks": blocks });
        if !self.records.is_empty() {
            doc["records"] = Value::Array(self.records.clone());
        }
        let mut out = serde_json::to_vec_pretty(&doc).expect("report serialises");
        out.push(b'\n');
        out
    }
}
