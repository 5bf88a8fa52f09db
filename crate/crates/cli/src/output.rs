use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // +0.0 folds negative zero
            Cell::Real(v) if v.is_finite() => format!("{:.15e}", v + 0.0),
            Cell::Real(v) if v.is_nan() => "nan".into(),
            Cell::Real(v) if *v > 0.0 => "inf".into(),
            Cell::Real(_) => "-inf".into(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().context("flushing CSV buffer")
    }
}

#[derive(Serialize)]
struct Meta<'a, I: Serialize> {
    command: &'a str,
    version: &'a str,
    inputs: &'a I,
    columns: &'a [&'static str],
    rows: usize,
}

/// A file to be written under `--out`.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Artifact {
            name: name.into(),
            bytes,
        })
    }
}

/// CSV plus its `<stem>.meta.json` sidecar.
pub fn table_artifacts<I: Serialize>(
    stem: &str,
    command: &str,
    inputs: &I,
    table: &Table,
) -> Result<Vec<Artifact>> {
    let meta = Meta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        inputs,
        columns: &table.columns,
        rows: table.rows.len(),
    };
    Ok(vec![
        Artifact {
            name: format!("{stem}.csv"),
            bytes: table.to_csv()?,
        },
        Artifact::json(format!("{stem}.meta.json"), &meta)?,
    ])
}

/// Writes everything under `dir`, creating it if needed.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

/// Writes the CSV and sidecar under `out`, or prints the CSV when there is no
/// output directory.
pub fn emit<I: Serialize>(out: Option<&Path>, stem: &str, command: &str, inputs: &I, table: &Table) -> Result<()> {
    match out {
        Some(dir) => write_all(dir, &table_artifacts(stem, command, inputs, table)?),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&table.to_csv()?)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}
