//! Report emission: CSV tables with a fixed column order and a
//! `summary.json` sidecar. Reals carry 12 significant digits.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest text that reads back as the 12-digit rounding of `x`.
pub fn fmt12(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        let r = sig12(x);
        if r == 0.0 || (1e-4..1e15).contains(&r.abs()) {
            format!("{r}")
        } else {
            format!("{r:e}")
        }
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_default()
}

/// JSON number rounded to 12 digits; non-finite values become strings.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(sig12(x)).map_or_else(|| Value::String(fmt12(x)), Value::Number)
}

pub fn num_opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// A CSV table in construction.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes `<name>.csv` and `summary.json` into `dir`.
pub fn emit(dir: &Path, name: &str, table: &Table, summary: &Value) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    table.write(&dir.join(format!("{name}.csv")))?;
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(dir.join("summary.json"), text + "\n").context("cannot write summary.json")?;
    Ok(())
}
