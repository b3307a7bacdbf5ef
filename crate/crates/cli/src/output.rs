use std::fs;
use std::path::{Path, PathBuf};

use aqec::dynamics::format_float;
use serde::Serialize;

/// A CSV table preceded by a `# units: ...` comment line.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub units: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, units: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(name: &str, units: &str, header: Vec<String>) -> Self {
        Self { name: name.into(), units: units.into(), header, rows: Vec::new() }
    }

    pub fn push_floats(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|x| format_float(*x)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = format!("# units: {}\n{}\n", self.units, self.header.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.render())?;
        Ok(path)
    }
}

/// Comparison of a computed quantity against a built-in reference value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Delta {
    pub quantity: String,
    pub reference: f64,
    pub value: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub within: bool,
}

impl Delta {
    pub fn new(quantity: &str, reference: f64, value: f64, tolerance: f64) -> Self {
        let delta = value - reference;
        Self { quantity: quantity.into(), reference, value, delta, tolerance, within: delta.abs() <= tolerance }
    }

    /// Passes when `value ≥ reference`.
    pub fn at_least(quantity: &str, reference: f64, value: f64) -> Self {
        let delta = value - reference;
        Self { quantity: quantity.into(), reference, value, delta, tolerance: 0.0, within: delta >= 0.0 }
    }

    /// Passes when `value ≤ reference`.
    pub fn at_most(quantity: &str, reference: f64, value: f64) -> Self {
        let delta = value - reference;
        Self { quantity: quantity.into(), reference, value, delta, tolerance: 0.0, within: delta <= 0.0 }
    }
}
