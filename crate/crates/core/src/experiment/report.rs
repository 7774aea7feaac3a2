use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Rounds half away from zero to `decimals` places.
pub fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub quantity: String,
    pub paper_value: Option<f64>,
    pub computed_value: f64,
    pub unit: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
    #[serde(skip)]
    pub label: &'static str,
}

impl TableRow {
    pub fn new(quantity: impl Into<String>, paper_value: Option<f64>, computed_value: f64, unit: &str) -> Self {
        TableRow {
            quantity: quantity.into(),
            paper_value,
            computed_value,
            unit: unit.to_string(),
            flag: None,
            label: "computed",
        }
    }

    /// How the computed value is described in the text rendering.
    pub fn labeled(mut self, label: &'static str) -> Self {
        self.label = label;
        self
    }

    pub fn flagged(mut self, flag: impl Into<String>) -> Self {
        self.flag = Some(flag.into());
        self
    }
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.quantity)?;
        if let Some(p) = self.paper_value {
            write!(f, "paper {p} | ")?;
        }
        write!(f, "{} {:.6}", self.label, self.computed_value)?;
        if !self.unit.is_empty() {
            write!(f, " {}", self.unit)?;
        }
        if let Some(flag) = &self.flag {
            write!(f, " | flag: {flag}")?;
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes `quantity,paper_value,computed_value,unit`; a missing published value is an empty cell.
pub fn write_table_csv<W: Write>(out: W, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "paper_value", "computed_value", "unit"]).map_err(csv_err)?;
    for row in rows {
        let published = row.paper_value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([row.quantity.as_str(), &published, &row.computed_value.to_string(), &row.unit])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Row-major matrix dump with 17 significant digits.
pub fn write_matrix_csv<W: Write>(mut out: W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}
