use std::path::Path;

use super::atomic_write;
use crate::error::{io_err, Error, Result};

/// Formats a real with 17 significant digits, enough to round-trip any f64.
pub(crate) fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a CSV whose rows are a text label followed by real-valued columns.
pub fn write_csv(header: &[&str], rows: &[(String, Vec<f64>)], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_owned(), source };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for (label, values) in rows {
        if values.len() + 1 != header.len() {
            return Err(Error::ShapeMismatch(format!(
                "row {label:?} has {} columns, header has {}",
                values.len() + 1,
                header.len()
            )));
        }
        let mut record = Vec::with_capacity(header.len());
        record.push(label.clone());
        record.extend(values.iter().map(|&v| format_real(v)));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| io_err(path)(e.into_error()))?;
    atomic_write(path, &bytes)
}

/// A parsed CSV with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.trim() == name)
    }

    /// Parses column `idx` as reals.
    pub fn reals(&self, idx: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(idx).map(|s| s.trim()).unwrap_or("");
                cell.parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("row {}: {cell:?} is not a number", i + 1))
                })
            })
            .collect()
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let csv_err = |source| Error::Csv { path: path.to_owned(), source };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_owned).collect());
    }
    Ok(CsvTable { header, rows })
}
