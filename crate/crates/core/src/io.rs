//! Numeric CSV reading and writing.
//!
//! Empty cells, `NA` and `NaN` read as missing. Values are written in the
//! shortest decimal form that parses back to the same `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::MaskedMatrix;
use crate::error::{Error, Result};
use crate::Mat;

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan")
}

/// Reads a rectangular numeric table. Missing cells come back as `NaN`.
pub fn read_table<R: Read>(reader: R, header: bool) -> Result<Mat> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                if is_missing(cell) {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse(format!("row {}, column {}: '{cell}' is not a number", i + 1, j + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(Mat::from_fn(n, p, |i, j| rows[i][j]))
}

/// Reads data with missing cells masked out.
pub fn read_masked<R: Read>(reader: R, header: bool) -> Result<MaskedMatrix> {
    Ok(MaskedMatrix::from_nan(read_table(reader, header)?))
}

/// Reads a table that must be complete.
pub fn read_dense<R: Read>(reader: R, header: bool) -> Result<Mat> {
    let m = read_table(reader, header)?;
    if let Some(l) = m.iter().position(|v| v.is_nan()) {
        let (i, j) = (l % m.nrows(), l / m.nrows());
        return Err(Error::Parse(format!("missing value at row {}, column {}", i + 1, j + 1)));
    }
    Ok(m)
}

pub fn read_masked_file(path: &Path, header: bool) -> Result<MaskedMatrix> {
    read_masked(open(path)?, header)
}

pub fn read_dense_file(path: &Path, header: bool) -> Result<Mat> {
    read_dense(open(path)?, header)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `m` row by row; `NaN` cells are written as `NA`.
pub fn write_table<W: Write>(writer: W, m: &Mat, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    if let Some(h) = header {
        w.write_record(h).map_err(csv_err)?;
    }
    for i in 0..m.nrows() {
        let rec: Vec<String> = m.row(i).iter().map(|&v| format_value(v)).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file(path: &Path, m: &Mat, header: Option<&[String]>) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_table(std::io::BufWriter::new(f), m, header)
}

/// Data with unobserved cells written as `NA`.
pub fn masked_to_nan(data: &MaskedMatrix) -> Mat {
    data.values()
        .zip_map(data.mask(), |v, h| if h == 0.0 { f64::NAN } else { v })
}

pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}
