use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use sgpca::io::{format_value, write_table_file};
use sgpca::prelude::*;

use crate::{CliError, CliResult};

/// Ordered `key=value` record written next to every output set.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(subcommand: &str) -> Self {
        let mut m = Self::default();
        m.set("subcommand", subcommand);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl Display>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut f = fs::File::create(dir.join("manifest.txt"))?;
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_matrix(dir: &Path, name: &str, m: &Mat) -> CliResult<()> {
    Ok(write_table_file(&dir.join(name), m, None)?)
}

pub fn write_vector(dir: &Path, name: &str, v: &Vector) -> CliResult<()> {
    write_matrix(dir, name, &Mat::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn write_trace(dir: &Path, trace: &[f64]) -> CliResult<()> {
    let mut f = fs::File::create(dir.join("objective_trace.csv"))?;
    writeln!(f, "iteration,objective")?;
    for (k, v) in trace.iter().enumerate() {
        writeln!(f, "{k},{}", format_value(*v))?;
    }
    Ok(())
}

/// Zero-based indices of the selected loadings.
pub fn write_support(dir: &Path, support: &Support) -> CliResult<()> {
    let mut f = fs::File::create(dir.join("support.csv"))?;
    match support {
        Support::Elements(e) => {
            writeln!(f, "variable,component")?;
            for (j, k) in e {
                writeln!(f, "{j},{k}")?;
            }
        }
        Support::Rows(r) => {
            writeln!(f, "variable")?;
            for j in r {
                writeln!(f, "{j}")?;
            }
        }
    }
    Ok(())
}

/// One header line and one data row.
pub fn csv_row(fields: &[&str], values: &[String]) -> String {
    format!("{}\n{}\n", fields.join(","), values.join(","))
}
