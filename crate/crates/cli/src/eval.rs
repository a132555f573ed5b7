use std::path::{Path, PathBuf};

use clap::Args;
use sgpca::io::{format_value, read_dense_file, read_masked_file};
use sgpca::metrics::evaluate_parts;
use sgpca::prelude::*;

use crate::output::csv_row;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Output directory of `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Family for the deviance (defaults to the one recorded with the truth).
    #[arg(long)]
    pub family: Option<Family>,
    /// Support comparison by entries or by rows (defaults to the truth's pattern).
    #[arg(long)]
    pub mode: Option<SparsityMode>,
    /// Divide the deviance by this reference value.
    #[arg(long)]
    pub reference_deviance: Option<f64>,
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Read options from a key=value file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    let recorded = read_manifest(&args.truth);
    let lookup = |key: &str| recorded.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    let family = match args.family {
        Some(f) => f,
        None => lookup("family")
            .ok_or_else(|| CliError::Config("--family is required when the truth has no manifest".into()))?
            .parse::<Family>()?,
    };
    let mode = match args.mode {
        Some(m) => m,
        None => lookup("q_mode")
            .map(|m| m.parse::<SparsityMode>())
            .transpose()?
            .unwrap_or(SparsityMode::ElementWise),
    };

    let model = read_model(&args.fit)?;
    let data = read_masked_file(&args.truth.join("X.csv"), false)?;
    let theta_star = read_dense_file(&args.truth.join("Theta.csv"), false)?;
    let q_star = read_dense_file(&args.truth.join("Q.csv"), false)?;

    let mut res = evaluate_parts(&data, family, &model.theta(), &model.s, &theta_star, &q_star, mode)?;
    if let Some(r) = args.reference_deviance {
        res = res.with_reference_deviance(r);
    }
    let values: Vec<String> = res.values().iter().map(|v| format_value(*v)).collect();
    let text = csv_row(&EvalResult::FIELDS, &values);
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn read_model(dir: &Path) -> CliResult<FactorModel> {
    let alpha = read_dense_file(&dir.join("alpha.csv"), false)?;
    if alpha.ncols() != 1 {
        return Err(CliError::Input("alpha.csv must have a single column".into()));
    }
    let v = read_dense_file(&dir.join("V.csv"), false)?;
    let s = read_dense_file(&dir.join("S.csv"), false)?;
    if v.ncols() != s.ncols() {
        return Err(CliError::Input(format!(
            "V.csv has {} columns but S.csv has {}",
            v.ncols(),
            s.ncols()
        )));
    }
    Ok(FactorModel::new(Vector::from_column_slice(alpha.as_slice()), v, s)?)
}

fn read_manifest(dir: &Path) -> Vec<(String, String)> {
    std::fs::read_to_string(dir.join("manifest.txt"))
        .map(|text| {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect()
        })
        .unwrap_or_default()
}
