use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;
use sgpca::io::format_value;
use sgpca::metrics::trimmed_mean;
use sgpca::prelude::*;

use crate::fit::SolveArgs;
use crate::output::csv_row;
use crate::simulate::SimArgs;
use crate::{CliError, CliResult};

pub const SUMMARY_FIELDS: [&str; 10] = [
    "setting",
    "family",
    "reps",
    "failed",
    "theta_error",
    "deviance",
    "angle_deg",
    "mr_pct",
    "fp_pct",
    "time_s",
];

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Fitted rank (defaults to the setting's true rank).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    /// Fraction trimmed from each end before averaging.
    #[arg(long, default_value_t = 0.1)]
    pub trim: f64,
    /// Master seed; repetition seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the summary here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write one row of metrics per successful repetition.
    #[arg(long)]
    pub per_rep: Option<PathBuf>,
    /// Read options from a key=value file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Seed of repetition `i`.
pub fn rep_seed(master: u64, i: usize) -> u64 {
    let mut z = master.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Rep {
    index: usize,
    seed: u64,
    metrics: EvalResult,
    seconds: f64,
}

fn one_rep(args: &BenchArgs, i: usize) -> CliResult<Rep> {
    let seed = rep_seed(args.seed, i);
    let spec = args.sim.spec(seed);
    let (data, truth) = generate_data(&spec)?;
    let family = args.sim.family;
    let rank = args.rank.unwrap_or(args.sim.setting.rank());
    let plan = args
        .solve
        .plan(family, rank, spec.p, seed, args.sim.setting.fit_sparsity(family))?;
    let start = Instant::now();
    let report = plan.run(&data)?;
    let seconds = start.elapsed().as_secs_f64();
    let metrics = evaluate(&data, family, &report.model, &truth, spec.q_mode)?;
    Ok(Rep {
        index: i,
        seed,
        metrics,
        seconds,
    })
}

pub fn run(args: BenchArgs) -> CliResult<()> {
    if args.reps == 0 {
        return Err(CliError::Config("--reps must be at least 1".into()));
    }
    if !(0.0..0.5).contains(&args.trim) {
        return Err(CliError::Config("--trim must lie in [0, 0.5)".into()));
    }
    // configuration problems surface once rather than per repetition
    let spec = args.sim.spec(args.seed);
    spec.validate()?;
    let family = args.sim.family;
    let rank = args.rank.unwrap_or(args.sim.setting.rank());
    args.solve
        .plan(family, rank, spec.p, args.seed, args.sim.setting.fit_sparsity(family))?;

    let results: Vec<CliResult<Rep>> = (0..args.reps).into_par_iter().map(|i| one_rep(&args, i)).collect();
    let mut reps = Vec::new();
    let mut failed = 0usize;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => reps.push(rep),
            Err(e) => {
                log::warn!("repetition {i} failed: {e}");
                failed += 1;
            }
        }
    }
    if reps.is_empty() {
        return Err(CliError::Numerical(format!("all {} repetitions failed", args.reps)));
    }
    let summary = |f: &dyn Fn(&Rep) -> f64| -> CliResult<String> {
        let v: Vec<f64> = reps.iter().map(f).collect();
        Ok(format_value(trimmed_mean(&v, args.trim)?))
    };
    let values = vec![
        args.sim.setting.to_string(),
        family.to_string(),
        args.reps.to_string(),
        failed.to_string(),
        summary(&|r| r.metrics.theta_error)?,
        summary(&|r| r.metrics.deviance)?,
        summary(&|r| r.metrics.max_canonical_angle_deg)?,
        summary(&|r| 100.0 * r.metrics.miss_rate)?,
        summary(&|r| 100.0 * r.metrics.false_positive_rate)?,
        summary(&|r| r.seconds)?,
    ];
    if let Some(path) = &args.per_rep {
        write_per_rep(path, &reps)?;
    }
    let text = csv_row(&SUMMARY_FIELDS, &values);
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_per_rep(path: &std::path::Path, reps: &[Rep]) -> CliResult<()> {
    let mut text = format!("rep,seed,{},time_s\n", EvalResult::FIELDS.join(","));
    for r in reps {
        let vals: Vec<String> = r.metrics.values().iter().map(|v| format_value(*v)).collect();
        text.push_str(&format!("{},{},{},{}\n", r.index, r.seed, vals.join(","), format_value(r.seconds)));
    }
    Ok(std::fs::write(path, text)?)
}
