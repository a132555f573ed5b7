use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use sgpca::io::read_masked_file;
use sgpca::prelude::*;

use crate::output::{self, Manifest};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepChoice {
    /// Universal step when the family has bounded curvature, line search otherwise.
    Auto,
    Universal,
    LineSearch,
    Fixed,
}

/// Solver options shared by `fit` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Element-wise sparsity: fraction of nonzero loadings.
    #[arg(long)]
    pub qe: Option<f64>,
    /// Group-wise sparsity: fraction of variables with a nonzero loading row.
    #[arg(long)]
    pub qg: Option<f64>,
    /// Progressive column screening down to `--qg`; with `--qe`, the surviving
    /// columns are refit element-wise.
    #[arg(long, requires = "qg")]
    pub screen: bool,
    /// Decay rate of the screening schedule.
    #[arg(long, default_value_t = 0.05)]
    pub screen_a: f64,
    #[arg(long, default_value = "outer")]
    pub screen_mode: ScreenMode,
    /// Accelerated solver with backtracking line search.
    #[arg(long)]
    pub accelerate: bool,
    /// Backtracking factor.
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    #[arg(long, default_value_t = 10)]
    pub max_backtracks: usize,
    /// Start each line search from the last accepted step.
    #[arg(long)]
    pub warm_start: bool,
    /// Step rule of the basic solver.
    #[arg(long, value_enum, default_value_t = StepChoice::Auto)]
    pub step_policy: StepChoice,
    /// Step size for `--step-policy fixed`.
    #[arg(long)]
    pub step: Option<f64>,
    /// Random starts (default depends on the family).
    #[arg(long)]
    pub starts: Option<usize>,
    /// Starts continued to convergence.
    #[arg(long)]
    pub survivors: Option<usize>,
    /// Outer iterations of each first-stage start.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_MAX_OUTER)]
    pub max_outer: usize,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_MAX_INNER)]
    pub max_inner: usize,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_TOL)]
    pub tol_outer: f64,
    #[arg(long, default_value_t = SolverConfig::DEFAULT_TOL)]
    pub tol_inner: f64,
    /// Keep the column offsets at zero.
    #[arg(long)]
    pub no_intercept: bool,
}

/// Fully resolved solver setup.
pub struct Plan {
    pub family: Family,
    pub cfg: SolverConfig,
    pub acc: AccelConfig,
    pub screen: Option<ScreenSchedule>,
    pub accelerate: bool,
    pub ms: MultiStartConfig,
    step_name: &'static str,
}

impl SolveArgs {
    /// `default` is used when neither `--qe` nor `--qg` is given.
    pub fn plan(
        &self,
        family: Family,
        rank: usize,
        p: usize,
        seed: u64,
        default: SparsityLevel,
    ) -> CliResult<Plan> {
        let (sparsity, refit) = match (self.screen, self.qe, self.qg) {
            (true, qe, Some(qg)) => (SparsityLevel::group_wise(qg)?, qe),
            (true, _, None) => return Err(CliError::Config("--screen needs --qg".into())),
            (false, Some(_), Some(_)) => {
                return Err(CliError::Config("--qe and --qg are exclusive without --screen".into()))
            }
            (false, Some(qe), None) => (SparsityLevel::element_wise(qe)?, None),
            (false, None, Some(qg)) => (SparsityLevel::group_wise(qg)?, None),
            (false, None, None) => (default, None),
        };
        let acc = AccelConfig {
            eta: self.eta,
            max_backtracks: self.max_backtracks,
            warm_start: self.warm_start,
            ..AccelConfig::default()
        };
        acc.validate()?;
        let (step, step_name) = match self.step_policy {
            StepChoice::Auto if family.universal_step().is_some() => (StepPolicy::Universal, "universal"),
            StepChoice::Auto | StepChoice::LineSearch => (StepPolicy::LineSearch(acc), "line-search"),
            StepChoice::Universal => {
                if family.universal_step().is_none() {
                    return Err(CliError::Config(format!(
                        "the {family} family has unbounded curvature; use --step-policy line-search or fixed"
                    )));
                }
                (StepPolicy::Universal, "universal")
            }
            StepChoice::Fixed => match self.step {
                Some(t) => (StepPolicy::Fixed(t), "fixed"),
                None => return Err(CliError::Config("--step-policy fixed needs --step".into())),
            },
        };
        if self.step.is_some() && self.step_policy != StepChoice::Fixed {
            return Err(CliError::Config("--step only applies to --step-policy fixed".into()));
        }
        let cfg = SolverConfig {
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            tol_outer: self.tol_outer,
            tol_inner: self.tol_inner,
            step,
            seed,
            refit_elementwise: refit,
            intercept: !self.no_intercept,
            ..SolverConfig::new(rank, sparsity)
        };
        cfg.validate()?;
        let screen = if self.screen {
            Some(ScreenSchedule::new(self.screen_a, self.screen_mode, sparsity.q(), p)?)
        } else {
            None
        };
        let mut ms = MultiStartConfig::for_family(family, seed);
        ms.m1 = self.starts.unwrap_or(ms.m1);
        ms.m2 = self.survivors.unwrap_or(ms.m2.min(ms.m1));
        ms.n1 = self.warmup.unwrap_or(ms.n1);
        ms.validate()?;
        Ok(Plan {
            family,
            cfg,
            acc,
            screen,
            accelerate: self.accelerate,
            ms,
            step_name,
        })
    }
}

impl Plan {
    pub fn run(&self, data: &MaskedMatrix) -> CliResult<FitReport> {
        let (family, cfg, acc) = (self.family, &self.cfg, &self.acc);
        let report = match (&self.screen, self.accelerate) {
            (Some(sched), _) => multi_start_fit(data, family, cfg, &self.ms, |d, f, c, init| {
                fit_progressive(d, f, c, acc, sched, init)
            }),
            (None, true) => multi_start_fit(data, family, cfg, &self.ms, |d, f, c, init| {
                fit_accelerated(d, f, c, acc, init)
            }),
            (None, false) => multi_start_fit(data, family, cfg, &self.ms, fit),
        }?;
        Ok(report)
    }

    /// Records every resolved solver option under its flag name.
    pub fn record(&self, m: &mut Manifest) {
        let cfg = &self.cfg;
        match (self.screen.is_some(), cfg.sparsity.mode()) {
            (true, _) => {
                m.set("qg", cfg.sparsity.q());
                m.set_opt("qe", cfg.refit_elementwise);
            }
            (false, SparsityMode::ElementWise) => m.set("qe", cfg.sparsity.q()),
            (false, SparsityMode::GroupWise) => m.set("qg", cfg.sparsity.q()),
        }
        m.set("screen", self.screen.is_some());
        if let Some(s) = &self.screen {
            m.set("screen-a", s.a);
            m.set("screen-mode", s.mode);
        }
        m.set("accelerate", self.accelerate);
        m.set("eta", self.acc.eta);
        m.set("max-backtracks", self.acc.max_backtracks);
        m.set("warm-start", self.acc.warm_start);
        m.set("step-policy", self.step_name);
        if let StepPolicy::Fixed(t) = cfg.step {
            m.set("step", t);
        }
        m.set("starts", self.ms.m1);
        m.set("survivors", self.ms.m2);
        m.set("warmup", self.ms.n1);
        m.set("max-outer", cfg.max_outer);
        m.set("max-inner", cfg.max_inner);
        m.set("tol-outer", cfg.tol_outer);
        m.set("tol-inner", cfg.tol_inner);
        m.set("no-intercept", !cfg.intercept);
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Data matrix as CSV; empty, NA or NaN cells are missing.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "gaussian")]
    pub family: Family,
    #[arg(long)]
    pub rank: usize,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Subtract observed column means before fitting (Gaussian only); they
    /// are added back to the reported offsets.
    #[arg(long)]
    pub center: bool,
    /// The input has a header row.
    #[arg(long)]
    pub header: bool,
    /// Also write the fitted natural parameters.
    #[arg(long)]
    pub emit_theta: bool,
    #[arg(long, default_value = "sgpca_fit")]
    pub out: PathBuf,
    /// Read options from a key=value file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let start = Instant::now();
    if args.center && args.family != Family::Gaussian {
        return Err(CliError::Config("--center is only available for the gaussian family".into()));
    }
    let raw = read_masked_file(&args.input, args.header)?;
    let (n, p) = raw.shape();
    if args.rank == 0 || args.rank > n.min(p) {
        return Err(CliError::Config(format!("--rank must lie in 1..={}", n.min(p))));
    }
    let plan = args.solve.plan(
        args.family,
        args.rank,
        p,
        args.seed,
        SparsityLevel::element_wise(1.0)?,
    )?;
    let (data, means) = if args.center {
        let (d, m) = raw.centered();
        (d, Some(m))
    } else {
        (raw, None)
    };
    data.validate(args.family)?;

    let mut report = plan.run(&data)?;
    if let Some(m) = means {
        report.model.alpha += m;
    }

    output::ensure_dir(&args.out)?;
    write_fit(&args.out, &report, args.emit_theta)?;

    let mut m = Manifest::new("fit");
    m.set("input", args.input.display());
    m.set("input_sha256", output::sha256_file(&args.input)?);
    m.set("family", args.family);
    m.set("rank", args.rank);
    plan.record(&mut m);
    m.set("seed", args.seed);
    m.set("center", args.center);
    m.set("header", args.header);
    m.set("emit-theta", args.emit_theta);
    m.set("out", args.out.display());
    m.set("iterations", report.iterations);
    m.set("converged", report.converged);
    m.set("objective", report.objective);
    m.set("wall_time_s", start.elapsed().as_secs_f64());
    m.write(&args.out)?;

    if report.line_search_failed {
        return Err(CliError::Numerical(
            "line search failed to find an acceptable step; outputs hold the last accepted iterate".into(),
        ));
    }
    log::info!(
        "fit finished: {} iterations, objective {}, converged {}",
        report.iterations,
        report.objective,
        report.converged
    );
    Ok(())
}

fn write_fit(dir: &Path, report: &FitReport, emit_theta: bool) -> CliResult<()> {
    let model = &report.model;
    output::write_vector(dir, "alpha.csv", &model.alpha)?;
    output::write_matrix(dir, "V.csv", &model.v)?;
    output::write_matrix(dir, "S.csv", &model.s)?;
    if emit_theta {
        output::write_matrix(dir, "theta.csv", &model.theta())?;
    }
    output::write_trace(dir, &report.objective_trace)?;
    output::write_support(dir, &report.support)
}
