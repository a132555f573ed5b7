//! Two-stage random restarts: many short runs, then only the best few are
//! continued to convergence.

use rayon::prelude::*;

use crate::data::{FactorModel, MaskedMatrix};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::linalg::{gaussian, orthonormalize, stream};
use crate::solver::{FitReport, SolverConfig};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiStartConfig {
    /// Random starts in the first stage.
    pub m1: usize,
    /// Starts continued to convergence.
    pub m2: usize,
    /// Outer iterations of each first-stage run.
    pub n1: usize,
    pub seed: u64,
}

impl MultiStartConfig {
    pub fn for_family(family: Family, seed: u64) -> Self {
        let (m1, m2) = match family {
            Family::Gaussian => (10, 2),
            Family::Bernoulli => (20, 3),
            Family::Poisson | Family::ExponentialGamma => (30, 5),
        };
        Self { m1, m2, n1: 2, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m2 == 0 || self.m2 > self.m1 {
            return Err(Error::Config(format!(
                "survivors ({}) must lie in 1..={} starts",
                self.m2, self.m1
            )));
        }
        if self.n1 == 0 {
            return Err(Error::Config("warm-up iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// `α = 0`, `V` from the QR of a Gaussian draw, `S` a Gaussian draw scaled by 0.1.
pub fn random_init(n: usize, p: usize, r: usize, seed: u64) -> Result<FactorModel> {
    start_init(n, p, r, seed, 0)
}

/// Starting point number `index` of a multi-start run; index 0 is [`random_init`].
pub fn start_init(n: usize, p: usize, r: usize, seed: u64, index: u64) -> Result<FactorModel> {
    if r == 0 || r > n.min(p) {
        return Err(Error::Config(format!("rank {r} must lie in 1..={}", n.min(p))));
    }
    let mut rng = stream(seed, "init", index);
    let v = orthonormalize(&gaussian(n, r, &mut rng));
    let s = gaussian(p, r, &mut rng) * 0.1;
    FactorModel::new(Vector::zeros(p), v, s)
}

/// Runs `fit_fn` for `ms.n1` outer iterations from each of `ms.m1` random
/// starts, continues the `ms.m2` lowest objectives with the full
/// configuration and returns the best. Ties go to the lower start index.
/// Runs execute in parallel; the result does not depend on scheduling.
pub fn multi_start_fit<F>(
    data: &MaskedMatrix,
    family: Family,
    cfg: &SolverConfig,
    ms: &MultiStartConfig,
    fit_fn: F,
) -> Result<FitReport>
where
    F: Fn(&MaskedMatrix, Family, &SolverConfig, FactorModel) -> Result<FitReport> + Sync,
{
    ms.validate()?;
    cfg.validate()?;
    let (n, p) = data.shape();
    let init = |i: usize| start_init(n, p, cfg.rank, ms.seed, i as u64);
    if ms.m1 == 1 {
        return fit_fn(data, family, cfg, init(0)?);
    }

    let short_cfg = SolverConfig {
        max_outer: ms.n1,
        ..cfg.clone()
    };
    let short: Vec<Result<FitReport>> = (0..ms.m1)
        .into_par_iter()
        .map(|i| fit_fn(data, family, &short_cfg, init(i)?))
        .collect();

    let mut failures = Vec::new();
    let mut ranked: Vec<(usize, FitReport)> = Vec::new();
    for (i, r) in short.into_iter().enumerate() {
        match r {
            Ok(rep) => ranked.push((i, rep)),
            Err(e) => failures.push(format!("start {i}: {e}")),
        }
    }
    if ranked.is_empty() {
        return Err(Error::AllStartsFailed(failures));
    }
    for f in &failures {
        log::warn!("{f}");
    }
    ranked.sort_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)));
    ranked.truncate(ms.m2);

    let continued: Vec<(usize, Result<FitReport>)> = ranked
        .into_par_iter()
        .map(|(i, first)| {
            if first.converged {
                return (i, Ok(first));
            }
            let rest = fit_fn(data, family, cfg, first.model.clone()).map(|mut rest| {
                let mut trace = first.objective_trace.clone();
                trace.extend_from_slice(&rest.objective_trace[1..]);
                rest.objective_trace = trace;
                rest.iterations += first.iterations;
                rest.wall_time += first.wall_time;
                rest.rank_deficient |= first.rank_deficient;
                rest
            });
            (i, rest)
        })
        .collect();

    let mut best: Option<(usize, FitReport)> = None;
    let mut failures = Vec::new();
    for (i, r) in continued {
        match r {
            Ok(rep) => {
                let better = match &best {
                    None => true,
                    Some((bi, b)) => rep.objective < b.objective || (rep.objective == b.objective && i < *bi),
                };
                if better {
                    best = Some((i, rep));
                }
            }
            Err(e) => failures.push(format!("start {i}: {e}")),
        }
    }
    best.map(|(_, r)| r).ok_or(Error::AllStartsFailed(failures))
}
