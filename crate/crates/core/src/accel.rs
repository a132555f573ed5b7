//! Accelerated fitting with backtracking, and progressive column screening.
//!
//! The accelerated fit keeps two sequences: the factored iterate `ν` and a
//! running average `Θ`. Each step extrapolates `Y = (1−θ)Θ + θν`, takes a
//! gradient step of length `τ/θ` from `ν`, projects back onto the constrained
//! factored form and backtracks `τ` until the quadratic upper bound holds at
//! `(1−θ)Θ + θν_new`. If a momentum step would raise the objective of the
//! factored iterate, the momentum is reset and the step retried from the last
//! accepted point; the reported objective therefore never increases.
//!
//! Screening shrinks the number of active columns along the sigmoidal quota
//! `Q = 2p / (1 + exp(a·T))` until the group-sparsity target is reached.
//! Eliminated columns never come back.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::data::{FactorModel, MaskedMatrix};
use crate::engine::{self, Momentum, StepRule};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::solver::{FitReport, Iterate, SolverConfig};
use crate::threshold::{rank_descending, row_norms, SparsityLevel, SparsityMode};
use crate::{Mat, Vector};

/// Starting step of each backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialStep {
    /// `1 / ‖X‖_max` over observed cells.
    InverseMaxAbs,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelConfig {
    /// Backtracking factor in `(0, 1)`.
    pub eta: f64,
    pub max_backtracks: usize,
    pub tau0_policy: InitialStep,
    /// Start each search from the previously accepted step instead of `τ₀`.
    pub warm_start: bool,
}

impl Default for AccelConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            max_backtracks: 10,
            tau0_policy: InitialStep::InverseMaxAbs,
            warm_start: false,
        }
    }
}

impl AccelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("eta = {} must lie in (0, 1)", self.eta)));
        }
        if self.max_backtracks == 0 {
            return Err(Error::Config("max_backtracks must be at least 1".into()));
        }
        if let InitialStep::Fixed(t) = self.tau0_policy {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("initial step {t} must be positive")));
            }
        }
        Ok(())
    }

    /// `τ₀`; falls back to 1 when the data has no nonzero observed entry.
    pub fn initial_step(&self, data: &MaskedMatrix) -> f64 {
        match self.tau0_policy {
            InitialStep::Fixed(t) => t,
            InitialStep::InverseMaxAbs => {
                let m = data.max_abs();
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            }
        }
    }
}

/// `θ_k`: 1 for the first two iterations, then `2/(k+2)`.
pub fn momentum_weight(k: usize) -> f64 {
    assert!(k >= 1, "momentum index starts at 1");
    if k <= 2 {
        1.0
    } else {
        2.0 / (k as f64 + 2.0)
    }
}

/// Which counter drives the screening decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScreenMode {
    Outer,
    Inner,
    Product,
}

impl fmt::Display for ScreenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScreenMode::Outer => "outer",
            ScreenMode::Inner => "inner",
            ScreenMode::Product => "product",
        })
    }
}

impl FromStr for ScreenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outer" => Ok(ScreenMode::Outer),
            "inner" => Ok(ScreenMode::Inner),
            "product" => Ok(ScreenMode::Product),
            other => Err(Error::Config(format!("unknown screening mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenSchedule {
    /// Decay rate, in `[0.01, 0.1]`.
    pub a: f64,
    pub mode: ScreenMode,
    /// Target fraction of nonzero rows.
    pub q_g: f64,
    /// Original indices of the columns still in play.
    pub active_set: Vec<usize>,
}

impl ScreenSchedule {
    pub const DEFAULT_A: f64 = 0.05;

    pub fn new(a: f64, mode: ScreenMode, q_g: f64, p: usize) -> Result<Self> {
        if !(0.01..=0.1).contains(&a) {
            return Err(Error::Config(format!("screening rate a = {a} must lie in [0.01, 0.1]")));
        }
        SparsityLevel::group_wise(q_g)?;
        Ok(Self {
            a,
            mode,
            q_g,
            active_set: (0..p).collect(),
        })
    }

    /// Final number of rows, `ceil(q_g · p)` (at least 1).
    pub fn target(&self, p: usize) -> usize {
        ((self.q_g * p as f64 - 1e-9).ceil() as usize).clamp(1, p.max(1))
    }

    /// Unclamped decay curve `floor(2p / (1 + exp(a·T)))`.
    pub fn decay(&self, t: f64, p: usize) -> usize {
        (2.0 * p as f64 / (1.0 + (self.a * t).exp())).floor() as usize
    }
}

/// Number of rows allowed at inner cycle `t` of outer iteration `k`: the decay
/// curve, floored at the final target and capped by the active count.
pub fn screen_quota(t: usize, k: usize, sched: &ScreenSchedule, p: usize) -> usize {
    let big_t = match sched.mode {
        ScreenMode::Outer => k,
        ScreenMode::Inner => t,
        ScreenMode::Product => k * t,
    } as f64;
    let q = sched.decay(big_t, p).max(sched.target(p));
    q.min(sched.active_set.len())
}

/// Result of one screening step, on the surviving columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenStep {
    pub s: Mat,
    pub alpha: Vector,
    pub data: MaskedMatrix,
    pub active_set: Vec<usize>,
}

/// Keeps the `quota` rows of `s` with largest norm and drops the remaining
/// rows of `s`, entries of `alpha` and columns of `data_active`. The returned
/// active set holds original column indices in their original order.
pub fn progressive_screen_step(
    s: &Mat,
    alpha: &Vector,
    data_active: &MaskedMatrix,
    quota: usize,
    sched: &ScreenSchedule,
) -> Result<ScreenStep> {
    let d = s.nrows();
    if alpha.len() != d || data_active.ncols() != d || sched.active_set.len() != d {
        return Err(Error::Shape(format!(
            "screening: {d} loading rows, {} intercepts, {} data columns, {} active indices",
            alpha.len(),
            data_active.ncols(),
            sched.active_set.len()
        )));
    }
    let quota = quota.clamp(1, d.max(1));
    let mut keep: Vec<usize> = rank_descending(&row_norms(s))[..quota.min(d)].to_vec();
    keep.sort_unstable();
    Ok(ScreenStep {
        s: s.select_rows(&keep),
        alpha: alpha.select_rows(&keep),
        data: data_active.select_columns(&keep),
        active_set: keep.iter().map(|&l| sched.active_set[l]).collect(),
    })
}

/// Accelerated fit with backtracking. `cfg.step` is ignored.
pub fn fit_accelerated(
    data: &MaskedMatrix,
    family: Family,
    cfg: &SolverConfig,
    acc: &AccelConfig,
    init: FactorModel,
) -> Result<FitReport> {
    fit_accelerated_observed(data, family, cfg, acc, init, &mut |_| {})
}

/// [`fit_accelerated`] with a callback after every accepted outer iteration.
pub fn fit_accelerated_observed(
    data: &MaskedMatrix,
    family: Family,
    cfg: &SolverConfig,
    acc: &AccelConfig,
    init: FactorModel,
    observer: &mut dyn FnMut(&Iterate<'_>),
) -> Result<FitReport> {
    acc.validate()?;
    let start = Instant::now();
    let out = engine::run(
        data,
        family,
        cfg,
        init,
        engine::Options {
            step: StepRule::Backtracking(*acc),
            momentum: Momentum::Nesterov,
            screen: None,
        },
        observer,
    )?;
    out.into_report(data, family, cfg.sparsity.mode(), start)
}

/// Accelerated fit in which the loading update screens columns progressively
/// down to `sched.q_g`. The report's loadings are in original coordinates with
/// zero rows for eliminated columns. With `cfg.refit_elementwise` set, the
/// surviving columns are refit under element-wise sparsity afterwards and the
/// two objective traces are concatenated.
pub fn fit_progressive(
    data: &MaskedMatrix,
    family: Family,
    cfg: &SolverConfig,
    acc: &AccelConfig,
    sched: &ScreenSchedule,
    init: FactorModel,
) -> Result<FitReport> {
    fit_progressive_observed(data, family, cfg, acc, sched, init, &mut |_| {})
}

/// [`fit_progressive`] with a callback after every accepted outer iteration of
/// the screening phase.
pub fn fit_progressive_observed(
    data: &MaskedMatrix,
    family: Family,
    cfg: &SolverConfig,
    acc: &AccelConfig,
    sched: &ScreenSchedule,
    init: FactorModel,
    observer: &mut dyn FnMut(&Iterate<'_>),
) -> Result<FitReport> {
    acc.validate()?;
    if cfg.sparsity.mode() != SparsityMode::GroupWise {
        return Err(Error::Config("progressive screening needs group-wise sparsity".into()));
    }
    let start = Instant::now();
    let mut out = engine::run(
        data,
        family,
        cfg,
        init,
        engine::Options {
            step: StepRule::Backtracking(*acc),
            momentum: Momentum::Nesterov,
            screen: Some(sched.clone()),
        },
        observer,
    )?;

    let mut mode = SparsityMode::GroupWise;
    if let Some(q_e) = cfg.refit_elementwise {
        if out.model.rank() <= out.active.len() {
            let sub = data.select_columns(&out.active);
            let refit_cfg = SolverConfig {
                sparsity: SparsityLevel::element_wise(q_e)?,
                refit_elementwise: None,
                ..cfg.clone()
            };
            let refit = engine::run(
                &sub,
                family,
                &refit_cfg,
                out.model.clone(),
                engine::Options {
                    step: StepRule::Backtracking(*acc),
                    momentum: Momentum::Nesterov,
                    screen: None,
                },
                &mut |_| {},
            )?;
            out.trace.extend(refit.trace);
            out.iterations += refit.iterations;
            out.converged = refit.converged;
            out.rank_deficient |= refit.rank_deficient;
            out.line_search_failed |= refit.line_search_failed;
            out.model = refit.model;
            mode = SparsityMode::ElementWise;
        } else {
            log::warn!(
                "skipping element-wise refit: {} surviving columns is below rank {}",
                out.active.len(),
                out.model.rank()
            );
        }
    }
    out.into_report(data, family, mode, start)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_examples() {
        assert_eq!(momentum_weight(1), 1.0);
        assert_eq!(momentum_weight(2), 1.0);
        assert!((momentum_weight(3) - 0.4).abs() < 1e-15);
        // the two leading unit weights break the chain only at k = 3
        for k in 4..=10_000 {
            let (t, tp) = (momentum_weight(k), momentum_weight(k - 1));
            assert!((1.0 - t) / (t * t) <= 1.0 / (tp * tp), "k = {k}");
        }
        let plain = |k: usize| 2.0 / (k as f64 + 2.0);
        for k in 2..=10_000 {
            assert!((1.0 - plain(k)) / plain(k).powi(2) <= 1.0 / plain(k - 1).powi(2));
        }
    }

    #[test]
    fn quota_examples() {
        let sched = ScreenSchedule::new(0.05, ScreenMode::Outer, 0.01, 1000).unwrap();
        assert_eq!(sched.decay(0.0, 1000), 1000);
        assert_eq!(screen_quota(1, 20, &sched, 1000), 537);
        assert_eq!(screen_quota(1, 100_000, &sched, 1000), 10);

        let inner = ScreenSchedule {
            mode: ScreenMode::Inner,
            ..sched.clone()
        };
        assert_eq!(screen_quota(20, 1, &inner, 1000), 537);
        let product = ScreenSchedule {
            mode: ScreenMode::Product,
            ..sched.clone()
        };
        assert_eq!(screen_quota(4, 5, &product, 1000), 537);

        // capped by the active count
        let small = ScreenSchedule {
            active_set: (0..50).collect(),
            ..sched
        };
        assert_eq!(screen_quota(1, 1, &small, 1000), 50);
    }

    #[test]
    fn quota_is_nonincreasing() {
        let sched = ScreenSchedule::new(0.03, ScreenMode::Outer, 0.05, 300).unwrap();
        let mut prev = usize::MAX;
        for k in 1..2000 {
            let q = screen_quota(1, k, &sched, 300);
            assert!(q <= prev);
            assert!(q >= 15);
            prev = q;
        }
        assert_eq!(prev, 15);
    }

    #[test]
    fn schedule_validation() {
        assert!(ScreenSchedule::new(0.2, ScreenMode::Outer, 0.1, 10).is_err());
        assert!(ScreenSchedule::new(0.05, ScreenMode::Outer, 0.0, 10).is_err());
        assert!("sideways".parse::<ScreenMode>().is_err());
        assert_eq!("product".parse::<ScreenMode>().unwrap(), ScreenMode::Product);
    }

    fn toy(d: usize) -> (Mat, Vector, MaskedMatrix, ScreenSchedule) {
        let s = Mat::from_fn(d, 2, |i, j| ((i * 3 + j * 5) % 7) as f64 * 0.1);
        let alpha = Vector::from_fn(d, |i, _| i as f64);
        let data = MaskedMatrix::fully_observed(Mat::from_fn(3, d, |i, j| (10 * j + i) as f64));
        let sched = ScreenSchedule::new(0.05, ScreenMode::Outer, 0.1, d).unwrap();
        (s, alpha, data, sched)
    }

    #[test]
    fn screen_step_full_quota_is_identity() {
        let (s, alpha, data, sched) = toy(5);
        let out = progressive_screen_step(&s, &alpha, &data, 5, &sched).unwrap();
        assert_eq!(out.s, s);
        assert_eq!(out.alpha, alpha);
        assert_eq!(out.data, data);
        assert_eq!(out.active_set, sched.active_set);
    }

    #[test]
    fn screen_step_single_dominant_row() {
        let s = Mat::from_row_slice(4, 2, &[0.1, 0.0, 0.0, 0.2, 5.0, -3.0, 0.3, 0.3]);
        let (_, _, _, mut sched) = toy(4);
        sched.active_set = vec![2, 5, 7, 11];
        let data = MaskedMatrix::fully_observed(Mat::from_fn(3, 4, |i, j| (10 * j + i) as f64));
        let out = progressive_screen_step(&s, &Vector::zeros(4), &data, 1, &sched).unwrap();
        assert_eq!(out.active_set, vec![7]);
        assert_eq!(out.s, Mat::from_row_slice(1, 2, &[5.0, -3.0]));
        assert_eq!(out.data.values().column(0), data.values().column(2));
        // quota 0 clamps to 1
        let out0 = progressive_screen_step(&s, &Vector::zeros(4), &data, 0, &sched).unwrap();
        assert_eq!(out0.active_set, vec![7]);
    }

    #[test]
    fn screen_steps_compose() {
        // row norms strictly decreasing with the index pattern below
        let norms = [0.5, 3.0, 1.0, 6.0, 2.0, 4.0];
        let s = Mat::from_fn(6, 1, |i, _| norms[i]);
        let (_, _, data, _) = toy(6);
        let sched = ScreenSchedule::new(0.05, ScreenMode::Outer, 0.1, 6).unwrap();
        let alpha = Vector::zeros(6);
        let first = progressive_screen_step(&s, &alpha, &data, 4, &sched).unwrap();
        let sched2 = ScreenSchedule {
            active_set: first.active_set.clone(),
            ..sched.clone()
        };
        let second = progressive_screen_step(&first.s, &first.alpha, &first.data, 2, &sched2).unwrap();
        let direct = progressive_screen_step(&s, &alpha, &data, 2, &sched).unwrap();
        assert_eq!(second.active_set, direct.active_set);
        assert_eq!(second.active_set, vec![3, 5]);
        for (l, &orig) in second.active_set.iter().enumerate() {
            assert_eq!(second.data.values().column(l), data.values().column(orig));
        }
    }

    #[test]
    fn accel_config_validation() {
        let ok = AccelConfig::default();
        assert!(ok.validate().is_ok());
        assert!(AccelConfig { eta: 1.0, ..ok }.validate().is_err());
        assert!(AccelConfig { max_backtracks: 0, ..ok }.validate().is_err());
        assert!(AccelConfig {
            tau0_policy: InitialStep::Fixed(-1.0),
            ..ok
        }
        .validate()
        .is_err());
        let zero = MaskedMatrix::fully_observed(Mat::zeros(2, 2));
        assert_eq!(ok.initial_step(&zero), 1.0);
        let x = MaskedMatrix::fully_observed(Mat::from_element(2, 2, -4.0));
        assert_eq!(ok.initial_step(&x), 0.25);
    }
}
