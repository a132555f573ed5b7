//! Outer iteration shared by the plain, accelerated and screened fits.
//!
//! Every iteration takes a gradient step from an extrapolation point `Y`, projects
//! the result onto the constrained factored form with the inner block loop, and
//! (optionally) backtracks the step until the quadratic upper bound holds at the
//! new point. With momentum off `Y` is the current iterate and this reduces to
//! the majorize-minimize scheme.

use std::borrow::Cow;
use std::time::Instant;

use crate::accel::{momentum_weight, screen_quota, AccelConfig, ScreenSchedule};
use crate::data::{grad_theta, masked_nll, FactorModel, MaskedMatrix};
use crate::error::{shape_err, Error, Result};
use crate::family::Family;
use crate::linalg;
use crate::solver::{gradient_step, inner_loop_with, FitReport, InnerOutcome, Iterate, SolverConfig, Support};
use crate::threshold::{rank_descending, row_norms, SparsityMode};
use crate::{Mat, Vector};

#[derive(Debug, Clone, Copy)]
pub(crate) enum StepRule {
    Fixed(f64),
    Backtracking(AccelConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Momentum {
    Off,
    Nesterov,
}

pub(crate) struct Options {
    pub step: StepRule,
    pub momentum: Momentum,
    pub screen: Option<ScreenSchedule>,
}

pub(crate) struct Outcome {
    /// Factors on the surviving columns.
    pub model: FactorModel,
    pub active: Vec<usize>,
    /// Intercepts in original coordinates; frozen for eliminated columns.
    pub alpha_full: Vector,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    pub line_search_failed: bool,
}

impl Outcome {
    pub fn full_model(&self) -> FactorModel {
        let p = self.alpha_full.len();
        let r = self.model.rank();
        let mut alpha = self.alpha_full.clone();
        let mut s = Mat::zeros(p, r);
        for (l, &j) in self.active.iter().enumerate() {
            alpha[j] = self.model.alpha[l];
            s.row_mut(j).copy_from(&self.model.s.row(l));
        }
        FactorModel {
            alpha,
            v: self.model.v.clone(),
            s,
        }
    }

    pub fn into_report(
        self,
        data: &MaskedMatrix,
        family: Family,
        mode: SparsityMode,
        start: Instant,
    ) -> Result<FitReport> {
        let mut model = self.full_model();
        model.normalize_signs();
        let objective = masked_nll(data, family, &model.theta()).unwrap_or(f64::INFINITY);
        Ok(FitReport {
            support: Support::of(&model.s, mode),
            model,
            objective_trace: self.trace,
            objective,
            iterations: self.iterations,
            converged: self.converged,
            wall_time: start.elapsed().as_secs_f64(),
            rank_deficient: self.rank_deficient,
            line_search_failed: self.line_search_failed,
        })
    }
}

pub(crate) fn check_init(data: &MaskedMatrix, cfg: &SolverConfig, init: &FactorModel) -> Result<()> {
    init.check_shapes()?;
    if (init.nrows(), init.ncols()) != data.shape() {
        return Err(shape_err("initial model", data.shape(), (init.nrows(), init.ncols())));
    }
    if init.rank() != cfg.rank {
        return Err(Error::Config(format!(
            "initial model has rank {}, configuration asks for {}",
            init.rank(),
            cfg.rank
        )));
    }
    if init.orthonormality_error() > 1e-8 {
        return Err(Error::Config("initial V must have orthonormal columns".into()));
    }
    Ok(())
}

fn restrict_cols<'a>(m: &'a Mat, keep: Option<&[usize]>) -> Cow<'a, Mat> {
    match keep {
        None => Cow::Borrowed(m),
        Some(k) => Cow::Owned(m.select_columns(k)),
    }
}

fn restrict_data<'a>(d: &'a MaskedMatrix, keep: Option<&[usize]>) -> Cow<'a, MaskedMatrix> {
    match keep {
        None => Cow::Borrowed(d),
        Some(k) => Cow::Owned(d.select_columns(k)),
    }
}

fn restrict_model(m: &FactorModel, keep: &[usize]) -> FactorModel {
    FactorModel {
        alpha: m.alpha.select_rows(keep),
        v: m.v.clone(),
        s: m.s.select_rows(keep),
    }
}

fn combine(theta_cur: &Mat, nu: &Mat, weight: f64) -> Mat {
    if weight == 1.0 {
        nu.clone()
    } else {
        theta_cur * (1.0 - weight) + nu * weight
    }
}

struct Projection {
    inner: InnerOutcome,
    /// Surviving local columns, or `None` when nothing was eliminated.
    keep: Option<Vec<usize>>,
}

fn project(
    xi: &Mat,
    warm: &FactorModel,
    cfg: &SolverConfig,
    screen: Option<&ScreenSchedule>,
    k: usize,
    p: usize,
) -> Projection {
    let sparsity = cfg.sparsity;
    match screen {
        None => Projection {
            inner: inner_loop_with(xi, warm, cfg.max_inner, cfg.tol_inner, cfg.seed, cfg.intercept, false, &mut |c, _| {
                sparsity.apply(&c)
            }),
            keep: None,
        },
        Some(sched) => {
            let d = warm.ncols();
            let mut dead = vec![false; d];
            let inner = inner_loop_with(xi, warm, cfg.max_inner, cfg.tol_inner, cfg.seed, cfg.intercept, false, &mut |mut c, t| {
                let alive = dead.iter().filter(|&&x| !x).count();
                let quota = screen_quota(t, k, sched, p).min(alive).max(1);
                let mut scores = row_norms(&c);
                for (i, s) in scores.iter_mut().enumerate() {
                    if dead[i] {
                        *s = -1.0;
                    }
                }
                for &i in &rank_descending(&scores)[quota..] {
                    c.row_mut(i).fill(0.0);
                    dead[i] = true;
                }
                c
            });
            let keep: Vec<usize> = (0..d).filter(|&i| !dead[i]).collect();
            Projection {
                inner,
                keep: (keep.len() < d).then_some(keep),
            }
        }
    }
}

struct Trial {
    proj: Projection,
    nu_new: Mat,
    theta_new: Mat,
    tau: f64,
    trials: usize,
}

pub(crate) fn run(
    data: &MaskedMatrix,
    family: Family,
    cfg: &SolverConfig,
    init: FactorModel,
    opts: Options,
    observer: &mut dyn FnMut(&Iterate<'_>),
) -> Result<Outcome> {
    cfg.validate()?;
    check_init(data, cfg, &init)?;
    data.validate(family)?;
    let p = data.ncols();

    let mut sched = opts.screen;
    let mut model = init;
    if sched.is_none() {
        model.s = cfg.sparsity.apply(&model.s);
    }
    let mut active: Vec<usize> = (0..p).collect();
    if let Some(s) = sched.as_mut() {
        s.active_set = active.clone();
    }
    let target = sched.as_ref().map(|s| s.target(p));
    let mut alpha_full = model.alpha.clone();
    let mut cur: Cow<MaskedMatrix> = Cow::Borrowed(data);

    let mut theta_model = model.theta();
    let mut f = masked_nll(&cur, family, &theta_model)?;
    if !f.is_finite() {
        return Err(Error::Numerical("objective at the starting point is not finite".into()));
    }
    let mut trace = vec![f];
    let mut theta_cur = theta_model.clone();
    let mut nu_cur = theta_model.clone();

    let tau0 = match opts.step {
        StepRule::Fixed(t) => t,
        StepRule::Backtracking(acc) => acc.initial_step(data),
    };
    let mut tau_prev = tau0;
    let (mut k, mut j) = (0usize, 0usize);
    let (mut converged, mut ls_failed, mut deficient) = (false, false, false);

    while k < cfg.max_outer {
        k += 1;
        j += 1;
        let weight = match opts.momentum {
            Momentum::Off => 1.0,
            Momentum::Nesterov => momentum_weight(j),
        };
        let y = combine(&theta_cur, &nu_cur, weight);
        let grad = grad_theta(&cur, family, &y)?;
        let f_y = masked_nll(&cur, family, &y)?;

        let start_tau = match opts.step {
            StepRule::Backtracking(acc) if acc.warm_start => tau_prev / acc.eta,
            _ => tau0,
        };
        let mut trials = 0usize;
        let accepted = loop {
            trials += 1;
            let tau = match opts.step {
                StepRule::Fixed(t) => t,
                StepRule::Backtracking(acc) => start_tau * acc.eta.powi(trials as i32),
            };
            let xi = gradient_step(&nu_cur, &grad, tau / weight);
            let proj = project(&xi, &model, cfg, sched.as_ref(), k, p);
            let nu_new = proj.inner.model.theta();
            let theta_new = combine(&theta_cur, &nu_new, weight);
            let trial = Trial {
                proj,
                nu_new,
                theta_new,
                tau,
                trials,
            };
            match opts.step {
                StepRule::Fixed(_) => break Some(trial),
                StepRule::Backtracking(acc) => {
                    let keep = trial.proj.keep.as_deref();
                    let d = restrict_data(&cur, keep);
                    let f_y_kept = match keep {
                        None => f_y,
                        Some(_) => masked_nll(&d, family, &restrict_cols(&y, keep))?,
                    };
                    if upper_bound_holds(
                        &d,
                        family,
                        f_y_kept,
                        &restrict_cols(&y, keep),
                        &restrict_cols(&grad, keep),
                        &restrict_cols(&trial.theta_new, keep),
                        weight,
                        tau,
                    ) {
                        break Some(trial);
                    }
                    if trials > acc.max_backtracks {
                        break None;
                    }
                }
            }
        };

        let can_restart = opts.momentum == Momentum::Nesterov && weight < 1.0;
        let Some(trial) = accepted else {
            if can_restart {
                restart(&mut theta_cur, &mut nu_cur, &theta_model, &mut j, &mut k);
                continue;
            }
            ls_failed = true;
            log::warn!("line search failed at outer iteration {k}");
            break;
        };

        let keep = trial.proj.keep.clone();
        let kept = keep.as_deref();
        let d = restrict_data(&cur, kept);
        let f_nu = match opts.step {
            StepRule::Fixed(_) => {
                let v = masked_nll(&d, family, &restrict_cols(&trial.nu_new, kept))?;
                if !v.is_finite() {
                    return Err(Error::Numerical(format!("objective diverged at outer iteration {k}")));
                }
                v
            }
            StepRule::Backtracking(_) => masked_nll(&d, family, &restrict_cols(&trial.nu_new, kept))
                .ok()
                .filter(|v| v.is_finite())
                .unwrap_or(f64::INFINITY),
        };
        let theta_prev_kept = restrict_cols(&theta_model, kept).into_owned();
        let f_prev = match kept {
            None => f,
            Some(_) => masked_nll(&d, family, &theta_prev_kept)?,
        };
        if can_restart && !(f_nu <= f_prev) {
            restart(&mut theta_cur, &mut nu_cur, &theta_model, &mut j, &mut k);
            continue;
        }
        if !f_nu.is_finite() {
            return Err(Error::Numerical(format!("objective diverged at outer iteration {k}")));
        }

        // commit
        deficient |= trial.proj.inner.rank_deficient;
        let mut new_model = trial.proj.inner.model;
        let (y_kept, grad_kept) = (restrict_cols(&y, kept).into_owned(), restrict_cols(&grad, kept).into_owned());
        let theta_new = restrict_cols(&trial.theta_new, kept).into_owned();
        let nu_new = restrict_cols(&trial.nu_new, kept).into_owned();
        if let Some(keep) = kept {
            let mut alive = vec![false; active.len()];
            for &l in keep {
                alive[l] = true;
            }
            for (l, &orig) in active.iter().enumerate() {
                if !alive[l] {
                    alpha_full[orig] = new_model.alpha[l];
                }
            }
            active = keep.iter().map(|&l| active[l]).collect();
            new_model = restrict_model(&new_model, keep);
            if let Some(s) = sched.as_mut() {
                s.active_set = active.clone();
            }
        }
        drop(d);
        if let Some(keep) = kept {
            cur = Cow::Owned(cur.select_columns(keep));
        }
        model = new_model;
        trace.push(f_nu);
        observer(&Iterate {
            k,
            model: &model,
            objective: f_nu,
            active: &active,
            step: trial.tau,
            trials: trial.trials,
            momentum: weight,
            momentum_index: j,
            data: &cur,
            y: &y_kept,
            grad_y: &grad_kept,
            theta_new: &theta_new,
        });

        let screening_done = target.is_none_or(|t| active.len() <= t);
        let done = screening_done
            && linalg::max_abs_diff(&nu_new, &theta_prev_kept) <= cfg.tol_outer
            && (f_nu - f_prev).abs() <= cfg.tol_outer;
        f = f_nu;
        theta_model = nu_new.clone();
        theta_cur = theta_new;
        nu_cur = nu_new;
        tau_prev = trial.tau;
        if done {
            converged = true;
            break;
        }
    }

    Ok(Outcome {
        model,
        active,
        alpha_full,
        trace,
        iterations: k,
        converged,
        rank_deficient: deficient,
        line_search_failed: ls_failed,
    })
}

fn restart(theta_cur: &mut Mat, nu_cur: &mut Mat, theta_model: &Mat, j: &mut usize, k: &mut usize) {
    *theta_cur = theta_model.clone();
    *nu_cur = theta_model.clone();
    *j = 0;
    *k -= 1;
}

/// `f(Θ_new) ≤ f(Y) + ⟨∇f(Y), Θ_new − Y⟩ + θ/(2τ)‖Θ_new − Y‖²`.
#[allow(clippy::too_many_arguments)]
fn upper_bound_holds(
    data: &MaskedMatrix,
    family: Family,
    f_y: f64,
    y: &Mat,
    grad: &Mat,
    theta_new: &Mat,
    weight: f64,
    tau: f64,
) -> bool {
    let Ok(f_new) = masked_nll(data, family, theta_new) else {
        return false;
    };
    if !f_new.is_finite() {
        return false;
    }
    let diff = theta_new - y;
    let bound = f_y + grad.dot(&diff) + weight / (2.0 * tau) * diff.norm_squared();
    f_new <= bound + 1e-12 * (1.0 + f_y.abs())
}
