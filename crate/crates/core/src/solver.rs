//! Majorize-minimize fitting with block-coordinate inner updates.
//!
//! Each outer iteration linearizes the masked loss at the current `Θ` and adds
//! a proximal term `ρ/2 ‖Θ − Θ_prev‖²`. Completing the square turns the
//! subproblem into `min ½‖1ₙαᵀ + V Sᵀ − Ξ‖²` with `Ξ = Θ_prev − ∇l(Θ_prev)/ρ`,
//! subject to `VᵀV = I` and the sparsity constraint on `S`. That problem is
//! solved by cycling three exact block updates:
//!
//! - `α`: column means of `Ξ − V Sᵀ`;
//! - `S`: quantile thresholding of `(Ξ − 1ₙαᵀ)ᵀ V`;
//! - `V`: the Procrustes rotation of `(Ξ − 1ₙαᵀ) S`.
//!
//! With `ρ ≥ sup b''` the surrogate majorizes the loss and the objective never
//! increases.

use std::time::Instant;

use crate::accel::AccelConfig;
use crate::data::{grad_theta, FactorModel, MaskedMatrix};
use crate::engine::{self, Momentum, StepRule};
use crate::error::{shape_err, Error, Result};
use crate::family::Family;
use crate::linalg;
use crate::threshold::{self, SparsityLevel, SparsityMode};
use crate::{Mat, Vector};

/// How the step size `τ = 1/ρ` of each outer iteration is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// `τ = 1 / sup b''`; only for families with bounded curvature.
    Universal,
    Fixed(f64),
    /// Backtracking until the surrogate majorizes the loss at the new iterate.
    LineSearch(AccelConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rank: usize,
    pub sparsity: SparsityLevel,
    pub max_outer: usize,
    pub max_inner: usize,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub step: StepPolicy,
    /// Seeds the orthonormal completion of rank-deficient rotations.
    pub seed: u64,
    /// After progressive screening, refit the surviving columns with this
    /// element-wise level.
    pub refit_elementwise: Option<f64>,
    /// Estimate the column offsets `α`; when off, `α` stays at its initial value.
    pub intercept: bool,
}

impl SolverConfig {
    pub const DEFAULT_MAX_OUTER: usize = 500;
    pub const DEFAULT_MAX_INNER: usize = 50;
    pub const DEFAULT_TOL: f64 = 1e-6;

    pub fn new(rank: usize, sparsity: SparsityLevel) -> Self {
        Self {
            rank,
            sparsity,
            max_outer: Self::DEFAULT_MAX_OUTER,
            max_inner: Self::DEFAULT_MAX_INNER,
            tol_outer: Self::DEFAULT_TOL,
            tol_inner: Self::DEFAULT_TOL,
            step: StepPolicy::Universal,
            seed: 0,
            refit_elementwise: None,
            intercept: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.tol_outer >= 0.0 && self.tol_inner >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        match self.step {
            StepPolicy::Fixed(tau) if !(tau > 0.0 && tau.is_finite()) => {
                return Err(Error::Config(format!("fixed step {tau} must be positive")))
            }
            StepPolicy::LineSearch(acc) => acc.validate()?,
            _ => {}
        }
        if let Some(q) = self.refit_elementwise {
            SparsityLevel::element_wise(q)?;
        }
        Ok(())
    }
}

/// Nonzero pattern of the fitted loadings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Support {
    /// Row-major `(variable, component)` positions.
    Elements(Vec<(usize, usize)>),
    /// Variables with a nonzero loading row.
    Rows(Vec<usize>),
}

impl Support {
    pub fn of(s: &Mat, mode: SparsityMode) -> Self {
        match mode {
            SparsityMode::ElementWise => Support::Elements(threshold::nonzero_entries(s)),
            SparsityMode::GroupWise => Support::Rows(threshold::nonzero_rows(s)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Support::Elements(e) => e.len(),
            Support::Rows(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub model: FactorModel,
    /// Objective after each outer iteration; entry 0 is the starting point.
    pub objective_trace: Vec<f64>,
    /// Masked negative log-likelihood of `model` on the full data.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub support: Support,
    pub wall_time: f64,
    /// Some rotation step had to complete a rank-deficient direction.
    pub rank_deficient: bool,
    /// Backtracking exhausted its budget; the last accepted iterate is returned.
    pub line_search_failed: bool,
}

/// One accepted outer iteration, as seen by an observer.
pub struct Iterate<'a> {
    pub k: usize,
    /// The factored iterate, on the active columns.
    pub model: &'a FactorModel,
    pub objective: f64,
    /// Original indices of the active columns.
    pub active: &'a [usize],
    /// Step size used by the accepted trial.
    pub step: f64,
    /// Number of trials taken, including the accepted one.
    pub trials: usize,
    pub momentum: f64,
    /// Iterations since the last momentum restart, starting at 1.
    pub momentum_index: usize,
    /// Active data, extrapolation point `Y`, `∇l(Y)` and the combined iterate
    /// `(1−θ)Θ + θν`; enough to re-check the acceptance test.
    pub data: &'a MaskedMatrix,
    pub y: &'a Mat,
    pub grad_y: &'a Mat,
    pub theta_new: &'a Mat,
}

/// `Ξ = Θ + (X − H∘g⁻¹(Θ))/ρ`, a gradient step of length `1/ρ`.
pub fn xi_update(data: &MaskedMatrix, family: Family, theta_prev: &Mat, rho: f64) -> Result<Mat> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho = {rho} must be positive")));
    }
    let g = grad_theta(data, family, theta_prev)?;
    Ok(gradient_step(theta_prev, &g, 1.0 / rho))
}

pub(crate) fn gradient_step(point: &Mat, grad: &Mat, step: f64) -> Mat {
    point - grad * step
}

/// `α = (1/n)(Ξ − V Sᵀ)ᵀ 1ₙ`.
pub fn alpha_step(xi: &Mat, v: &Mat, s: &Mat) -> Result<Vector> {
    let (n, p) = xi.shape();
    if v.nrows() != n || s.nrows() != p || v.ncols() != s.ncols() {
        return Err(Error::Shape(format!(
            "alpha step: Ξ is {n}x{p}, V is {}x{}, S is {}x{}",
            v.nrows(),
            v.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    let resid = xi - v * s.transpose();
    Ok(resid.row_mean().transpose())
}

/// Unthresholded least-squares loadings `(Ξᵀ − α1ₙᵀ) V`.
pub fn loading_candidate(xi: &Mat, alpha: &Vector, v: &Mat) -> Result<Mat> {
    let (n, p) = xi.shape();
    if alpha.len() != p || v.nrows() != n {
        return Err(shape_err("loading candidate", (n, p), (v.nrows(), alpha.len())));
    }
    Ok(centered(xi, alpha).transpose() * v)
}

/// Thresholded loadings `Θ#((Ξᵀ − α1ₙᵀ) V)`.
pub fn s_step(xi: &Mat, alpha: &Vector, v: &Mat, sparsity: &SparsityLevel) -> Result<Mat> {
    Ok(sparsity.apply(&loading_candidate(xi, alpha, v)?))
}

/// Rotation step: `V = P Qᵀ` from the thin SVD `(Ξ − 1ₙαᵀ) S = P D Qᵀ`.
/// The flag reports that some direction had to be completed arbitrarily.
pub fn v_step(xi: &Mat, alpha: &Vector, s: &Mat, seed: u64) -> Result<(Mat, bool)> {
    let (n, p) = xi.shape();
    if alpha.len() != p || s.nrows() != p {
        return Err(shape_err("rotation step", (p, s.ncols()), s.shape()));
    }
    if s.ncols() > n {
        return Err(Error::Shape(format!("rank {} exceeds {n} rows", s.ncols())));
    }
    Ok(linalg::procrustes(&(centered(xi, alpha) * s), seed))
}

fn centered(xi: &Mat, alpha: &Vector) -> Mat {
    let mut c = xi.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-alpha[j]);
    }
    c
}

/// `½‖1ₙαᵀ + V Sᵀ − Ξ‖²_F`.
pub fn surrogate_objective(xi: &Mat, model: &FactorModel) -> f64 {
    0.5 * (model.theta() - xi).norm_squared()
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub model: FactorModel,
    pub cycles: usize,
    /// Surrogate objective at the start and after every cycle.
    pub surrogate_trace: Vec<f64>,
    pub rank_deficient: bool,
}

/// Cycles α → S → V from `init` until every block moves by at most
/// `cfg.tol_inner` (max-norm) or `cfg.max_inner` cycles have run.
pub fn inner_loop(xi: &Mat, init: &FactorModel, cfg: &SolverConfig) -> Result<InnerOutcome> {
    init.check_shapes()?;
    if xi.shape() != (init.nrows(), init.ncols()) {
        return Err(shape_err("Ξ", (init.nrows(), init.ncols()), xi.shape()));
    }
    let sparsity = cfg.sparsity;
    Ok(inner_loop_with(
        xi,
        init,
        cfg.max_inner,
        cfg.tol_inner,
        cfg.seed,
        cfg.intercept,
        true,
        &mut |cand, _| sparsity.apply(&cand),
    ))
}

/// Inner loop with a caller-supplied loading update. `s_update` receives the
/// unthresholded candidate and the 1-based cycle index.
pub(crate) fn inner_loop_with(
    xi: &Mat,
    init: &FactorModel,
    max_inner: usize,
    tol_inner: f64,
    seed: u64,
    fit_alpha: bool,
    track_surrogate: bool,
    s_update: &mut dyn FnMut(Mat, usize) -> Mat,
) -> InnerOutcome {
    let mut model = init.clone();
    let mut trace = Vec::new();
    if track_surrogate {
        trace.push(surrogate_objective(xi, &model));
    }
    let mut deficient = false;
    let mut cycles = 0;
    // column means of Ξ, reused by every α update
    let xi_mean = xi.row_mean().transpose();
    for t in 1..=max_inner {
        cycles = t;
        let alpha = if fit_alpha {
            let v_mean = model.v.row_mean().transpose();
            &xi_mean - &model.s * v_mean
        } else {
            model.alpha.clone()
        };
        let s = s_update(centered_tr_mul(xi, &alpha, &model.v), t);
        let (v, d) = linalg::procrustes(&centered_mul_sparse(xi, &alpha, &s), seed);
        deficient |= d;

        let change = max_change(&model.alpha, &alpha)
            .max(linalg::max_abs_diff(&model.s, &s))
            .max(linalg::max_abs_diff(&model.v, &v));
        model = FactorModel { alpha, v, s };
        if track_surrogate {
            trace.push(surrogate_objective(xi, &model));
        }
        if change <= tol_inner {
            break;
        }
    }
    InnerOutcome {
        model,
        cycles,
        surrogate_trace: trace,
        rank_deficient: deficient,
    }
}

/// `(Ξ − 1ₙαᵀ)ᵀ V` without forming the centered matrix.
fn centered_tr_mul(xi: &Mat, alpha: &Vector, v: &Mat) -> Mat {
    let (n, p) = xi.shape();
    let r = v.ncols();
    let (xs, vs) = (xi.as_slice(), v.as_slice());
    let mut out = Mat::zeros(p, r);
    for k in 0..r {
        let vk = &vs[k * n..(k + 1) * n];
        let vk_sum: f64 = vk.iter().sum();
        for j in 0..p {
            let xj = &xs[j * n..(j + 1) * n];
            let dot: f64 = xj.iter().zip(vk).map(|(a, b)| a * b).sum();
            out[(j, k)] = dot - alpha[j] * vk_sum;
        }
    }
    out
}

/// `(Ξ − 1ₙαᵀ) S`, skipping the zero entries of `S`.
fn centered_mul_sparse(xi: &Mat, alpha: &Vector, s: &Mat) -> Mat {
    let (n, p) = xi.shape();
    let r = s.ncols();
    let xs = xi.as_slice();
    let mut out = Mat::zeros(n, r);
    for k in 0..r {
        let mut shift = 0.0;
        let col = &mut out.as_mut_slice()[k * n..(k + 1) * n];
        for j in 0..p {
            let w = s[(j, k)];
            if w == 0.0 {
                continue;
            }
            shift += alpha[j] * w;
            for (o, x) in col.iter_mut().zip(&xs[j * n..(j + 1) * n]) {
                *o += w * x;
            }
        }
        for o in col.iter_mut() {
            *o -= shift;
        }
    }
    out
}

fn max_change(a: &Vector, b: &Vector) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Fits by majorize-minimize outer iterations with exact block updates inside.
///
/// The starting loadings are first projected onto the sparsity constraint.
/// Stops after `cfg.max_outer` iterations, or once both the max-norm change in
/// `Θ` and the change in objective are within `cfg.tol_outer`.
pub fn fit(data: &MaskedMatrix, family: Family, cfg: &SolverConfig, init: FactorModel) -> Result<FitReport> {
    fit_observed(data, family, cfg, init, &mut |_| {})
}

/// [`fit`] with a callback after every accepted outer iteration.
pub fn fit_observed(
    data: &MaskedMatrix,
    family: Family,
    cfg: &SolverConfig,
    init: FactorModel,
    observer: &mut dyn FnMut(&Iterate<'_>),
) -> Result<FitReport> {
    cfg.validate()?;
    let step = match cfg.step {
        StepPolicy::Universal => StepRule::Fixed(family.universal_step().ok_or_else(|| {
            Error::Config(format!(
                "the {family} family has unbounded curvature and no universal step; \
                 use a line search or a fixed step"
            ))
        })?),
        StepPolicy::Fixed(tau) => StepRule::Fixed(tau),
        StepPolicy::LineSearch(acc) => StepRule::Backtracking(acc),
    };
    let start = Instant::now();
    let out = engine::run(
        data,
        family,
        cfg,
        init,
        engine::Options {
            step,
            momentum: Momentum::Off,
            screen: None,
        },
        observer,
    )?;
    Ok(out.into_report(data, family, cfg.sparsity.mode(), start)?)
}
