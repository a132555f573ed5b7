//! Exponential-family distributions under their canonical link.
//!
//! For natural parameter `θ` and mean `μ = E[x]`, each family supplies the
//! link `g(μ) = θ`, its inverse `b'(θ) = μ`, the log-partition `b(θ)` and the
//! variance function `b''(θ)`. Matrix-valued operations apply these
//! element-wise and report the first offending index on a domain violation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::Mat;

/// Above this magnitude the logistic functions switch to their asymptotic forms.
const LOGISTIC_CUTOFF: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Bernoulli,
    Poisson,
    /// Exponential / Gamma with unit shape: `g(μ) = −1/μ`, natural domain `θ < 0`.
    ExponentialGamma,
}

/// Supremum of `b''` over the natural domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureBound {
    Finite(f64),
    Infinite,
}

impl CurvatureBound {
    pub fn value(self) -> Option<f64> {
        match self {
            CurvatureBound::Finite(v) => Some(v),
            CurvatureBound::Infinite => None,
        }
    }
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Gaussian,
        Family::Bernoulli,
        Family::Poisson,
        Family::ExponentialGamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::ExponentialGamma => "gamma",
        }
    }

    /// Dispersion is not estimated; every family uses unit dispersion.
    pub fn dispersion(self) -> f64 {
        1.0
    }

    pub fn curvature_bound(self) -> CurvatureBound {
        match self {
            Family::Gaussian => CurvatureBound::Finite(1.0),
            Family::Bernoulli => CurvatureBound::Finite(0.25),
            Family::Poisson | Family::ExponentialGamma => CurvatureBound::Infinite,
        }
    }

    /// The largest step size that guarantees descent for every iterate,
    /// `1 / sup b''`, when that supremum is finite.
    pub fn universal_step(self) -> Option<f64> {
        self.curvature_bound().value().map(|b| 1.0 / b)
    }

    /// Whether `θ` lies in the natural-parameter domain.
    #[inline]
    pub fn natural_ok(self, theta: f64) -> bool {
        match self {
            Family::ExponentialGamma => theta < 0.0,
            _ => !theta.is_nan(),
        }
    }

    /// Whether `μ` lies in the mean domain (where `g` is finite).
    #[inline]
    pub fn mean_ok(self, mu: f64) -> bool {
        match self {
            Family::Gaussian => mu.is_finite(),
            Family::Bernoulli => mu > 0.0 && mu < 1.0,
            Family::Poisson | Family::ExponentialGamma => mu > 0.0 && mu.is_finite(),
        }
    }

    /// Whether `x` is a possible observation of this family.
    pub fn in_support(self, x: f64) -> bool {
        match self {
            Family::Gaussian => x.is_finite(),
            Family::Bernoulli => x == 0.0 || x == 1.0,
            Family::Poisson => x >= 0.0 && x.is_finite() && x.fract() == 0.0,
            Family::ExponentialGamma => x > 0.0 && x.is_finite(),
        }
    }

    /// `g(μ)` for a single value; the caller guarantees `mean_ok(μ)`.
    #[inline]
    pub fn link_at(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Bernoulli => (mu / (1.0 - mu)).ln(),
            Family::Poisson => mu.ln(),
            Family::ExponentialGamma => -1.0 / mu,
        }
    }

    /// `b'(θ) = g⁻¹(θ)` for a single value; the caller guarantees `natural_ok(θ)`.
    #[inline]
    pub fn mean_at(self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => theta,
            Family::Bernoulli => sigmoid(theta),
            Family::Poisson => theta.exp(),
            Family::ExponentialGamma => -1.0 / theta,
        }
    }

    /// `b(θ)` for a single value.
    #[inline]
    pub fn log_partition_at(self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * theta * theta,
            Family::Bernoulli => softplus(theta),
            Family::Poisson => theta.exp(),
            Family::ExponentialGamma => -(-theta).ln(),
        }
    }

    /// `b''(θ)` for a single value.
    #[inline]
    pub fn curvature_at(self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Bernoulli => {
                let m = sigmoid(theta);
                // sigmoid(θ)·sigmoid(−θ) keeps full relative precision in both tails
                m * sigmoid(-theta)
            }
            Family::Poisson => theta.exp(),
            Family::ExponentialGamma => 1.0 / (theta * theta),
        }
    }

    /// Per-cell negative log-likelihood of the saturated model, `−x g(x) + b(g(x))`,
    /// taking the finite limit on the boundary of the mean domain.
    pub fn saturated_cell(self, x: f64) -> f64 {
        match self {
            Family::Gaussian => -0.5 * x * x,
            Family::Bernoulli => {
                if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    -(x * x.ln() + (1.0 - x) * (1.0 - x).ln())
                }
            }
            Family::Poisson => {
                if x <= 0.0 {
                    0.0
                } else {
                    x - x * x.ln()
                }
            }
            Family::ExponentialGamma => 1.0 + x.ln(),
        }
    }

    /// Element-wise `g(μ)`.
    pub fn link(self, mu: &Mat) -> Result<Mat> {
        self.map_checked(mu, |v| self.mean_ok(v), |v| self.link_at(v), "the mean domain")
    }

    /// Element-wise `b'(θ)`.
    pub fn inv_link(self, theta: &Mat) -> Result<Mat> {
        self.map_checked(theta, |v| self.natural_ok(v), |v| self.mean_at(v), "the natural domain")
    }

    /// Element-wise `b(θ)`.
    pub fn log_partition(self, theta: &Mat) -> Result<Mat> {
        self.map_checked(
            theta,
            |v| self.natural_ok(v),
            |v| self.log_partition_at(v),
            "the natural domain",
        )
    }

    /// Element-wise `b''(θ)`.
    pub fn curvature(self, theta: &Mat) -> Result<Mat> {
        self.map_checked(
            theta,
            |v| self.natural_ok(v),
            |v| self.curvature_at(v),
            "the natural domain",
        )
    }

    fn map_checked(
        self,
        m: &Mat,
        ok: impl Fn(f64) -> bool,
        f: impl Fn(f64) -> f64,
        what: &'static str,
    ) -> Result<Mat> {
        // report the first violation in row-major order
        let mut bad: Option<(usize, usize, f64)> = None;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if !ok(v) {
                    bad = Some((i, j, v));
                    break;
                }
            }
            if bad.is_some() {
                break;
            }
        }
        if let Some((row, col, value)) = bad {
            return Err(Error::Domain {
                row,
                col,
                value,
                what,
            });
        }
        Ok(m.map(f))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "bernoulli" | "binary" | "logistic" => Ok(Family::Bernoulli),
            "poisson" => Ok(Family::Poisson),
            "gamma" | "exponential" => Ok(Family::ExponentialGamma),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}

/// Logistic function evaluated without overflow.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` evaluated without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > LOGISTIC_CUTOFF {
        t + (-t).exp()
    } else if t < -LOGISTIC_CUTOFF {
        t.exp()
    } else {
        t.max(0.0) + (-t.abs()).exp().ln_1p()
    }
}
