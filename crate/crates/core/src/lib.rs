//! Sparse generalized principal component analysis.
//!
//! Fits a low-rank natural-parameter matrix `Θ = 1ₙαᵀ + V Sᵀ` to an `n × p`
//! data matrix under an exponential-family likelihood, with `V` column
//! orthonormal and the loading matrix `S` constrained to a fixed fraction of
//! nonzero entries (element-wise) or nonzero rows (group-wise). Missing cells
//! are masked out of the likelihood.
//!
//! The crate provides:
//!
//! - [`family`]: canonical-link functions of the supported families.
//! - [`data`]: masked data, the factor model, the masked likelihood and its gradients.
//! - [`threshold`]: quantile (top-k) hard thresholding.
//! - [`solver`]: the majorize-then-block-coordinate-descent fit.
//! - [`accel`]: accelerated fitting with backtracking and progressive screening.
//! - [`sim`]: spiked-model synthetic data.
//! - [`metrics`]: evaluation metrics.
//! - [`multistart`]: two-stage multiple random starts.
//! - [`io`]: CSV ingestion and emission.
//!
//! ```
//! use sgpca::prelude::*;
//!
//! let x = Mat::from_fn(12, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
//! let data = MaskedMatrix::fully_observed(x);
//! let cfg = SolverConfig::new(2, SparsityLevel::element_wise(1.0).unwrap());
//! let init = random_init(12, 6, 2, 1).unwrap();
//! let report = fit(&data, Family::Gaussian, &cfg, init).unwrap();
//! assert!(report.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
//! ```

pub mod accel;
pub mod data;
mod engine;
pub mod error;
pub mod family;
pub mod io;
mod linalg;
pub mod metrics;
pub mod multistart;
pub mod sim;
pub mod solver;
pub mod threshold;

pub use error::{Error, Result};

/// Dense real matrix used throughout.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;

pub mod prelude {
    pub use crate::accel::{
        fit_accelerated, fit_progressive, momentum_weight, AccelConfig, InitialStep, ScreenMode,
        ScreenSchedule,
    };
    pub use crate::data::{FactorModel, MaskedMatrix};
    pub use crate::error::{Error, Result};
    pub use crate::family::{CurvatureBound, Family};
    pub use crate::metrics::{evaluate, EvalResult};
    pub use crate::multistart::{multi_start_fit, random_init, MultiStartConfig};
    pub use crate::sim::{generate_data, SimSpec, Truth};
    pub use crate::solver::{fit, FitReport, SolverConfig, StepPolicy, Support};
    pub use crate::threshold::{SparsityLevel, SparsityMode};
    pub use crate::{Mat, Vector};
}
