//! Spiked-model synthetic data: `Θ* = P D Qᵀ` with Gaussian scores `P`,
//! signal strengths on the diagonal of `D` and sparse orthonormal loadings `Q`.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::data::MaskedMatrix;
use crate::error::{Error, Result};
use crate::family::{sigmoid, Family};
use crate::linalg::{gaussian, orthonormalize, stream};
use crate::threshold::{cardinality, SparsityLevel, SparsityMode};
use crate::{Mat, Vector};

/// Largest natural parameter passed to the Poisson sampler.
pub const POISSON_THETA_CAP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub r_star: usize,
    pub q_star: f64,
    pub q_mode: SparsityMode,
    pub lambdas: Vec<f64>,
    pub family: Family,
    pub missing_rate: f64,
    pub seed: u64,
}

/// The three benchmark scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    /// One sparse component.
    A,
    /// Four components, element-wise sparse.
    B,
    /// Four components sharing a row support.
    C,
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "A" => Ok(Setting::A),
            "b" | "B" => Ok(Setting::B),
            "c" | "C" => Ok(Setting::C),
            other => Err(Error::Config(format!("unknown setting '{other}' (expected a, b or c)"))),
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::A => "a",
            Setting::B => "b",
            Setting::C => "c",
        })
    }
}

impl Setting {
    /// Sparsity level used to fit data from this setting.
    pub fn fit_sparsity(self, family: Family) -> SparsityLevel {
        let level = match self {
            Setting::A => SparsityLevel::element_wise(if family == Family::Bernoulli { 0.05 } else { 0.01 }),
            Setting::B => SparsityLevel::element_wise(0.32),
            Setting::C => SparsityLevel::group_wise(0.4),
        };
        level.expect("preset levels are valid")
    }

    pub fn rank(self) -> usize {
        match self {
            Setting::A => 1,
            Setting::B | Setting::C => 4,
        }
    }
}

/// Default signal strength per family.
pub fn default_lambda(family: Family) -> f64 {
    match family {
        Family::Poisson => 2.0,
        _ => 10.0,
    }
}

impl SimSpec {
    /// `n = 100`, `p = 200` scenario presets with the family's default signal.
    pub fn setting(setting: Setting, family: Family, seed: u64) -> Self {
        let (r_star, q_star, q_mode) = match setting {
            Setting::A => (
                1,
                if family == Family::Bernoulli { 0.05 } else { 0.01 },
                SparsityMode::ElementWise,
            ),
            Setting::B => (4, 0.08, SparsityMode::ElementWise),
            Setting::C => (4, 0.2, SparsityMode::GroupWise),
        };
        Self {
            n: 100,
            p: 200,
            r_star,
            q_star,
            q_mode,
            lambdas: vec![default_lambda(family); r_star],
            family,
            missing_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_star == 0 || self.r_star > self.n.min(self.p) {
            return Err(Error::Config(format!(
                "true rank {} must lie in 1..={}",
                self.r_star,
                self.n.min(self.p)
            )));
        }
        SparsityLevel::new(self.q_star, self.q_mode)?;
        if self.lambdas.len() != self.r_star {
            return Err(Error::Config(format!(
                "{} signal strengths given for rank {}",
                self.lambdas.len(),
                self.r_star
            )));
        }
        if self.lambdas.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::Config("signal strengths must be finite and nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!(
                "missing rate {} must lie in [0, 1)",
                self.missing_rate
            )));
        }
        if self.family == Family::ExponentialGamma {
            return Err(Error::Config(
                "simulation is not available for the gamma family (Θ* is not sign-constrained)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub theta_star: Mat,
    pub q: Mat,
    pub p: Mat,
    pub d: Vector,
}

/// Sparse `p × r` loadings with orthonormal columns.
///
/// Element mode gives each column its own disjoint block of randomly chosen
/// rows (sizes differing by at most one, totalling `floor(q·p·r)`) with
/// entries `±1/√c`. Group mode confines every column to the same `floor(q·p)`
/// rows and orthonormalizes a Gaussian draw there. `q = 1` gives a dense
/// orthonormal matrix.
pub fn generate_loadings(p: usize, r: usize, q: f64, mode: SparsityMode, seed: u64) -> Result<Mat> {
    SparsityLevel::new(q, mode)?;
    if r == 0 || r > p {
        return Err(Error::Config(format!("rank {r} must lie in 1..={p}")));
    }
    let mut rng = stream(seed, "loadings", 0);
    if q >= 1.0 {
        return Ok(orthonormalize(&gaussian(p, r, &mut rng)));
    }
    match mode {
        SparsityMode::ElementWise => {
            let total = cardinality(q, p * r);
            if total < r || total > p {
                return Err(Error::Config(format!(
                    "{total} nonzeros cannot form {r} orthonormal columns with disjoint supports in {p} rows"
                )));
            }
            let rows = sample(&mut rng, p, total).into_vec();
            let mut out = Mat::zeros(p, r);
            let mut offset = 0;
            for k in 0..r {
                let c = total / r + usize::from(k < total % r);
                let scale = 1.0 / (c as f64).sqrt();
                for &i in &rows[offset..offset + c] {
                    out[(i, k)] = if rng.random::<bool>() { scale } else { -scale };
                }
                offset += c;
            }
            Ok(out)
        }
        SparsityMode::GroupWise => {
            let g = cardinality(q, p);
            if g < r {
                return Err(Error::Config(format!(
                    "{g} nonzero rows cannot carry {r} orthonormal columns"
                )));
            }
            let mut rows = sample(&mut rng, p, g).into_vec();
            rows.sort_unstable();
            let block = orthonormalize(&gaussian(g, r, &mut rng));
            let mut out = Mat::zeros(p, r);
            for (l, &i) in rows.iter().enumerate() {
                out.row_mut(i).copy_from(&block.row(l));
            }
            Ok(out)
        }
    }
}

/// Draws one observation per cell with natural parameter `theta`.
pub fn sample_family(family: Family, theta: &Mat, rng: &mut impl Rng) -> Result<Mat> {
    let mut out = Mat::zeros(theta.nrows(), theta.ncols());
    let mut clipped = 0usize;
    for i in 0..theta.nrows() {
        for j in 0..theta.ncols() {
            let t = theta[(i, j)];
            out[(i, j)] = match family {
                Family::Gaussian => t + rng.sample::<f64, _>(StandardNormal),
                Family::Bernoulli => f64::from(u8::from(rng.random::<f64>() < sigmoid(t))),
                Family::Poisson => {
                    if t > POISSON_THETA_CAP {
                        clipped += 1;
                    }
                    let mu = t.min(POISSON_THETA_CAP).exp();
                    if mu < f64::MIN_POSITIVE {
                        0.0
                    } else {
                        Poisson::new(mu)
                        .map_err(|e| Error::Numerical(format!("Poisson mean {mu}: {e}")))?
                            .sample(rng)
                    }
                }
                Family::ExponentialGamma => {
                    return Err(Error::Config("sampling is not available for the gamma family".into()))
                }
            };
        }
    }
    if clipped > 0 {
        log::warn!("clipped {clipped} natural parameters above {POISSON_THETA_CAP} before Poisson sampling");
    }
    Ok(out)
}

/// Samples data and the mask. Deterministic given `spec.seed`.
pub fn generate_data(spec: &SimSpec) -> Result<(MaskedMatrix, Truth)> {
    spec.validate()?;
    let q = generate_loadings(spec.p, spec.r_star, spec.q_star, spec.q_mode, spec.seed)?;
    let scores = gaussian(spec.n, spec.r_star, &mut stream(spec.seed, "scores", 0));
    let d = Vector::from_vec(spec.lambdas.clone());
    let theta_star = &scores * Mat::from_diagonal(&d) * q.transpose();
    let x = sample_family(spec.family, &theta_star, &mut stream(spec.seed, "noise", 0))?;
    let mut mask_rng = stream(spec.seed, "mask", 0);
    let mut mask = Mat::from_element(spec.n, spec.p, 1.0);
    for i in 0..spec.n {
        for j in 0..spec.p {
            if mask_rng.random::<f64>() < spec.missing_rate {
                mask[(i, j)] = 0.0;
            }
        }
    }
    let data = MaskedMatrix::new(x, mask)?;
    Ok((
        data,
        Truth {
            theta_star,
            q,
            p: scores,
            d,
        },
    ))
}
