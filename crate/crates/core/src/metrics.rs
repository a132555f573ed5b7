//! Estimation error, deviance, subspace angle and support-recovery metrics.

use crate::data::{masked_nll, FactorModel, MaskedMatrix};
use crate::error::{shape_err, Error, Result};
use crate::family::Family;
use crate::sim::Truth;
use crate::threshold::{nonzero_rows, SparsityMode};
use crate::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub theta_error: f64,
    pub deviance: f64,
    /// Deviance relative to a reference fit; 1 when there is none.
    pub deviance_ratio: f64,
    pub max_canonical_angle_deg: f64,
    pub miss_rate: f64,
    pub false_positive_rate: f64,
}

impl EvalResult {
    pub const FIELDS: [&'static str; 6] = [
        "theta_error",
        "deviance",
        "deviance_ratio",
        "max_canonical_angle_deg",
        "miss_rate",
        "false_positive_rate",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.theta_error,
            self.deviance,
            self.deviance_ratio,
            self.max_canonical_angle_deg,
            self.miss_rate,
            self.false_positive_rate,
        ]
    }

    pub fn with_reference_deviance(mut self, reference: f64) -> Self {
        self.deviance_ratio = self.deviance / reference;
        self
    }
}

/// `1000 ‖Θ̂ − Θ*‖²_F / (n p)`.
pub fn theta_error(theta_hat: &Mat, theta_star: &Mat) -> Result<f64> {
    if theta_hat.shape() != theta_star.shape() {
        return Err(shape_err("estimated Θ", theta_star.shape(), theta_hat.shape()));
    }
    let (n, p) = theta_hat.shape();
    Ok(1000.0 * (theta_hat - theta_star).norm_squared() / (n * p) as f64)
}

/// `2 (l(X; Θ̂) − l(X; Θ_sat))` over observed cells, with the saturated
/// contribution taken as its limit at boundary data values.
pub fn deviance(data: &MaskedMatrix, family: Family, theta_hat: &Mat) -> Result<f64> {
    let nll = masked_nll(data, family, theta_hat)?;
    let (x, h) = (data.values(), data.mask());
    let mut saturated = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if h[(i, j)] != 0.0 {
                saturated += family.saturated_cell(x[(i, j)]);
            }
        }
    }
    Ok(2.0 * (nll - saturated))
}

/// Orthonormal basis of the column space, dropping numerically null directions.
fn column_basis(m: &Mat) -> Result<Mat> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * m.nrows().max(m.ncols()) as f64 * f64::EPSILON;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > tol)
        .collect();
    if keep.is_empty() {
        return Err(Error::Data("canonical angle of a zero matrix is undefined".into()));
    }
    Ok(u.select_columns(&keep))
}

/// Largest principal angle, in degrees, between the column spaces of `s_hat`
/// and `q_star`. With unequal dimensions the smaller space is measured
/// against the larger.
pub fn max_canonical_angle(s_hat: &Mat, q_star: &Mat) -> Result<f64> {
    if s_hat.nrows() != q_star.nrows() {
        return Err(Error::Shape(format!(
            "loadings have {} and {} rows",
            s_hat.nrows(),
            q_star.nrows()
        )));
    }
    let (a, b) = (column_basis(s_hat)?, column_basis(q_star)?);
    let (small, large) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    let cross = small.transpose() * &large;
    let cos_min = cross
        .singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 1.0);
    let angle = if cos_min > std::f64::consts::FRAC_1_SQRT_2 {
        // small angles: arcsin of the residual is better conditioned
        let resid = &small - &large * cross.transpose();
        let sin_max = resid.singular_values().iter().cloned().fold(0.0, f64::max);
        sin_max.min(1.0).asin()
    } else {
        cos_min.acos()
    };
    Ok(angle.to_degrees())
}

/// Greedy column matching by largest absolute cosine. Returns, for each
/// column of `q_star`, the matched column of `s_hat`.
fn align_columns(s_hat: &Mat, q_star: &Mat) -> Vec<Option<usize>> {
    let (rh, rs) = (s_hat.ncols(), q_star.ncols());
    let mut pairs = Vec::with_capacity(rh * rs);
    for k in 0..rs {
        for m in 0..rh {
            let (a, b) = (s_hat.column(m), q_star.column(k));
            let denom = a.norm() * b.norm();
            let c = if denom > 0.0 { (a.dot(&b) / denom).abs() } else { 0.0 };
            pairs.push((c, k, m));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut matched = vec![None; rs];
    let mut used = vec![false; rh];
    for (_, k, m) in pairs {
        if matched[k].is_none() && !used[m] {
            matched[k] = Some(m);
            used[m] = true;
        }
    }
    matched
}

/// `(miss rate, false positive rate)` of the estimated support against the
/// truth, over entries (element mode, after column alignment) or rows.
pub fn selection_rates(s_hat: &Mat, q_star: &Mat, mode: SparsityMode) -> Result<(f64, f64)> {
    if s_hat.nrows() != q_star.nrows() {
        return Err(Error::Shape(format!(
            "loadings have {} and {} rows",
            s_hat.nrows(),
            q_star.nrows()
        )));
    }
    if q_star.iter().all(|&v| v == 0.0) {
        return Err(Error::Data("true loadings are all zero".into()));
    }
    let p = q_star.nrows();
    let (mut truth, mut est): (Vec<bool>, Vec<bool>) = (Vec::new(), Vec::new());
    match mode {
        SparsityMode::GroupWise => {
            let (t, e) = (nonzero_rows(q_star), nonzero_rows(s_hat));
            truth = (0..p).map(|i| t.binary_search(&i).is_ok()).collect();
            est = (0..p).map(|i| e.binary_search(&i).is_ok()).collect();
        }
        SparsityMode::ElementWise => {
            let matched = align_columns(s_hat, q_star);
            for i in 0..p {
                for (k, m) in matched.iter().enumerate() {
                    truth.push(q_star[(i, k)] != 0.0);
                    est.push(m.is_some_and(|m| s_hat[(i, m)] != 0.0));
                }
            }
        }
    }
    let (mut pos, mut missed, mut neg, mut false_pos) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &e) in truth.iter().zip(&est) {
        if t {
            pos += 1;
            missed += usize::from(!e);
        } else {
            neg += 1;
            false_pos += usize::from(e);
        }
    }
    let fp = if neg == 0 { 0.0 } else { false_pos as f64 / neg as f64 };
    Ok((missed as f64 / pos as f64, fp))
}

/// Mean after dropping `floor(trim·m)` values from each end.
pub fn trimmed_mean(values: &[f64], trim: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("trimmed mean of an empty list".into()));
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::Config(format!("trim fraction {trim} must lie in [0, 0.5)")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (trim * v.len() as f64 + 1e-9).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// All metrics from the estimated `Θ̂`, loadings and the truth.
pub fn evaluate_parts(
    data: &MaskedMatrix,
    family: Family,
    theta_hat: &Mat,
    s_hat: &Mat,
    theta_star: &Mat,
    q_star: &Mat,
    mode: SparsityMode,
) -> Result<EvalResult> {
    let (miss_rate, false_positive_rate) = selection_rates(s_hat, q_star, mode)?;
    Ok(EvalResult {
        theta_error: theta_error(theta_hat, theta_star)?,
        deviance: deviance(data, family, theta_hat)?,
        deviance_ratio: 1.0,
        max_canonical_angle_deg: max_canonical_angle(s_hat, q_star)?,
        miss_rate,
        false_positive_rate,
    })
}

pub fn evaluate(
    data: &MaskedMatrix,
    family: Family,
    model: &FactorModel,
    truth: &Truth,
    mode: SparsityMode,
) -> Result<EvalResult> {
    evaluate_parts(data, family, &model.theta(), &model.s, &truth.theta_star, &truth.q, mode)
}
