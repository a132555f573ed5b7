//! Masked observations, the factor model, and the masked negative log-likelihood.

use crate::error::{shape_err, Error, Result};
use crate::family::Family;
use crate::linalg;
use crate::{Mat, Vector};

/// An `n × p` data matrix with a binary mask of observed cells.
///
/// Unobserved cells are stored as `0`, so the stored matrix is already `H ∘ X`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    values: Mat,
    mask: Mat,
}

impl MaskedMatrix {
    /// Builds from values and a 0/1 mask. Values under a zero mask are discarded.
    pub fn new(mut values: Mat, mask: Mat) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(shape_err("mask", values.shape(), mask.shape()));
        }
        for i in 0..values.nrows() {
            for j in 0..values.ncols() {
                let h = mask[(i, j)];
                if h != 0.0 && h != 1.0 {
                    return Err(Error::Data(format!("mask entry ({i}, {j}) is {h}, not 0 or 1")));
                }
                if h == 0.0 {
                    values[(i, j)] = 0.0;
                } else if !values[(i, j)].is_finite() {
                    return Err(Error::Data(format!(
                        "observed entry ({i}, {j}) is not finite"
                    )));
                }
            }
        }
        Ok(Self { values, mask })
    }

    /// Every cell observed.
    pub fn fully_observed(values: Mat) -> Self {
        let mask = Mat::from_element(values.nrows(), values.ncols(), 1.0);
        Self::new(values, mask).expect("fully observed data must be finite")
    }

    /// `NaN` cells are treated as missing.
    pub fn from_nan(values: Mat) -> Self {
        let mask = values.map(|v| if v.is_nan() { 0.0 } else { 1.0 });
        Self::new(values, mask).expect("non-NaN entries must be finite")
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn mask(&self) -> &Mat {
        &self.mask
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)] != 0.0
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&h| h != 0.0).count()
    }

    /// Largest absolute observed value.
    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.values)
    }

    /// Checks that every observed value is a possible outcome of `family`.
    pub fn validate(&self, family: Family) -> Result<()> {
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                if self.is_observed(i, j) && !family.in_support(self.values[(i, j)]) {
                    return Err(Error::Data(format!(
                        "entry ({i}, {j}) = {} is not a valid {family} observation",
                        self.values[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copy restricted to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            values: self.values.select_columns(cols),
            mask: self.mask.select_columns(cols),
        }
    }

    /// Subtracts observed-entry column means; returns the centered data and the means.
    /// Columns without observations get mean 0.
    pub fn centered(&self) -> (Self, Vector) {
        let (n, p) = self.shape();
        let mut means = Vector::zeros(p);
        let mut values = self.values.clone();
        for j in 0..p {
            let (mut sum, mut count) = (0.0, 0usize);
            for i in 0..n {
                if self.is_observed(i, j) {
                    sum += self.values[(i, j)];
                    count += 1;
                }
            }
            if count > 0 {
                means[j] = sum / count as f64;
            }
            for i in 0..n {
                if self.is_observed(i, j) {
                    values[(i, j)] -= means[j];
                }
            }
        }
        (
            Self {
                values,
                mask: self.mask.clone(),
            },
            means,
        )
    }
}

/// `Θ = 1ₙαᵀ + V Sᵀ` with `V` (`n × r`) column-orthonormal and `S` (`p × r`)
/// the loading matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub alpha: Vector,
    pub v: Mat,
    pub s: Mat,
}

impl FactorModel {
    pub fn new(alpha: Vector, v: Mat, s: Mat) -> Result<Self> {
        let model = Self { alpha, v, s };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn zeros(n: usize, p: usize, r: usize) -> Self {
        Self {
            alpha: Vector::zeros(p),
            v: Mat::zeros(n, r),
            s: Mat::zeros(p, r),
        }
    }

    pub fn nrows(&self) -> usize {
        self.v.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.s.nrows()
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (n, r) = self.v.shape();
        let p = self.s.nrows();
        if self.s.ncols() != r {
            return Err(shape_err("loadings S", (p, r), self.s.shape()));
        }
        if self.alpha.len() != p {
            return Err(Error::Shape(format!(
                "intercept: expected length {p}, got {}",
                self.alpha.len()
            )));
        }
        if r == 0 || r > n.min(p) {
            return Err(Error::Shape(format!(
                "rank {r} must lie in 1..={}",
                n.min(p)
            )));
        }
        Ok(())
    }

    /// `‖VᵀV − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        linalg::orthonormality_error(&self.v)
    }

    /// The natural-parameter matrix `1ₙαᵀ + V Sᵀ`.
    pub fn theta(&self) -> Mat {
        let mut t = &self.v * self.s.transpose();
        for (j, mut col) in t.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.alpha[j]);
        }
        t
    }

    /// Flips each `(V column, S column)` pair so the largest-magnitude entry of
    /// the `S` column is positive. Leaves `Θ` unchanged.
    pub fn normalize_signs(&mut self) {
        for k in 0..self.rank() {
            let col = self.s.column(k);
            let mut best = 0usize;
            for i in 1..col.len() {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            if col.len() > 0 && col[best] < 0.0 {
                self.s.column_mut(k).neg_mut();
                self.v.column_mut(k).neg_mut();
            }
        }
    }
}

/// Gradients of the masked loss with respect to each factor block.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub s: Mat,
    pub v: Mat,
    pub alpha: Vector,
}

/// `−⟨H∘X, Θ⟩ + ⟨H, b(Θ)⟩`, omitting the data-only constant. Unobserved cells
/// contribute nothing and are never evaluated.
pub fn masked_nll(data: &MaskedMatrix, family: Family, theta: &Mat) -> Result<f64> {
    check_theta(data, theta)?;
    let x = data.values();
    let h = data.mask();
    let mut total = 0.0;
    for j in 0..theta.ncols() {
        for i in 0..theta.nrows() {
            if h[(i, j)] == 0.0 {
                continue;
            }
            let t = theta[(i, j)];
            if !family.natural_ok(t) {
                return Err(domain(i, j, t));
            }
            total += family.log_partition_at(t) - x[(i, j)] * t;
        }
    }
    Ok(total)
}

/// `∇_Θ = −H∘X + H∘g⁻¹(Θ)`; zero at unobserved cells.
pub fn grad_theta(data: &MaskedMatrix, family: Family, theta: &Mat) -> Result<Mat> {
    check_theta(data, theta)?;
    let x = data.values();
    let h = data.mask();
    let mut g = Mat::zeros(theta.nrows(), theta.ncols());
    for j in 0..theta.ncols() {
        for i in 0..theta.nrows() {
            if h[(i, j)] == 0.0 {
                continue;
            }
            let t = theta[(i, j)];
            if !family.natural_ok(t) {
                return Err(domain(i, j, t));
            }
            g[(i, j)] = family.mean_at(t) - x[(i, j)];
        }
    }
    Ok(g)
}

/// Gradients of the masked loss in `S`, `V` and `α` at `model`.
pub fn gradients(data: &MaskedMatrix, family: Family, model: &FactorModel) -> Result<Gradients> {
    model.check_shapes()?;
    let resid = grad_theta(data, family, &model.theta())?;
    Ok(Gradients {
        s: resid.transpose() * &model.v,
        v: &resid * &model.s,
        alpha: resid.row_sum().transpose(),
    })
}

fn check_theta(data: &MaskedMatrix, theta: &Mat) -> Result<()> {
    if theta.shape() != data.shape() {
        return Err(shape_err("natural parameter", data.shape(), theta.shape()));
    }
    Ok(())
}

fn domain(row: usize, col: usize, value: f64) -> Error {
    Error::Domain {
        row,
        col,
        value,
        what: "the natural domain",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian, orthonormalize, stream};
    use rand::Rng;

    fn triple_loop_theta(m: &FactorModel) -> Mat {
        let (n, p, r) = (m.nrows(), m.ncols(), m.rank());
        let mut t = Mat::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                let mut acc = m.alpha[j];
                for k in 0..r {
                    acc += m.v[(i, k)] * m.s[(j, k)];
                }
                t[(i, j)] = acc;
            }
        }
        t
    }

    #[test]
    fn theta_examples() {
        assert_eq!(FactorModel::zeros(3, 2, 1).theta(), Mat::zeros(3, 2));
        let m = FactorModel::new(
            Vector::from_vec(vec![1.0, 2.0]),
            Mat::zeros(2, 1),
            Mat::zeros(2, 1),
        )
        .unwrap();
        assert_eq!(m.theta(), Mat::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]));
    }

    #[test]
    fn theta_matches_triple_loop() {
        let mut rng = stream(21, "t", 0);
        for (n, p) in [(5, 4), (3, 7), (6, 6)] {
            let r = n.min(p);
            let m = FactorModel::new(
                Vector::from_fn(p, |_, _| rng.random_range(-2.0..2.0)),
                gaussian(n, r, &mut rng),
                gaussian(p, r, &mut rng),
            )
            .unwrap();
            let d = m.theta() - triple_loop_theta(&m);
            assert!(d.amax() <= 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(FactorModel::new(Vector::zeros(3), Mat::zeros(4, 2), Mat::zeros(3, 1)).is_err());
        assert!(FactorModel::new(Vector::zeros(2), Mat::zeros(4, 2), Mat::zeros(3, 2)).is_err());
        assert!(FactorModel::new(Vector::zeros(3), Mat::zeros(2, 3), Mat::zeros(3, 3)).is_err());
        let data = MaskedMatrix::fully_observed(Mat::zeros(2, 2));
        assert!(masked_nll(&data, Family::Gaussian, &Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn nll_examples() {
        let x = Mat::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.5]);
        let data = MaskedMatrix::fully_observed(x.clone());
        let f = masked_nll(&data, Family::Gaussian, &x).unwrap();
        assert!((f + 0.5 * x.norm_squared()).abs() < 1e-12);

        let hidden = MaskedMatrix::new(x.clone(), Mat::zeros(2, 3)).unwrap();
        assert_eq!(masked_nll(&hidden, Family::Poisson, &Mat::from_element(2, 3, 1e6)).unwrap(), 0.0);

        let one = MaskedMatrix::fully_observed(Mat::from_element(1, 1, 1.0));
        let f = masked_nll(&one, Family::Bernoulli, &Mat::zeros(1, 1)).unwrap();
        assert!((f - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn nll_domain_only_checked_where_observed() {
        let data = MaskedMatrix::new(
            Mat::from_row_slice(1, 2, &[1.0, 2.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let theta = Mat::from_row_slice(1, 2, &[-1.0, 5.0]);
        assert!(masked_nll(&data, Family::ExponentialGamma, &theta).is_ok());
        let theta = Mat::from_row_slice(1, 2, &[1.0, -5.0]);
        assert!(matches!(
            masked_nll(&data, Family::ExponentialGamma, &theta),
            Err(Error::Domain { row: 0, col: 0, .. })
        ));
    }

    #[test]
    fn grad_theta_examples() {
        let x = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let data = MaskedMatrix::fully_observed(x.clone());
        assert_eq!(grad_theta(&data, Family::Gaussian, &x).unwrap(), Mat::zeros(2, 2));

        let zero = MaskedMatrix::fully_observed(Mat::zeros(1, 1));
        let g = grad_theta(&zero, Family::Bernoulli, &Mat::zeros(1, 1)).unwrap();
        assert_eq!(g[(0, 0)], 0.5);

        let masked = MaskedMatrix::new(x, Mat::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])).unwrap();
        let g = grad_theta(&masked, Family::Poisson, &Mat::from_element(2, 2, 3.0)).unwrap();
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn gradients_vanish_at_exact_fit_and_under_full_mask() {
        let mut rng = stream(22, "t", 0);
        let v = orthonormalize(&gaussian(6, 2, &mut rng));
        let model = FactorModel::new(Vector::from_element(4, 0.3), v, gaussian(4, 2, &mut rng)).unwrap();
        let data = MaskedMatrix::fully_observed(model.theta());
        let g = gradients(&data, Family::Gaussian, &model).unwrap();
        assert!(g.s.amax() < 1e-12 && g.v.amax() < 1e-12 && g.alpha.amax() < 1e-12);

        let hidden = MaskedMatrix::new(gaussian(6, 4, &mut rng), Mat::zeros(6, 4)).unwrap();
        let g = gradients(&hidden, Family::Bernoulli, &model).unwrap();
        assert_eq!(g.s, Mat::zeros(4, 2));
        assert_eq!(g.v, Mat::zeros(6, 2));
        assert_eq!(g.alpha, Vector::zeros(4));
    }

    #[test]
    fn masked_cells_do_not_leak() {
        let mut rng = stream(23, "t", 0);
        let mask = Mat::from_fn(5, 4, |i, j| if (i + 2 * j) % 3 == 0 { 0.0 } else { 1.0 });
        let base = gaussian(5, 4, &mut rng);
        let mut perturbed = base.clone();
        for i in 0..5 {
            for j in 0..4 {
                if mask[(i, j)] == 0.0 {
                    perturbed[(i, j)] = 1e9;
                }
            }
        }
        let a = MaskedMatrix::new(base, mask.clone()).unwrap();
        let b = MaskedMatrix::new(perturbed, mask).unwrap();
        assert_eq!(a, b);
        let model = FactorModel::new(
            Vector::zeros(4),
            orthonormalize(&gaussian(5, 2, &mut rng)),
            gaussian(4, 2, &mut rng),
        )
        .unwrap();
        let t = model.theta();
        assert_eq!(
            masked_nll(&a, Family::Gaussian, &t).unwrap().to_bits(),
            masked_nll(&b, Family::Gaussian, &t).unwrap().to_bits()
        );
        assert_eq!(
            gradients(&a, Family::Gaussian, &model).unwrap(),
            gradients(&b, Family::Gaussian, &model).unwrap()
        );
    }

    #[test]
    fn gaussian_recovers_squared_error() {
        let mut rng = stream(24, "t", 0);
        let x = gaussian(7, 5, &mut rng);
        let t = gaussian(7, 5, &mut rng);
        let data = MaskedMatrix::fully_observed(x.clone());
        let f = masked_nll(&data, Family::Gaussian, &t).unwrap() + 0.5 * x.norm_squared();
        assert!((f - 0.5 * (&x - &t).norm_squared()).abs() <= 1e-10);
    }

    #[test]
    fn centering_uses_observed_entries_only() {
        let x = Mat::from_row_slice(3, 2, &[1.0, 10.0, 3.0, f64::NAN, 5.0, 20.0]);
        let (c, means) = MaskedMatrix::from_nan(x).centered();
        assert_eq!(means, Vector::from_vec(vec![3.0, 15.0]));
        assert_eq!(c.values()[(1, 1)], 0.0);
        assert_eq!(c.values()[(2, 1)], 5.0);
        assert!(!c.is_observed(1, 1));
    }

    #[test]
    fn validation_by_family() {
        let d = MaskedMatrix::fully_observed(Mat::from_row_slice(1, 2, &[0.0, 1.0]));
        assert!(d.validate(Family::Bernoulli).is_ok());
        let d = MaskedMatrix::fully_observed(Mat::from_row_slice(1, 2, &[0.0, 2.5]));
        assert!(d.validate(Family::Poisson).is_err());
        assert!(d.validate(Family::Bernoulli).is_err());
        assert!(d.validate(Family::Gaussian).is_ok());
        assert!(MaskedMatrix::new(Mat::zeros(1, 1), Mat::from_element(1, 1, 0.5)).is_err());
    }

    #[test]
    fn sign_normalization_preserves_theta() {
        let mut rng = stream(25, "t", 0);
        let mut m = FactorModel::new(
            Vector::zeros(4),
            orthonormalize(&gaussian(5, 2, &mut rng)),
            -gaussian(4, 2, &mut rng).abs(),
        )
        .unwrap();
        let before = m.theta();
        m.normalize_signs();
        assert!((m.theta() - before).amax() < 1e-14);
        for k in 0..2 {
            assert!(m.s.column(k).max() > 0.0);
        }
    }
}
