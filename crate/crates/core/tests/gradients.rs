mod common;

use common::*;
use sgpca::data::gradients;
use sgpca::prelude::*;

#[test]
fn factor_gradients_match_finite_differences() {
    for family in [Family::Gaussian, Family::Bernoulli, Family::Poisson] {
        let worst = check_family(family, 20);
        assert!(worst <= 1e-5, "{family}: {worst}");
    }
}

#[test]
fn gamma_gradients_match_finite_differences() {
    let (n, p, r) = (6, 5, 1);
    let mut g = rng(3);
    let x = gaussian(n, p, &mut g).map(|v| v.abs() + 0.2);
    let data = MaskedMatrix::fully_observed(x);
    let model = FactorModel::new(
        Vector::from_element(p, -2.0),
        orthonormal(n, r, &mut g),
        gaussian(p, r, &mut g) * 0.2,
    )
    .unwrap();
    let grad = gradients(&data, Family::ExponentialGamma, &model).unwrap();
    let fd = fd_block(&data, Family::ExponentialGamma, &model, p * r, |m, l, h| m.s[(l / r, l % r)] += h);
    let an: Vec<f64> = (0..p * r).map(|l| grad.s[(l / r, l % r)]).collect();
    assert!(rel_err(&fd, &an) <= 1e-5);
}
