#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sgpca::prelude::*;
use sgpca::data::gradients;
use sgpca::sim::sample_family;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(n: usize, p: usize, rng: &mut impl Rng) -> Mat {
    let mut m = Mat::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

pub fn orthonormal(n: usize, r: usize, rng: &mut impl Rng) -> Mat {
    gaussian(n, r, rng).qr().q()
}

/// Random 0/1 mask with roughly `rate` zeros, never emptying a whole column.
pub fn random_mask(n: usize, p: usize, rate: f64, rng: &mut impl Rng) -> Mat {
    let mut h = Mat::from_element(n, p, 1.0);
    for i in 0..n {
        for j in 0..p {
            if rng.random::<f64>() < rate {
                h[(i, j)] = 0.0;
            }
        }
    }
    h
}

/// Low-rank natural parameters `scale · U Wᵀ` with small offsets.
pub fn low_rank_theta(n: usize, p: usize, r: usize, scale: f64, rng: &mut impl Rng) -> Mat {
    let u = gaussian(n, r, rng);
    let w = gaussian(p, r, rng);
    let offset = gaussian(1, p, rng) * 0.2;
    let mut t = (u * w.transpose()) * (scale / (r as f64).sqrt());
    for j in 0..p {
        t.column_mut(j).add_scalar_mut(offset[(0, j)]);
    }
    t
}

/// Data sampled from a random low-rank model of the family, with missing cells.
pub fn instance(family: Family, n: usize, p: usize, r: usize, missing: f64, seed: u64) -> MaskedMatrix {
    let mut g = rng(seed);
    let scale = match family {
        Family::Gaussian => 2.0,
        Family::Bernoulli => 1.5,
        _ => 0.5,
    };
    let theta = low_rank_theta(n, p, r, scale, &mut g);
    let x = sample_family(family, &theta, &mut g).unwrap();
    let h = random_mask(n, p, missing, &mut g);
    MaskedMatrix::new(x, h).unwrap()
}

/// Independent masked negative log-likelihood, written out per family.
pub fn nll_oracle(data: &MaskedMatrix, family: Family, theta: &Mat) -> f64 {
    let (x, h) = (data.values(), data.mask());
    let mut total = 0.0;
    for i in 0..theta.nrows() {
        for j in 0..theta.ncols() {
            if h[(i, j)] == 0.0 {
                continue;
            }
            let (t, v) = (theta[(i, j)], x[(i, j)]);
            total += match family {
                Family::Gaussian => 0.5 * t * t - v * t,
                Family::Bernoulli => {
                    // log(1 + e^t) without overflow
                    t.max(0.0) + (-t.abs()).exp().ln_1p() - v * t
                }
                Family::Poisson => t.exp() - v * t,
                Family::ExponentialGamma => -(-t).ln() - v * t,
            };
        }
    }
    total
}

/// Independent gradient `H∘(b'(Θ) − X)`.
pub fn grad_oracle(data: &MaskedMatrix, family: Family, theta: &Mat) -> Mat {
    let (x, h) = (data.values(), data.mask());
    Mat::from_fn(theta.nrows(), theta.ncols(), |i, j| {
        if h[(i, j)] == 0.0 {
            return 0.0;
        }
        let t = theta[(i, j)];
        let mean = match family {
            Family::Gaussian => t,
            Family::Bernoulli => 1.0 / (1.0 + (-t).exp()),
            Family::Poisson => t.exp(),
            Family::ExponentialGamma => -1.0 / t,
        };
        mean - x[(i, j)]
    })
}

/// Sorted singular values, largest first.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `½ Σ_{i>r} σᵢ²`: the best rank-`r` half squared error.
pub fn svd_tail(m: &Mat, r: usize) -> f64 {
    0.5 * singular_values(m)[r..].iter().map(|s| s * s).sum::<f64>()
}

pub fn center_columns(m: &Mat) -> Mat {
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    c
}

pub fn nnz(m: &Mat) -> usize {
    m.iter().filter(|&&v| v != 0.0).count()
}

pub fn nnz_rows(m: &Mat) -> usize {
    m.row_iter().filter(|r| r.iter().any(|&v| v != 0.0)).count()
}

pub fn ortho_err(v: &Mat) -> f64 {
    (v.transpose() * v - Mat::identity(v.ncols(), v.ncols())).norm()
}

pub const H: f64 = 1e-5;

pub fn objective(data: &MaskedMatrix, family: Family, m: &FactorModel) -> f64 {
    nll_oracle(data, family, &m.theta())
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// Central differences of the objective along every coordinate of one block.
pub fn fd_block(
    data: &MaskedMatrix,
    family: Family,
    model: &FactorModel,
    len: usize,
    poke: impl Fn(&mut FactorModel, usize, f64),
) -> Vec<f64> {
    (0..len)
        .map(|l| {
            let (mut up, mut down) = (model.clone(), model.clone());
            poke(&mut up, l, H);
            poke(&mut down, l, -H);
            (objective(data, family, &up) - objective(data, family, &down)) / (2.0 * H)
        })
        .collect()
}

pub fn check_family(family: Family, instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let (n, p, r) = (8, 6, 2);
        let data = instance(family, n, p, r, 0.15, 500 + seed);
        let mut g = rng(900 + seed);
        let model = FactorModel::new(
            gaussian(p, 1, &mut g).column(0).into_owned() * 0.3,
            orthonormal(n, r, &mut g),
            gaussian(p, r, &mut g) * 0.5,
        )
        .unwrap();
        let grad = gradients(&data, family, &model).unwrap();

        let fd_s = fd_block(&data, family, &model, p * r, |m, l, h| m.s[(l / r, l % r)] += h);
        let an_s: Vec<f64> = (0..p * r).map(|l| grad.s[(l / r, l % r)]).collect();
        let fd_v = fd_block(&data, family, &model, n * r, |m, l, h| m.v[(l / r, l % r)] += h);
        let an_v: Vec<f64> = (0..n * r).map(|l| grad.v[(l / r, l % r)]).collect();
        let fd_a = fd_block(&data, family, &model, p, |m, l, h| m.alpha[l] += h);
        let an_a: Vec<f64> = grad.alpha.iter().cloned().collect();

        for e in [rel_err(&fd_s, &an_s), rel_err(&fd_v, &an_v), rel_err(&fd_a, &an_a)] {
            worst = worst.max(e);
        }
    }
    worst
}

