use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Mat;

/// Named, indexed random stream derived from a master seed. Each component
/// draws from its own stream so adding draws in one place never shifts another.
pub(crate) fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    // FNV-1a over the name, then fold in the index
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h);
    rng
}

pub(crate) fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    // fill row-major so the draw order does not depend on storage layout
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Thin Q factor of a tall matrix.
pub(crate) fn orthonormalize(m: &Mat) -> Mat {
    debug_assert!(m.nrows() >= m.ncols());
    m.clone().qr().q()
}

/// `extra` orthonormal columns orthogonal to the (orthonormal) columns of `basis`.
pub(crate) fn complement(basis: &Mat, extra: usize, rng: &mut impl Rng) -> Mat {
    let n = basis.nrows();
    let m = basis.ncols();
    debug_assert!(m + extra <= n);
    let mut stacked = Mat::zeros(n, m + extra);
    stacked.columns_mut(0, m).copy_from(basis);
    stacked
        .columns_mut(m, extra)
        .copy_from(&gaussian(n, extra, rng));
    // two Gram-Schmidt passes against the basis before QR keeps the
    // completion orthogonal even when the basis is only nearly orthonormal
    let mut fresh = stacked.columns(m, extra).into_owned();
    for _ in 0..2 {
        let proj = basis * (basis.transpose() * &fresh);
        fresh -= proj;
    }
    fresh.clone().qr().q()
}

/// Solution of `max ⟨W, M⟩` over column-orthonormal `W`: the polar factor
/// `P Qᵀ` of `M = P D Qᵀ`. Directions with vanishing singular values are
/// completed with seeded random orthonormal columns; the flag reports that.
pub(crate) fn procrustes(m: &Mat, seed: u64) -> (Mat, bool) {
    let (n, r) = m.shape();
    debug_assert!(n >= r);
    if let Some(w) = polar_by_gram(m) {
        return (w, false);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let tol = smax * (n.max(r) as f64) * f64::EPSILON * 4.0;

    let good: Vec<usize> = (0..r).filter(|&i| smax > 0.0 && sigma[i] > tol).collect();
    if good.len() == r {
        return (u * v_t, false);
    }

    let bad: Vec<usize> = (0..r).filter(|i| !good.contains(i)).collect();
    let mut rng = stream(seed, "procrustes", 0);
    let u_good = Mat::from_fn(n, good.len(), |i, k| u[(i, good[k])]);
    let fill = complement(&u_good, bad.len(), &mut rng);
    let right = if smax > 0.0 {
        v_t
    } else {
        // the decomposition of a zero matrix carries no usable rotation
        Mat::identity(r, r)
    };
    let mut out = Mat::zeros(n, r);
    for (k, &i) in good.iter().enumerate() {
        out += u_good.column(k) * right.row(i);
    }
    for (k, &i) in bad.iter().enumerate() {
        out += fill.column(k) * right.row(i);
    }
    (out, true)
}

/// `M (MᵀM)^{-1/2}` through the eigendecomposition of the small Gram
/// matrix. Declines (returns `None`) unless `M` is well conditioned, where
/// squaring the condition number would cost accuracy.
fn polar_by_gram(m: &Mat) -> Option<Mat> {
    let r = m.ncols();
    if r == 1 {
        let norm = m.norm();
        let scale = m.as_slice().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        return (norm > 0.0 && norm > scale * 1e-6).then(|| m / norm);
    }
    let eig = m.tr_mul(m).symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > 0.0) || lmin < lmax * 1e-6 {
        return None;
    }
    let u = &eig.eigenvectors;
    let inv_sqrt = Mat::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(m * (u * inv_sqrt * u.transpose()))
}

pub(crate) fn max_abs(m: &Mat) -> f64 {
    m.as_slice().iter().fold(0.0, |acc, &v| acc.max(v.abs()))
}

pub(crate) fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// `‖VᵀV − I‖_F`.
pub(crate) fn orthonormality_error(v: &Mat) -> f64 {
    let g = v.transpose() * v;
    (g - Mat::identity(v.ncols(), v.ncols())).norm()
}
