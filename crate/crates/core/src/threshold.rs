//! Quantile hard thresholding.
//!
//! The cardinality constraint `‖S‖₀ ≤ q·p·r` (or `‖S‖₂,₀ ≤ q·p` on rows) is
//! enforced by keeping exactly the `k` largest entries (rows) by magnitude
//! (Euclidean norm) and zeroing the rest. Ties at the `k`-th magnitude keep the
//! smaller row-major index.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::Mat;

/// Absorbs representation error in `q · count` (e.g. `0.29 * 100 = 28.999…`).
const COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SparsityMode {
    ElementWise,
    GroupWise,
}

impl fmt::Display for SparsityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SparsityMode::ElementWise => "element",
            SparsityMode::GroupWise => "group",
        })
    }
}

impl FromStr for SparsityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "element" | "elementwise" | "element-wise" => Ok(SparsityMode::ElementWise),
            "group" | "groupwise" | "group-wise" | "row" => Ok(SparsityMode::GroupWise),
            other => Err(Error::Config(format!("unknown sparsity mode '{other}'"))),
        }
    }
}

/// Fraction `q ∈ (0, 1]` of entries (or rows) allowed to be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityLevel {
    q: f64,
    mode: SparsityMode,
}

impl SparsityLevel {
    pub fn new(q: f64, mode: SparsityMode) -> Result<Self> {
        check_q(q)?;
        Ok(Self { q, mode })
    }

    pub fn element_wise(q: f64) -> Result<Self> {
        Self::new(q, SparsityMode::ElementWise)
    }

    pub fn group_wise(q: f64) -> Result<Self> {
        Self::new(q, SparsityMode::GroupWise)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mode(&self) -> SparsityMode {
        self.mode
    }

    /// Number of entries (element-wise) or rows (group-wise) kept in a `p × r` matrix.
    pub fn budget(&self, p: usize, r: usize) -> usize {
        match self.mode {
            SparsityMode::ElementWise => cardinality(self.q, p * r),
            SparsityMode::GroupWise => cardinality(self.q, p),
        }
    }

    /// Applies the matching thresholding operator.
    pub fn apply(&self, s: &Mat) -> Mat {
        let mut out = s.clone();
        let k = self.budget(s.nrows(), s.ncols());
        match self.mode {
            SparsityMode::ElementWise => keep_top_entries(&mut out, k),
            SparsityMode::GroupWise => keep_top_rows(&mut out, k),
        }
        out
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sparsity level {q} must lie in (0, 1]")))
    }
}

/// `max(1, floor(q · count))`, or `0` when there is nothing to keep.
pub fn cardinality(q: f64, count: usize) -> usize {
    if count == 0 {
        return 0;
    }
    ((q * count as f64 + COUNT_SLACK).floor() as usize).clamp(1, count)
}

/// Keeps the `floor(q_e · p · r)` entries of largest magnitude.
pub fn quantile_threshold_elem(s: &Mat, q_e: f64) -> Result<Mat> {
    Ok(SparsityLevel::element_wise(q_e)?.apply(s))
}

/// Keeps the `floor(q_g · p)` rows of largest Euclidean norm.
pub fn quantile_threshold_group(s: &Mat, q_g: f64) -> Result<Mat> {
    Ok(SparsityLevel::group_wise(q_g)?.apply(s))
}

/// Indices `0..scores.len()` ordered by decreasing score, ties by index.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    idx
}

/// Positions outside the `k` largest scores, ties broken toward the lower
/// index so the kept set matches a stable descending sort.
fn below_top(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k == 0 {
        return idx;
    }
    idx.select_nth_unstable_by(k - 1, |&a, &b| match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    idx.split_off(k)
}

/// Zeroes all but the `k` largest-magnitude entries, in place.
pub fn keep_top_entries(s: &mut Mat, k: usize) {
    let (p, r) = s.shape();
    if k >= p * r {
        return;
    }
    // row-major flattening defines the tie order
    let mags: Vec<f64> = (0..p * r).map(|l| s[(l / r, l % r)].abs()).collect();
    for l in below_top(&mags, k) {
        s[(l / r, l % r)] = 0.0;
    }
}

/// Zeroes all but the `k` rows of largest Euclidean norm, in place.
pub fn keep_top_rows(s: &mut Mat, k: usize) {
    if k >= s.nrows() {
        return;
    }
    for i in below_top(&row_norms(s), k) {
        s.row_mut(i).fill(0.0);
    }
}

pub fn row_norms(s: &Mat) -> Vec<f64> {
    s.row_iter().map(|row| row.norm()).collect()
}

/// Row-major `(row, col)` positions of nonzero entries.
pub fn nonzero_entries(s: &Mat) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            if s[(i, j)] != 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Indices of rows with at least one nonzero entry.
pub fn nonzero_rows(s: &Mat) -> Vec<usize> {
    (0..s.nrows())
        .filter(|&i| s.row(i).iter().any(|&v| v != 0.0))
        .collect()
}
