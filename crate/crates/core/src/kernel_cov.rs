//! Powell sandwich matrices and cross-validated bandwidth selection.
//!
//! `powell_sandwich` computes `(nh)⁻¹ Σ_i φ(ε̂_i/h) x_i^{(L)} x_i^{(R)ᵀ}` for
//! column sets `L` and `R`; the full-model, restricted-model and rank-based
//! variants differ only in which residuals and column sets are passed in.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use nalgebra::DVector;

use crate::qr::Dataset;
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichEstimate {
    pub matrix: DMatrix<f64>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub h: f64,
    pub n: usize,
}

pub fn powell_sandwich(
    data: &Dataset,
    residuals: &DVector<f64>,
    left: &[usize],
    right: &[usize],
    h: f64,
) -> Result<SandwichEstimate> {
    let matrix = sandwich_matrix(data.x(), residuals, left, right, h)?;
    Ok(SandwichEstimate {
        matrix,
        left: left.to_vec(),
        right: right.to_vec(),
        h,
        n: data.n(),
    })
}

/// The sandwich sum on a raw design matrix (any number of rows).
pub fn sandwich_matrix(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    left: &[usize],
    right: &[usize],
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let (n, p) = x.shape();
    if residuals.len() != n || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} residuals for {n} observations",
            residuals.len()
        )));
    }
    if left.iter().chain(right).any(|&j| j >= p) {
        return Err(Error::DimensionMismatch("column index out of range".into()));
    }
    let mut m = DMatrix::zeros(left.len(), right.len());
    for i in 0..n {
        let w = gaussian_kernel(residuals[i] / h);
        if w == 0.0 {
            continue;
        }
        for (a, &l) in left.iter().enumerate() {
            let xl = w * x[(i, l)];
            for (b, &r) in right.iter().enumerate() {
                m[(a, b)] += xl * x[(i, r)];
            }
        }
    }
    m /= n as f64 * h;
    Ok(m)
}

/// Normal reference bandwidth `1.06 σ̂ n^{-1/5}`.
pub fn reference_bandwidth(residuals: &DVector<f64>) -> f64 {
    let n = residuals.len() as f64;
    let mean = residuals.mean();
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

/// 15 geometric points spanning `[0.25, 4]` times the reference bandwidth.
pub fn default_bandwidth_grid(residuals: &DVector<f64>) -> Result<Vec<f64>> {
    let h0 = reference_bandwidth(residuals);
    if !(h0 > 0.0 && h0.is_finite()) {
        return Err(Error::ZeroVarianceResiduals);
    }
    let k = 15;
    Ok((0..k)
        .map(|i| {
            let e = -2.0 + 4.0 * i as f64 / (k - 1) as f64;
            h0 * 2f64.powf(e)
        })
        .collect())
}

/// Held-out Gaussian-KDE log-likelihood summed over contiguous folds.
pub fn cv_log_likelihood(residuals: &[f64], folds: usize, h: f64) -> f64 {
    let n = residuals.len();
    let mut total = 0.0;
    for k in 0..folds {
        let (lo, hi) = fold_bounds(n, folds, k);
        let n_train = (n - (hi - lo)) as f64;
        let norm = -(n_train * h).ln() - LN_SQRT_2PI;
        for &e in &residuals[lo..hi] {
            let exps = residuals[..lo]
                .iter()
                .chain(&residuals[hi..])
                .map(|&t| -0.5 * ((e - t) / h).powi(2));
            total += norm + log_sum_exp(exps);
        }
    }
    total
}

fn fold_bounds(n: usize, folds: usize, k: usize) -> (usize, usize) {
    (k * n / folds, (k + 1) * n / folds)
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + it.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Grid bandwidth maximising the blocked K-fold held-out likelihood; ties go
/// to the smaller bandwidth.
pub fn select_bandwidth_cv(residuals: &DVector<f64>, folds: usize, grid: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if folds < 2 || n < 2 * folds {
        return Err(Error::InvalidInput(format!(
            "need at least {} residuals for {folds}-fold cross-validation",
            2 * folds.max(2)
        )));
    }
    if grid.is_empty() || grid.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidInput(
            "bandwidth grid must be nonempty and positive".into(),
        ));
    }
    let first = residuals[0];
    if residuals.iter().all(|&r| r == first) {
        return Err(Error::ZeroVarianceResiduals);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = residuals.as_slice();
    let mut best = (f64::NEG_INFINITY, sorted[0]);
    for &h in &sorted {
        let score = cv_log_likelihood(r, folds, h);
        if score > best.0 {
            best = (score, h);
        }
    }
    Ok(best.1)
}
