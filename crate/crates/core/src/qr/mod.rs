//! Check-loss quantile regression fits.
//!
//! The fit `argmin_{β ∈ Q} Σ ρ_τ(y_i − x_iᵀβ)` is solved through its dual,
//!
//! ```text
//! max yᵀd  s.t.  d ∈ [τ−1, τ]ⁿ,  (Xᵀd)_j ≤ 0 for j < q,  (Xᵀd)_j = 0 otherwise,
//! ```
//!
//! shifted to `a = d + 1 − τ ∈ [0, 1]ⁿ` with one slack per sign constraint.
//! The coefficients are the (negated) equality multipliers. After the
//! interior-point solve, a crossover step moves to an optimal vertex when one
//! is found with no larger loss, so interpolated observations have residual
//! exactly zero and binding coefficients are exactly zero.

mod ipm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{complement, numerical_rank, select_columns, RANK_TOL};
use crate::{Error, Result};

/// Coefficients at or below this magnitude count as binding.
pub const ACTIVE_TOL: f64 = 1e-9;

/// Response vector and predictor matrix, rows in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl Dataset {
    /// User-facing constructor: the first column must be the intercept.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let data = Self::new_general(y, x)?;
        if data.x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidInput(
                "first predictor column must be the intercept (all ones)".into(),
            ));
        }
        Ok(data)
    }

    /// Constructor without the intercept requirement (transformed or
    /// column-subset designs).
    pub fn new_general(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "response has length {}, design has {n} rows",
                y.len()
            )));
        }
        if p == 0 {
            return Err(Error::InvalidInput("design has no columns".into()));
        }
        if n <= p {
            return Err(Error::InvalidInput(format!(
                "need more observations than predictors (n = {n}, p = {p})"
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite data entry".into()));
        }
        Ok(Self { y, x })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Dataset restricted to `cols` (in the given order).
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if let Some(&j) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(Error::InvalidInput(format!("column {j} out of range")));
        }
        Dataset::new_general(self.y.clone(), select_columns(&self.x, cols))
    }

    pub(crate) fn is_constant_one(&self, j: usize) -> bool {
        self.x.column(j).iter().all(|&v| v == 1.0)
    }
}

/// Quantile level τ ∈ (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    tau: f64,
}

impl QuantileSpec {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tau must lie in (0, 1), got {tau}"
            )));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Check function `ρ_τ(u) = u(τ − 1{u<0})`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Left derivative of the check function, `τ − 1{u<0}`; `psi(0) = τ`.
#[inline]
pub fn psi(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

pub fn total_check_loss(residuals: &DVector<f64>, tau: f64) -> f64 {
    residuals.iter().map(|&r| check_loss(r, tau)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub loss: f64,
    /// Constrained coordinates (`j < q`) with `β_j = 0`.
    pub active: Vec<usize>,
    /// Number of sign-constrained leading coordinates.
    pub q: usize,
    pub constrained: bool,
    pub tau: f64,
    pub iterations: usize,
}

/// A fit of the model without the columns in `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedFit {
    pub fit: FitResult,
    /// `kept[k]` is the full-model index of restricted coordinate `k`.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

impl RestrictedFit {
    /// Restricted coefficients embedded in the full coordinate system, with
    /// zeros at the dropped indices.
    pub fn embedded_beta(&self, p: usize) -> DVector<f64> {
        let mut b = DVector::zeros(p);
        for (k, &j) in self.kept.iter().enumerate() {
            b[j] = self.fit.beta[k];
        }
        b
    }
}

/// Unconstrained fit, `argmin_{β ∈ ℝᵖ}`.
pub fn fit_unconstrained(data: &Dataset, spec: QuantileSpec) -> Result<FitResult> {
    solve_fit(data, spec.tau(), 0)
}

/// Fit over the cone `{β : β_j ≥ 0, j < q}`. `q = 0` is the unconstrained fit.
pub fn fit_constrained(data: &Dataset, spec: QuantileSpec, q: usize) -> Result<FitResult> {
    if q > data.p() {
        return Err(Error::TooManyConstraints { q, p: data.p() });
    }
    solve_fit(data, spec.tau(), q)
}

/// Fit on the columns outside `tested`, keeping the sign constraint on every
/// surviving coordinate that was constrained in the full model.
pub fn fit_restricted(
    data: &Dataset,
    spec: QuantileSpec,
    tested: &[usize],
    q: usize,
) -> Result<RestrictedFit> {
    let p = data.p();
    if q > p {
        return Err(Error::TooManyConstraints { q, p });
    }
    let dropped = validate_tested(data, tested)?;
    let kept = complement(&dropped, p);
    let sub = data.select_columns(&kept)?;
    let q_kept = kept.iter().filter(|&&j| j < q).count();
    let fit = solve_fit(&sub, spec.tau(), q_kept)?;
    Ok(RestrictedFit { fit, kept, dropped })
}

/// Sorted, de-duplicated tested set; rejects out-of-range indices, the
/// intercept, and sets that leave nothing to fit.
pub(crate) fn validate_tested(data: &Dataset, tested: &[usize]) -> Result<Vec<usize>> {
    let p = data.p();
    let mut a = tested.to_vec();
    a.sort_unstable();
    a.dedup();
    if a.len() != tested.len() {
        return Err(Error::InvalidInput(
            "tested index set has duplicates".into(),
        ));
    }
    if let Some(&j) = a.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidInput(format!(
            "tested index {j} out of range"
        )));
    }
    if let Some(&j) = a.iter().find(|&&j| data.is_constant_one(j)) {
        return Err(Error::InvalidInput(format!(
            "tested index {j} is the intercept column"
        )));
    }
    if a.len() >= p {
        return Err(Error::InvalidInput(
            "tested set leaves no covariates".into(),
        ));
    }
    Ok(a)
}

fn column_scale(col: nalgebra::DVectorView<'_, f64>) -> f64 {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let mad = col.iter().map(|v| (v - mean).abs()).sum::<f64>() / n;
    if mad > 0.0 {
        mad
    } else {
        col.iter().map(|v| v.abs()).sum::<f64>() / n
    }
}

fn solve_fit(data: &Dataset, tau: f64, q: usize) -> Result<FitResult> {
    let (n, p) = (data.n(), data.p());

    // Standardise columns and response to unit mean absolute deviation.
    let col_scale: Vec<f64> = (0..p)
        .map(|j| {
            if data.is_constant_one(j) {
                1.0
            } else {
                column_scale(data.x.column(j))
            }
        })
        .collect();
    if col_scale.iter().any(|&s| s == 0.0) {
        return Err(Error::RankDeficientDesign);
    }
    let y_scale = {
        let s = column_scale(data.y.column(0));
        if s > 0.0 {
            s
        } else {
            1.0
        }
    };
    let xs = DMatrix::from_fn(n, p, |i, j| data.x[(i, j)] / col_scale[j]);
    let ys = &data.y / y_scale;
    if numerical_rank(&xs, RANK_TOL) < p {
        return Err(Error::RankDeficientDesign);
    }

    // LP in standard form: variables (a_1..a_n, s_1..s_q).
    let big_n = n + q;
    let mut a = DMatrix::zeros(p, big_n);
    for i in 0..n {
        for j in 0..p {
            a[(j, i)] = xs[(i, j)];
        }
    }
    for j in 0..q {
        a[(j, n + j)] = 1.0;
    }
    let b = xs.transpose() * DVector::from_element(n, 1.0 - tau);
    let mut c = DVector::zeros(big_n);
    for i in 0..n {
        c[i] = -ys[i];
    }
    let u = DVector::from_element(n, 1.0);

    // Start: a at its centre value, slacks at a scale comparable to b,
    // multipliers from least squares.
    let slack0 = b.amax().max(1.0) * 0.1;
    let x0 = DVector::from_fn(big_n, |i, _| if i < n { 1.0 - tau } else { slack0 });
    let ls = xs
        .clone()
        .svd(true, true)
        .solve(&ys, 1e-12)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let lambda0 = -ls;

    let lp = ipm::BoundedLp {
        a: &a,
        b: &b,
        c: &c,
        u: &u,
    };
    let sol = ipm::solve(&lp, x0, lambda0, &ipm::IpmOptions::default())?;
    let mut beta_s: DVector<f64> = -&sol.lambda;
    for j in 0..q {
        if beta_s[j] < 0.0 {
            beta_s[j] = 0.0;
        }
    }
    let ipm_resid = &ys - &xs * &beta_s;
    let ipm_loss = total_check_loss(&ipm_resid, tau);

    let mut zero_rows: Vec<usize> = Vec::new();
    if let Some((vb, rows)) = crossover(&xs, &ys, &beta_s, &ipm_resid, q) {
        let vr = &ys - &xs * &vb;
        let vloss = total_check_loss(&vr, tau);
        if vloss <= ipm_loss + 1e-11 * (1.0 + ipm_loss) {
            beta_s = vb;
            zero_rows = rows;
        }
    }

    let beta = DVector::from_fn(p, |j, _| beta_s[j] * y_scale / col_scale[j]);
    let mut residuals = &data.y - &data.x * &beta;
    for &i in &zero_rows {
        residuals[i] = 0.0;
    }
    let loss = total_check_loss(&residuals, tau);
    let active = (0..q).filter(|&j| beta[j].abs() <= ACTIVE_TOL).collect();
    Ok(FitResult {
        beta,
        residuals,
        loss,
        active,
        q,
        constrained: q > 0,
        tau,
        iterations: sol.iterations,
    })
}

/// Move from an interior-point solution to a nearby vertex.
///
/// Picks the `p` tightest linearly independent primal constraints (zero
/// residuals and binding sign constraints), solves for the vertex they
/// define, and returns it with the interpolated observations. Returns `None`
/// if the vertex is singular or violates a sign constraint.
fn crossover(
    xs: &DMatrix<f64>,
    ys: &DVector<f64>,
    beta: &DVector<f64>,
    resid: &DVector<f64>,
    q: usize,
) -> Option<(DVector<f64>, Vec<usize>)> {
    let (n, p) = xs.shape();
    // (tightness, candidate): candidate < n is an observation, else bound.
    let mut cands: Vec<(f64, usize)> = (0..n).map(|i| (resid[i].abs(), i)).collect();
    cands.extend((0..q).map(|j| (beta[j].abs(), n + j)));
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut chosen: Vec<usize> = Vec::with_capacity(p);
    for &(_, k) in &cands {
        if chosen.len() == p {
            break;
        }
        let row: DVector<f64> = if k < n {
            xs.row(k).transpose()
        } else {
            let mut e = DVector::zeros(p);
            e[k - n] = 1.0;
            e
        };
        let norm0 = row.norm();
        let mut v = row;
        for _ in 0..2 {
            for o in &ortho {
                let d = o.dot(&v);
                v.axpy(-d, o, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-8 * norm0 {
            ortho.push(v / nv);
            chosen.push(k);
        }
    }
    if chosen.len() < p {
        return None;
    }

    let mut sys = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for (r, &k) in chosen.iter().enumerate() {
        if k < n {
            sys.row_mut(r).copy_from(&xs.row(k));
            rhs[r] = ys[k];
        } else {
            sys[(r, k - n)] = 1.0;
        }
    }
    let mut vb = sys.lu().solve(&rhs)?;
    for &k in &chosen {
        if k >= n {
            vb[k - n] = 0.0;
        }
    }
    if vb.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scale = vb.amax().max(1.0);
    if (0..q).any(|j| vb[j] < -1e-12 * scale) {
        return None;
    }
    for j in 0..q {
        if vb[j] < 0.0 {
            vb[j] = 0.0;
        }
    }
    let rows = chosen.into_iter().filter(|&k| k < n).collect();
    Some((vb, rows))
}

#[cfg(test)]
mod tests;
