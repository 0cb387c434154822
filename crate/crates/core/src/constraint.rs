//! Linear inequality constraints `Cβ ≥ c` and their canonical form.
//!
//! A full-row-rank `C` (q × p) is completed to an invertible `T` whose first
//! q rows are `C`. With `γ = Tβ − t0` and `t0 = (c, 0)`, the feasible set
//! becomes the cone `Q = {γ : γ_j ≥ 0, j < q}`. The regression is carried
//! along: `xᵀβ = zᵀγ + zᵀt0` with `z = T⁻ᵀx`.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{numerical_rank, RANK_TOL};
use crate::qr::Dataset;
use crate::{Error, Result};

/// General inequality constraints `Cβ ≥ c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    c_mat: DMatrix<f64>,
    c_vec: DVector<f64>,
}

impl ConstraintSpec {
    pub fn new(c_mat: DMatrix<f64>, c_vec: DVector<f64>) -> Result<Self> {
        let (q, p) = c_mat.shape();
        if q == 0 || p == 0 {
            return Err(Error::InvalidInput("constraint matrix is empty".into()));
        }
        if q > p {
            return Err(Error::TooManyConstraints { q, p });
        }
        if c_vec.len() != q {
            return Err(Error::DimensionMismatch(format!(
                "constraint offset has length {}, expected {q}",
                c_vec.len()
            )));
        }
        if c_mat.iter().chain(c_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite constraint entry".into()));
        }
        if numerical_rank(&c_mat, RANK_TOL) < q {
            return Err(Error::ConstraintRankDeficient);
        }
        Ok(Self { c_mat, c_vec })
    }

    /// `β_j ≥ 0` for every `j` in `coords`.
    pub fn nonnegative(p: usize, coords: &[usize]) -> Result<Self> {
        let mut c_mat = DMatrix::zeros(coords.len(), p);
        for (r, &j) in coords.iter().enumerate() {
            if j >= p {
                return Err(Error::InvalidInput(format!("coordinate {j} out of range")));
            }
            c_mat[(r, j)] = 1.0;
        }
        Self::new(c_mat, DVector::zeros(coords.len()))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c_mat
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.c_vec
    }

    pub fn q(&self) -> usize {
        self.c_mat.nrows()
    }

    pub fn p(&self) -> usize {
        self.c_mat.ncols()
    }

    pub fn is_satisfied(&self, beta: &DVector<f64>, tol: f64) -> bool {
        (&self.c_mat * beta - &self.c_vec)
            .iter()
            .all(|&v| v >= -tol)
    }
}

/// Invertible change of variables `γ = Tβ − t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTransform {
    t: DMatrix<f64>,
    t_inv: DMatrix<f64>,
    t0: DVector<f64>,
    q: usize,
}

impl CanonicalTransform {
    pub fn identity(p: usize, q: usize) -> Self {
        Self {
            t: DMatrix::identity(p, p),
            t_inv: DMatrix::identity(p, p),
            t0: DVector::zeros(p),
            q,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.t_inv
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.t0
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.t.nrows()
    }

    pub fn to_canonical(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.t * beta - &self.t0
    }

    pub fn from_canonical(&self, gamma: &DVector<f64>) -> DVector<f64> {
        &self.t_inv * (gamma + &self.t0)
    }

    /// Canonical index `r` with `γ_r = T[r, j]·β_j` and `z_r = x_j / T[r, j]`.
    ///
    /// Returns `None` unless row `r` and column `j` of `T` have their only
    /// nonzero entry at `(r, j)` and the offset of `r` is zero, i.e. unless
    /// `β_j = 0` is literally `γ_r = 0`.
    pub fn decoupled_coordinate(&self, j: usize) -> Option<usize> {
        let p = self.p();
        if j >= p {
            return None;
        }
        let rows: Vec<usize> = (0..p).filter(|&r| self.t[(r, j)] != 0.0).collect();
        if rows.len() != 1 {
            return None;
        }
        let r = rows[0];
        let row_single = (0..p).all(|k| k == j || self.t[(r, k)] == 0.0);
        (row_single && self.t0[r] == 0.0).then_some(r)
    }
}

/// Reduce `Cβ ≥ c` to the nonnegative cone on the first `q` coordinates.
///
/// The completion rows are an orthonormal basis of the orthogonal complement
/// of `C`'s row space, built from the standard basis vectors in index order,
/// so coordinates untouched by `C` keep their own axis.
pub fn canonicalize(spec: &ConstraintSpec) -> Result<CanonicalTransform> {
    let (q, p) = spec.c_mat.shape();
    if q > p {
        return Err(Error::TooManyConstraints { q, p });
    }

    // Orthonormal basis of row(C), by modified Gram-Schmidt with one
    // reorthogonalisation pass.
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p);
    for r in 0..q {
        let mut v: DVector<f64> = spec.c_mat.row(r).transpose();
        let norm0 = v.norm();
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let nv = v.norm();
        if nv <= RANK_TOL * norm0.max(1.0) {
            return Err(Error::ConstraintRankDeficient);
        }
        basis.push(v / nv);
    }

    let mut t = DMatrix::zeros(p, p);
    for r in 0..q {
        t.row_mut(r).copy_from(&spec.c_mat.row(r));
    }

    let mut used = vec![false; p];
    for row in q..p {
        let residuals: Vec<(usize, DVector<f64>)> = (0..p)
            .filter(|&k| !used[k])
            .map(|k| {
                let mut v = DVector::zeros(p);
                v[k] = 1.0;
                for _ in 0..2 {
                    for b in &basis {
                        let d = b.dot(&v);
                        v.axpy(-d, b, 1.0);
                    }
                }
                (k, v)
            })
            .collect();
        let best = residuals
            .iter()
            .map(|(_, v)| v.norm())
            .fold(0.0_f64, f64::max);
        if best <= 1e-8 {
            return Err(Error::ConstraintRankDeficient);
        }
        // First axis (in index order) that is not much worse than the best.
        let (k, v) = residuals
            .into_iter()
            .find(|(_, v)| v.norm() >= 0.5 * best)
            .expect("best candidate exists");
        let v = v.normalize();
        // Clean exact zeros so coordinate-aligned completions stay exact.
        let v = v.map(|e| if e.abs() < 1e-15 { 0.0 } else { e });
        t.row_mut(row).copy_from(&v.transpose());
        basis.push(v);
        used[k] = true;
    }

    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or(Error::ConstraintRankDeficient)?;
    let mut t0 = DVector::zeros(p);
    t0.rows_mut(0, q).copy_from(&spec.c_vec);
    Ok(CanonicalTransform { t, t_inv, t0, q })
}

/// Carry a dataset into canonical coordinates: `z_i = T⁻ᵀx_i`,
/// `ỹ_i = y_i − z_iᵀt0`.
pub fn transform_dataset(data: &Dataset, tr: &CanonicalTransform) -> Result<Dataset> {
    if data.p() != tr.p() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} predictors, transform expects {}",
            data.p(),
            tr.p()
        )));
    }
    let z = data.x() * &tr.t_inv;
    let y = data.y() - &z * &tr.t0;
    Dataset::new_general(y, z)
}
