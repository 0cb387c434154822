//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative tolerance used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Numerical rank from singular values, relative to the largest one.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Symmetric positive-definite solve with a ridge fallback.
///
/// If the smallest eigenvalue falls below `1e-10 * trace / d`, a ridge of
/// `1e-8 * trace / d` is added before factorising. Returns the factor's
/// solution and whether the ridge was applied.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub ridged: bool,
    /// The matrix actually factorised (ridge included).
    pub matrix: DMatrix<f64>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>, what: &str) -> Result<Self> {
        let d = m.nrows();
        if d != m.ncols() {
            return Err(Error::DimensionMismatch(format!("{what} is not square")));
        }
        if d == 0 {
            return Err(Error::InvalidInput(format!("{what} is empty")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(format!("{what} has non-finite entries")));
        }
        let sym = (m + m.transpose()) * 0.5;
        let scale = sym.trace() / d as f64;
        if !(scale > 0.0) {
            return Err(Error::Singular(format!("{what} has non-positive trace")));
        }
        let min_eig = sym
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let mut matrix = sym;
        let mut ridged = false;
        if min_eig < 1e-10 * scale {
            log::warn!(
                "{what}: smallest eigenvalue {min_eig:.3e} below threshold, adding ridge {:.3e}",
                1e-8 * scale
            );
            for i in 0..d {
                matrix[(i, i)] += 1e-8 * scale;
            }
            ridged = true;
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("{what} is singular beyond regularization")))?;
        Ok(Self {
            chol,
            ridged,
            matrix,
        })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Column subset of a matrix, in the given order.
pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Entry subset of a vector, in the given order.
pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Rows `rows`, columns `cols` of a matrix.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Complement of `idx` in `0..p`, ascending.
pub fn complement(idx: &[usize], p: usize) -> Vec<usize> {
    (0..p).filter(|j| !idx.contains(j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_duplicated_column() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(numerical_rank(&m, RANK_TOL), 1);
    }

    #[test]
    fn ridge_applied_to_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = SpdFactor::new(&m, "test").unwrap();
        assert!(f.ridged);
        let f = SpdFactor::new(&DMatrix::identity(2, 2), "test").unwrap();
        assert!(!f.ridged);
        let x = f.solve(&DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(x[1], 2.0);
    }

    #[test]
    fn complement_keeps_order() {
        assert_eq!(complement(&[1, 3], 5), vec![0, 2, 4]);
    }
}
