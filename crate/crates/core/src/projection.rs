//! Metric projection onto the cone `Q = {β : β_j ≥ 0, j < q}` under a
//! positive-definite metric, and the geometry-invariant shift
//! `Θ(β, x) = lim_a P(aβ + x) − aβ`.
//!
//! For `q ≤ 12` the projection is found by enumerating pinned sets in order
//! of size and returning the first candidate satisfying the KKT conditions.
//! Each pinned set `S` has a closed form: with `δ = β − v`, `δ_S = −v_S` and
//! `δ_F = −Σ_FF⁻¹ Σ_FS δ_S`. Larger `q` falls back to a primal active-set
//! iteration.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Constrained coordinates at or below this value are on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Largest `q` handled by exhaustive enumeration.
pub const MAX_ENUMERATION_Q: usize = 12;

#[derive(Debug, Clone)]
pub struct ProjectionProblem {
    pub v: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub q: usize,
}

impl ProjectionProblem {
    pub fn new(v: DVector<f64>, sigma: DMatrix<f64>, q: usize) -> Result<Self> {
        validate_metric(&sigma, q)?;
        if v.len() != sigma.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "vector has length {}, metric is {}x{}",
                v.len(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        Ok(Self { v, sigma, q })
    }
}

fn validate_metric(sigma: &DMatrix<f64>, q: usize) -> Result<()> {
    let (r, c) = sigma.shape();
    if r != c || r == 0 {
        return Err(Error::DimensionMismatch(
            "projection metric must be square".into(),
        ));
    }
    if q > r {
        return Err(Error::TooManyConstraints { q, p: r });
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = sigma.amax();
    if (sigma - sigma.transpose()).amax() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput(
            "projection metric not symmetric".into(),
        ));
    }
    if sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// One pinned set: `δ_F = gain · v_S`.
#[derive(Debug, Clone)]
struct Face {
    pinned: Vec<usize>,
    free: Vec<usize>,
    gain: DMatrix<f64>,
}

/// Reusable projector for a fixed metric.
#[derive(Debug, Clone)]
pub struct Projector {
    sigma: DMatrix<f64>,
    q: usize,
    faces: Option<Vec<Face>>,
}

impl Projector {
    pub fn new(sigma: &DMatrix<f64>, q: usize) -> Result<Self> {
        validate_metric(sigma, q)?;
        let faces = (q <= MAX_ENUMERATION_Q).then(|| build_faces(sigma, q));
        Ok(Self {
            sigma: sigma.clone(),
            q,
            faces,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.q == 0 {
            return v.clone();
        }
        if (0..self.q).all(|j| v[j] >= 0.0) {
            return v.clone();
        }
        if let Some(faces) = &self.faces {
            if let Some(b) = self.enumerate(faces, v) {
                return b;
            }
        }
        self.active_set(v)
    }

    fn tolerances(&self, v: &DVector<f64>) -> (f64, f64) {
        let vmax = v.amax().max(1.0);
        (1e-12 * vmax, 1e-10 * self.sigma.amax().max(1.0) * vmax)
    }

    fn enumerate(&self, faces: &[Face], v: &DVector<f64>) -> Option<DVector<f64>> {
        let (ptol, dtol) = self.tolerances(v);
        for face in faces {
            let mut beta = v.clone();
            let vs = DVector::from_iterator(face.pinned.len(), face.pinned.iter().map(|&j| v[j]));
            let df = &face.gain * &vs;
            for (k, &j) in face.free.iter().enumerate() {
                beta[j] = v[j] + df[k];
            }
            for &j in &face.pinned {
                beta[j] = 0.0;
            }
            if (0..self.q).any(|j| beta[j] < -ptol) {
                continue;
            }
            let grad = &self.sigma * (&beta - v);
            if face.pinned.iter().any(|&j| grad[j] < -dtol) {
                continue;
            }
            for j in 0..self.q {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                }
            }
            return Some(beta);
        }
        None
    }

    /// Primal active-set method started from the clipped point.
    fn active_set(&self, v: &DVector<f64>) -> DVector<f64> {
        let p = self.dim();
        let q = self.q;
        let (_, dtol) = self.tolerances(v);
        let mut pinned: Vec<bool> = (0..p).map(|j| j < q && v[j] < 0.0).collect();
        let mut beta = v.clone();
        for j in 0..q {
            if pinned[j] {
                beta[j] = 0.0;
            }
        }
        for _ in 0..(10 * p + 100) {
            let s: Vec<usize> = (0..p).filter(|&j| pinned[j]).collect();
            let target = solve_face(&self.sigma, v, &s);
            let step = &target - &beta;
            // Largest feasible step toward the face minimiser.
            let mut alpha = 1.0;
            let mut blocking = None;
            for j in 0..q {
                if !pinned[j] && step[j] < 0.0 {
                    let a = -beta[j] / step[j];
                    if a < alpha {
                        alpha = a;
                        blocking = Some(j);
                    }
                }
            }
            beta.axpy(alpha, &step, 1.0);
            if let Some(j) = blocking {
                beta[j] = 0.0;
                pinned[j] = true;
                continue;
            }
            let grad = &self.sigma * (&beta - v);
            let worst = s
                .iter()
                .copied()
                .filter(|&j| grad[j] < -dtol)
                .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
            match worst {
                Some(j) => pinned[j] = false,
                None => break,
            }
        }
        for j in 0..q {
            if beta[j] < 0.0 {
                beta[j] = 0.0;
            }
        }
        beta
    }
}

fn solve_face(sigma: &DMatrix<f64>, v: &DVector<f64>, pinned: &[usize]) -> DVector<f64> {
    let p = v.len();
    let free: Vec<usize> = (0..p).filter(|j| !pinned.contains(j)).collect();
    let mut beta = v.clone();
    for &j in pinned {
        beta[j] = 0.0;
    }
    if free.is_empty() || pinned.is_empty() {
        return beta;
    }
    let sff = DMatrix::from_fn(free.len(), free.len(), |a, b| sigma[(free[a], free[b])]);
    let sfs = DMatrix::from_fn(free.len(), pinned.len(), |a, b| sigma[(free[a], pinned[b])]);
    let vs = DVector::from_iterator(pinned.len(), pinned.iter().map(|&j| v[j]));
    let chol = sff
        .cholesky()
        .expect("principal blocks of a PD matrix are PD");
    let df = chol.solve(&(sfs * vs));
    for (k, &j) in free.iter().enumerate() {
        beta[j] = v[j] + df[k];
    }
    beta
}

/// Pinned sets of `0..q`, ordered by size then lexicographically.
fn build_faces(sigma: &DMatrix<f64>, q: usize) -> Vec<Face> {
    let p = sigma.nrows();
    let mut masks: Vec<u32> = (0..(1u32 << q)).collect();
    masks.sort_by_key(|&m| (m.count_ones(), m));
    masks
        .into_iter()
        .map(|mask| {
            let pinned: Vec<usize> = (0..q).filter(|&j| mask & (1 << j) != 0).collect();
            let free: Vec<usize> = (0..p).filter(|j| !pinned.contains(j)).collect();
            let gain = if pinned.is_empty() || free.is_empty() {
                DMatrix::zeros(free.len(), pinned.len())
            } else {
                let sff =
                    DMatrix::from_fn(free.len(), free.len(), |a, b| sigma[(free[a], free[b])]);
                let sfs =
                    DMatrix::from_fn(free.len(), pinned.len(), |a, b| sigma[(free[a], pinned[b])]);
                let chol = sff
                    .cholesky()
                    .expect("principal blocks of a PD matrix are PD");
                chol.solve(&sfs)
            };
            Face { pinned, free, gain }
        })
        .collect()
}

/// `argmin_{β ∈ Q} (β − v)ᵀ Σ (β − v)`.
pub fn metric_project(prob: &ProjectionProblem) -> Result<DVector<f64>> {
    Ok(Projector::new(&prob.sigma, prob.q)?.project(&prob.v))
}

/// Geometry-invariant shift `Θ_{Q,Σ}(β, x)`.
///
/// Evaluates `P(aβ + x) − aβ` for `a = a₀, 2a₀, 4a₀, …` until two successive
/// values agree, with `a₀ = max(1, 2‖x‖ / min{β_j > 0 : j < q})`.
pub fn theta_shift(
    beta: &DVector<f64>,
    x: &DVector<f64>,
    sigma: &DMatrix<f64>,
    q: usize,
) -> Result<DVector<f64>> {
    let projector = Projector::new(sigma, q)?;
    theta_shift_with(&projector, beta, x)
}

pub fn theta_shift_with(
    projector: &Projector,
    beta: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = projector.dim();
    let q = projector.q();
    if beta.len() != p || x.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "theta_shift expects vectors of length {p}"
        )));
    }
    if (0..q).any(|j| beta[j] < -BOUNDARY_TOL) {
        return Err(Error::InvalidInput("beta is not in the cone".into()));
    }
    let mut b = beta.clone();
    for j in 0..q {
        if b[j] <= BOUNDARY_TOL {
            b[j] = 0.0;
        }
    }
    let min_pos = (0..q)
        .map(|j| b[j])
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut a = if min_pos.is_finite() {
        (2.0 * x.norm() / min_pos).max(1.0)
    } else {
        1.0
    };
    let shift_at = |a: f64| projector.project(&(&b * a + x)) - &b * a;
    let mut prev = shift_at(a);
    for _ in 0..60 {
        a *= 2.0;
        let cur = shift_at(a);
        if (&cur - &prev).amax() <= 1e-10 * (1.0 + prev.amax()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::InvalidInput(
        "geometry-invariant shift did not stabilise within 60 doublings".into(),
    ))
}
