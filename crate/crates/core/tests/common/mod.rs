//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use cqreg::qr::total_check_loss;

/// Subsets of `0..n` of size `k`, lexicographic.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum check loss over every vertex of `{β : β_j ≥ 0, j < q}` defined by
/// `p` tight constraints drawn from exact-fit observations and pinned
/// coordinates. For full-rank `x` the LP optimum is attained at one of them.
pub fn brute_force_min_loss(x: &DMatrix<f64>, y: &DVector<f64>, tau: f64, q: usize) -> f64 {
    let (n, p) = x.shape();
    let mut best = f64::INFINITY;
    for k in 0..=q.min(p) {
        for pinned in combinations(q, k) {
            for obs in combinations(n, p - k) {
                let mut sys = DMatrix::zeros(p, p);
                let mut rhs = DVector::zeros(p);
                for (r, &i) in obs.iter().enumerate() {
                    sys.row_mut(r).copy_from(&x.row(i));
                    rhs[r] = y[i];
                }
                for (r, &j) in pinned.iter().enumerate() {
                    sys[(p - k + r, j)] = 1.0;
                }
                if sys.determinant().abs() < 1e-12 {
                    continue;
                }
                let Some(beta) = sys.lu().solve(&rhs) else {
                    continue;
                };
                if (0..q).any(|j| beta[j] < -1e-12) {
                    continue;
                }
                let loss = total_check_loss(&(y - x * &beta), tau);
                best = best.min(loss);
            }
        }
    }
    best
}

/// Projection onto `{β : β_j ≥ 0, j < q}` under metric `sigma` by trying
/// every pinned set: minimise over the free coordinates, keep primal-feasible
/// candidates, return the one with the smallest objective.
pub fn projection_oracle(v: &DVector<f64>, sigma: &DMatrix<f64>, q: usize) -> DVector<f64> {
    let p = v.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in 0..=q {
        for pinned in combinations(q, k) {
            let free: Vec<usize> = (0..p).filter(|j| !pinned.contains(j)).collect();
            let mut beta = v.clone();
            for &j in &pinned {
                beta[j] = 0.0;
            }
            if !free.is_empty() {
                // Σ_FF δ_F = −Σ_FS δ_S with δ = β − v.
                let sff =
                    DMatrix::from_fn(free.len(), free.len(), |a, b| sigma[(free[a], free[b])]);
                let mut rhs = DVector::zeros(free.len());
                for (a, &fa) in free.iter().enumerate() {
                    for &s in &pinned {
                        rhs[a] -= sigma[(fa, s)] * (0.0 - v[s]);
                    }
                }
                let delta = sff.lu().solve(&rhs).expect("principal block invertible");
                for (a, &fa) in free.iter().enumerate() {
                    beta[fa] = v[fa] + delta[a];
                }
            }
            if (0..q).any(|j| beta[j] < -1e-12) {
                continue;
            }
            let d = &beta - v;
            let obj = (d.transpose() * sigma * &d)[0];
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, beta));
            }
        }
    }
    best.expect("the all-pinned candidate is feasible").1
}

/// Random symmetric positive-definite matrix `LLᵀ + 0.1 I`.
pub fn random_spd<R: rand::Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    let l = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &l * l.transpose() + DMatrix::identity(p, p) * 0.1
}
