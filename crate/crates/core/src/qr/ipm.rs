//! Mehrotra predictor–corrector interior-point method for bounded LPs.
//!
//! Solves
//!
//! ```text
//! min cᵀx  s.t.  A x = b,  0 ≤ x,  x_i ≤ u_i for i < n_upper
//! ```
//!
//! where `A` has few rows (the regression dimension) and many columns (the
//! observations plus one slack per sign constraint). The normal equations are
//! `m × m`, so each iteration costs `O(N m²)`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub(crate) struct BoundedLp<'a> {
    /// Constraint matrix, m × N.
    pub a: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
    pub c: &'a DVector<f64>,
    /// Upper bounds for the first `u.len()` variables.
    pub u: &'a DVector<f64>,
}

pub(crate) struct IpmSolution {
    /// Multipliers of `A x = b`.
    pub lambda: DVector<f64>,
    pub iterations: usize,
}

pub(crate) struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
        }
    }
}

const STEP_FRACTION: f64 = 0.99995;

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&vi, &d)| -vi / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: DVector<f64>,
    dw: DVector<f64>,
    dl: DVector<f64>,
    dz: DVector<f64>,
    dv: DVector<f64>,
}

pub(crate) fn solve(
    lp: &BoundedLp<'_>,
    x0: DVector<f64>,
    lambda0: DVector<f64>,
    opts: &IpmOptions,
) -> Result<IpmSolution> {
    let a = lp.a;
    let (m, big_n) = a.shape();
    let nu = lp.u.len();
    let at = a.transpose();

    let mut x = x0;
    let mut lambda = lambda0;
    let mut w = DVector::from_fn(nu, |i, _| (lp.u[i] - x[i]).max(1e-3 * lp.u[i]));

    // Dual slacks from the dual residual at the starting multipliers.
    let r0 = lp.c - &at * &lambda;
    let shift = r0.iter().map(|v| v.abs()).sum::<f64>() / big_n as f64 * 0.1 + 1e-2;
    let mut z = DVector::from_fn(big_n, |i, _| r0[i].max(0.0) + shift);
    let mut v = DVector::from_fn(nu, |i, _| (-r0[i]).max(0.0) + shift);

    let bnorm = 1.0 + lp.b.norm();
    let cnorm = 1.0 + lp.c.norm();
    let n_compl = (big_n + nu) as f64;

    let mut gap = f64::INFINITY;
    let mut infeas = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let rb = lp.b - a * &x;
        let mut rc = lp.c - &at * &lambda - &z;
        for i in 0..nu {
            rc[i] += v[i];
        }
        let ru = DVector::from_fn(nu, |i, _| lp.u[i] - x[i] - w[i]);

        let pobj = lp.c.dot(&x);
        let dobj = lp.b.dot(&lambda) - lp.u.dot(&v);
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        infeas = (rb.norm() / bnorm)
            .max(rc.norm() / cnorm)
            .max(ru.norm() / (1.0 + lp.u.norm()));
        if gap < opts.tol && infeas < opts.tol {
            return Ok(IpmSolution {
                lambda,
                iterations: iter,
            });
        }

        let mu = (x.dot(&z) + w.dot(&v)) / n_compl;

        // D = (z/x + v/w)^-1
        let d = DVector::from_fn(big_n, |i, _| {
            let mut s = z[i] / x[i];
            if i < nu {
                s += v[i] / w[i];
            }
            1.0 / s
        });
        let mut normal = DMatrix::zeros(m, m);
        for j in 0..big_n {
            let col = a.column(j);
            normal.ger(d[j], &col, &col, 1.0);
        }
        let chol = match normal.clone().cholesky() {
            Some(c) => c,
            None => {
                let tr = normal.trace() / m as f64;
                for k in 0..m {
                    normal[(k, k)] += 1e-12 * tr.max(1e-300);
                }
                normal.cholesky().ok_or_else(|| Error::NoConvergence {
                    iterations: iter,
                    gap,
                    infeasibility: infeas,
                })?
            }
        };

        let direction = |r_xz: &DVector<f64>, r_wv: &DVector<f64>| -> Direction {
            let mut rho = &rc - r_xz.component_div(&x);
            for i in 0..nu {
                rho[i] += (r_wv[i] - v[i] * ru[i]) / w[i];
            }
            let rhs = &rb + a * d.component_mul(&rho);
            let dl = chol.solve(&rhs);
            let dx = d.component_mul(&(&at * &dl - &rho));
            let dz = (r_xz - z.component_mul(&dx)).component_div(&x);
            let dw = DVector::from_fn(nu, |i, _| ru[i] - dx[i]);
            let dv = DVector::from_fn(nu, |i, _| (r_wv[i] - v[i] * dw[i]) / w[i]);
            Direction { dx, dw, dl, dz, dv }
        };

        // Predictor.
        let r_xz = -x.component_mul(&z);
        let r_wv = -w.component_mul(&v);
        let aff = direction(&r_xz, &r_wv);
        let ap = max_step(&x, &aff.dx).min(max_step(&w, &aff.dw)).min(1.0);
        let ad = max_step(&z, &aff.dz).min(max_step(&v, &aff.dv)).min(1.0);
        let mu_aff = ((&x + ap * &aff.dx).dot(&(&z + ad * &aff.dz))
            + (&w + ap * &aff.dw).dot(&(&v + ad * &aff.dv)))
            / n_compl;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let r_xz = DVector::from_fn(big_n, |i, _| {
            sigma * mu - x[i] * z[i] - aff.dx[i] * aff.dz[i]
        });
        let r_wv = DVector::from_fn(nu, |i, _| sigma * mu - w[i] * v[i] - aff.dw[i] * aff.dv[i]);
        let dir = direction(&r_xz, &r_wv);
        let ap = (STEP_FRACTION * max_step(&x, &dir.dx).min(max_step(&w, &dir.dw))).min(1.0);
        let ad = (STEP_FRACTION * max_step(&z, &dir.dz).min(max_step(&v, &dir.dv))).min(1.0);

        x.axpy(ap, &dir.dx, 1.0);
        w.axpy(ap, &dir.dw, 1.0);
        lambda.axpy(ad, &dir.dl, 1.0);
        z.axpy(ad, &dir.dz, 1.0);
        v.axpy(ad, &dir.dv, 1.0);

        if x.iter().chain(lambda.iter()).any(|e| !e.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                gap,
                infeasibility: infeas,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        gap,
        infeasibility: infeas,
    })
}
