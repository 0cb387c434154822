//! Inequality-constrained linear quantile regression for piecewise locally
//! stationary time series.
//!
//! The crate is organised bottom-up:
//!
//! - [`constraint`]: general `Cβ ≥ c` constraints and their reduction to the
//!   nonnegative cone `Q = {β : β_j ≥ 0, j < q}`.
//! - [`qr`]: check-loss fitting (unconstrained, cone-constrained, restricted)
//!   by a primal–dual interior-point LP solver.
//! - [`projection`]: metric projection onto `Q` under a positive-definite
//!   metric and the geometry-invariant shift.
//! - [`kernel_cov`]: Powell sandwich matrices and cross-validated bandwidths.
//! - [`bootstrap`]: the projected multiplier bootstrap (intervals and tests).
//! - [`statistic`]: observed likelihood-ratio and rank-based statistics.
//! - [`datagen`]: simulated piecewise locally stationary designs.
//! - [`harness`]: Monte Carlo experiments (type I error, coverage, power).
//!
//! Every routine after [`constraint`] works in canonical coordinates, where
//! the first `q` coefficients are the constrained ones.

pub mod bootstrap;
pub mod constraint;
pub mod datagen;
mod error;
pub mod harness;
pub mod kernel_cov;
pub mod linalg;
pub mod projection;
pub mod qr;
pub mod rng;
pub mod statistic;

pub use error::{Error, Result};
pub use qr::{Dataset, FitResult, QuantileSpec};
