//! Observed likelihood-ratio and rank-based statistics for `H₀: β^{(A)} = 0`.
//!
//! The likelihood-ratio statistic is the increase in check loss when the
//! tested columns are dropped. The rank-based statistic compares the
//! ψ-weighted score of the tested columns under the full and restricted
//! residuals, standardized by `D_n = Σ x_i^{(A)} x_i^{(A)ᵀ}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{numerical_rank, select_columns, SpdFactor, RANK_TOL};
use crate::qr::{psi, validate_tested, Dataset, FitResult, QuantileSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "RB")]
    Rb,
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestKind::Lr => "LR",
            TestKind::Rb => "RB",
        })
    }
}

/// Tuning values a test was run with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfigEcho {
    pub m: usize,
    pub h: f64,
    pub b: usize,
    pub seed: u64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub replicates: Vec<f64>,
    /// Upper-tail bootstrap p-value, `#{T* ≥ T} / B`.
    pub p_value: f64,
    /// `#{T > T*} / B`, the complement of `p_value`.
    pub exceed_fraction: f64,
    pub tested: Vec<usize>,
    pub config: TestConfigEcho,
}

/// Relative slack under which a replicate counts as tied with the observed
/// statistic. Both sides carry solver rounding, and under a binding null
/// the statistics have an atom at zero.
pub const TIE_TOL: f64 = 1e-9;

/// `(p_value, exceed_fraction)` for an observed statistic.
pub fn tail_fractions(statistic: f64, replicates: &[f64]) -> (f64, f64) {
    let slack = TIE_TOL * (1.0 + statistic.abs());
    let b = replicates.len() as f64;
    let upper = replicates
        .iter()
        .filter(|&&t| t >= statistic - slack)
        .count() as f64;
    (upper / b, (b - upper) / b)
}

fn check_pair(restricted: &FitResult, full: &FitResult) -> Result<()> {
    if restricted.residuals.len() != full.residuals.len() {
        return Err(Error::DimensionMismatch(
            "restricted and full fits use different sample sizes".into(),
        ));
    }
    if restricted.tau != full.tau {
        return Err(Error::InvalidInput(
            "restricted and full fits use different quantile levels".into(),
        ));
    }
    Ok(())
}

/// `T^{LR} = Σ ρ_τ(restricted residuals) − Σ ρ_τ(full residuals)`.
pub fn lr_statistic(restricted: &FitResult, full: &FitResult) -> Result<f64> {
    check_pair(restricted, full)?;
    Ok(restricted.loss - full.loss)
}

/// Score vector `Σ ψ_τ(r_i) x_i^{(A)}`.
pub fn tested_score(
    data: &Dataset,
    residuals: &DVector<f64>,
    tau: f64,
    tested: &[usize],
) -> DVector<f64> {
    let xa = select_columns(data.x(), tested);
    let w = residuals.map(|r| psi(r, tau));
    xa.tr_mul(&w)
}

/// `D_n = Σ x_i^{(A)} x_i^{(A)ᵀ}`, factorised. Exactly collinear tested
/// columns are an error; near-singular ones get the ridge fallback.
pub fn tested_gram(data: &Dataset, tested: &[usize]) -> Result<SpdFactor> {
    let xa = select_columns(data.x(), tested);
    let d: DMatrix<f64> = xa.tr_mul(&xa);
    if numerical_rank(&xa, RANK_TOL) < tested.len() {
        return Err(Error::CollinearTested);
    }
    SpdFactor::new(&d, "tested Gram matrix").map_err(|_| Error::CollinearTested)
}

/// `T^{RB} = (S₁ − S₀)ᵀ D_n⁻¹ (S₁ − S₀)`.
pub fn rb_statistic(
    data: &Dataset,
    spec: QuantileSpec,
    full: &FitResult,
    restricted: &FitResult,
    tested: &[usize],
) -> Result<f64> {
    check_pair(restricted, full)?;
    if full.residuals.len() != data.n() {
        return Err(Error::DimensionMismatch(
            "fits do not match the dataset".into(),
        ));
    }
    let tested = validate_tested(data, tested)?;
    let tau = spec.tau();
    let diff = tested_score(data, &full.residuals, tau, &tested)
        - tested_score(data, &restricted.residuals, tau, &tested);
    let gram = tested_gram(data, &tested)?;
    Ok(diff.dot(&gram.solve(&diff)))
}
