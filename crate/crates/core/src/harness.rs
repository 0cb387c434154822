//! Monte Carlo experiments on the simulation settings: type I error of the
//! bootstrap tests, interval coverage, and calibrated power curves.
//!
//! Every replication draws its dataset and bootstrap multipliers from seeds
//! derived from `(plan seed, cell, replication)`, so a cell's result does
//! not depend on scheduling. Replications that fail (for example a
//! degenerate bandwidth) are counted and excluded from the rate.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    default_block_grid, sample_quantile, sorted_column, BootstrapConfig, CiEngine, TestEngine,
    TestReplicates,
};
use crate::datagen::{gen_setting, SimSetting};
use crate::qr::QuantileSpec;
use crate::rng::derive_seed;
use crate::statistic::tail_fractions;
use crate::{Error, Result};

/// Coefficient of the tested slope in the simulation model.
pub const SLOPE: usize = 1;

/// Both simulation coefficients are sign-constrained.
pub const SIM_Q: usize = 2;

/// True intercept used throughout.
pub const BETA0: f64 = 1.0;

/// Target level for power calibration.
pub const CALIBRATION_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TypeI,
    Coverage,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub setting: u8,
    pub n: Vec<usize>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub reps: usize,
    pub b: usize,
    /// Slopes for coverage (0 binding, 1 non-binding) or power.
    #[serde(default)]
    pub beta1: Vec<f64>,
    pub mode: Mode,
    pub seed: u64,
    /// Fixed block size; minimum volatility when absent.
    #[serde(default)]
    pub m: Option<usize>,
    /// Fixed bandwidth; cross-validated when absent.
    #[serde(default)]
    pub h: Option<f64>,
}

impl ExperimentPlan {
    pub fn new(
        mode: Mode,
        setting: u8,
        n: usize,
        tau: f64,
        alpha: f64,
        reps: usize,
        b: usize,
    ) -> Self {
        Self {
            setting,
            n: vec![n],
            tau: vec![tau],
            alpha: vec![alpha],
            reps,
            b,
            beta1: match mode {
                Mode::TypeI => vec![0.0],
                Mode::Coverage => vec![0.0, 1.0],
                Mode::Power => vec![0.0, 0.1, 0.2, 0.3],
            },
            mode,
            seed: 0,
            m: None,
            h: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.tau.is_empty() || self.alpha.is_empty() {
            return Err(Error::InvalidInput(
                "experiment grids must be nonempty".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::InvalidInput(
                "replication count must be positive".into(),
            ));
        }
        if self.reps < 100 {
            log::warn!(
                "{} replications: Monte Carlo error will be large",
                self.reps
            );
        }
        if self.alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidInput("alpha must lie in (0, 1]".into()));
        }
        if self.b < crate::bootstrap::MIN_REPLICATES {
            return Err(Error::TooFewReplicates(self.b));
        }
        match self.mode {
            Mode::TypeI => {}
            Mode::Coverage if self.beta1.is_empty() => {
                return Err(Error::InvalidInput("coverage needs a beta1 list".into()))
            }
            Mode::Power if !self.beta1.contains(&0.0) => {
                return Err(Error::InvalidInput(
                    "power grid must include beta1 = 0".into(),
                ))
            }
            _ => {}
        }
        if self.beta1.iter().any(|&b| !(b >= 0.0 && b.is_finite())) {
            return Err(Error::InvalidInput(
                "beta1 values must be nonnegative".into(),
            ));
        }
        for &n in &self.n {
            for &tau in &self.tau {
                SimSetting {
                    id: self.setting,
                    n,
                    beta0: BETA0,
                    beta1: 0.0,
                    tau,
                    seed: 0,
                }
                .validate()?;
            }
        }
        Ok(())
    }
}

/// One reported rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub n: usize,
    pub tau: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub rate: f64,
    pub mc_se: f64,
    /// Replications contributing to the rate.
    pub reps: usize,
    pub failures: usize,
    /// Block size used, when fixed for the whole cell.
    pub m: Option<usize>,
}

impl CellSummary {
    fn from_hits(
        method: &str,
        key: CellKey,
        alpha: f64,
        hits: &[Option<bool>],
        m: Option<usize>,
    ) -> Self {
        let ok: Vec<bool> = hits.iter().flatten().copied().collect();
        let reps = ok.len();
        let rate = if reps == 0 {
            f64::NAN
        } else {
            ok.iter().filter(|&&h| h).count() as f64 / reps as f64
        };
        Self {
            method: method.to_string(),
            n: key.n,
            tau: key.tau,
            alpha,
            beta1: key.beta1,
            rate,
            mc_se: mc_standard_error(rate, reps),
            reps,
            failures: hits.len() - reps,
            m,
        }
    }
}

/// `√(r(1 − r)/R)`.
pub fn mc_standard_error(rate: f64, reps: usize) -> f64 {
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub mode: Mode,
    pub setting: u8,
    pub cells: Vec<CellSummary>,
    pub runtime_secs: f64,
    pub plan: ExperimentPlan,
}

impl ExperimentSummary {
    pub fn find(
        &self,
        method: &str,
        n: usize,
        tau: f64,
        alpha: f64,
        beta1: f64,
    ) -> Option<&CellSummary> {
        self.cells.iter().find(|c| {
            c.method == method && c.n == n && c.tau == tau && c.alpha == alpha && c.beta1 == beta1
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct CellKey {
    n: usize,
    tau: f64,
    beta1: f64,
}

fn cell_seed(plan: &ExperimentPlan, k: CellKey) -> u64 {
    let mut s = derive_seed(plan.seed, plan.setting as u64);
    s = derive_seed(s, k.n as u64);
    s = derive_seed(s, k.tau.to_bits());
    derive_seed(s, k.beta1.to_bits())
}

fn setting_for(plan: &ExperimentPlan, k: CellKey, r: usize) -> SimSetting {
    SimSetting {
        id: plan.setting,
        n: k.n,
        beta0: BETA0,
        beta1: k.beta1,
        tau: k.tau,
        seed: derive_seed(cell_seed(plan, k), r as u64),
    }
}

fn bootstrap_seed(s: &SimSetting) -> u64 {
    derive_seed(s.seed, 0xB0_07)
}

fn tuning(plan: &ExperimentPlan) -> BootstrapConfig {
    let mut cfg = BootstrapConfig::new(plan.b, 0, 0.05);
    cfg.m = plan.m;
    cfg.h = plan.h;
    cfg
}

fn test_engine(s: &SimSetting, q: usize, plan: &ExperimentPlan) -> Result<TestEngine> {
    let sim = gen_setting(s)?;
    TestEngine::new(&sim.data, QuantileSpec::new(s.tau)?, &[SLOPE], q, plan.h)
}

/// Reject when the bootstrap p-value is at most `alpha`.
pub fn rejects(statistic: f64, replicates: &[f64], alpha: f64) -> bool {
    tail_fractions(statistic, replicates).0 <= alpha
}

/// One-sided CI inversion: reject `β_j = 0` when `β̂_j − q_{1−α}(Λ_j)/√n > 0`.
pub fn wald_rejects(beta_hat: f64, lambda_sorted: &[f64], n: usize, alpha: f64) -> bool {
    beta_hat - sample_quantile(lambda_sorted, 1.0 - alpha) / (n as f64).sqrt() > 0.0
}

fn log_failure(what: &str, s: &SimSetting, e: &Error) {
    log::warn!("{what}: replication with seed {} failed: {e}", s.seed);
}

fn cells(plan: &ExperimentPlan, beta1: &[f64]) -> Vec<CellKey> {
    let mut out = Vec::new();
    for &n in &plan.n {
        for &tau in &plan.tau {
            for &b1 in beta1 {
                out.push(CellKey { n, tau, beta1: b1 });
            }
        }
    }
    out
}

/// Rejection rates of the constrained LR and RB tests of `β₁ = 0`.
pub fn run_type1(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    plan.validate()?;
    let start = Instant::now();
    let cfg = tuning(plan);
    let mut out = Vec::new();
    for key in cells(plan, &[0.0]) {
        let per_rep: Vec<Option<(f64, f64, TestReplicates)>> = (0..plan.reps)
            .into_par_iter()
            .map(|r| {
                let s = setting_for(plan, key, r);
                let run = || -> Result<_> {
                    let eng = test_engine(&s, SIM_Q, plan)?;
                    let m = eng.select_m(&cfg)?;
                    let reps = eng.replicates(m, plan.b, bootstrap_seed(&s))?;
                    Ok((eng.t_lr, eng.t_rb, reps))
                };
                run().map_err(|e| log_failure("type I", &s, &e)).ok()
            })
            .collect();
        for &alpha in &plan.alpha {
            let lr: Vec<Option<bool>> = per_rep
                .iter()
                .map(|o| o.as_ref().map(|(t, _, reps)| rejects(*t, &reps.lr, alpha)))
                .collect();
            let rb: Vec<Option<bool>> = per_rep
                .iter()
                .map(|o| o.as_ref().map(|(_, t, reps)| rejects(*t, &reps.rb, alpha)))
                .collect();
            out.push(CellSummary::from_hits("LR", key, alpha, &lr, plan.m));
            out.push(CellSummary::from_hits("RB", key, alpha, &rb, plan.m));
        }
    }
    Ok(ExperimentSummary {
        mode: Mode::TypeI,
        setting: plan.setting,
        cells: out,
        runtime_secs: start.elapsed().as_secs_f64(),
        plan: plan.clone(),
    })
}

/// Fraction of replications whose two-sided interval for `β₁` covers the
/// true slope.
pub fn run_coverage(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    plan.validate()?;
    let start = Instant::now();
    let cfg = tuning(plan);
    let mut out = Vec::new();
    for key in cells(plan, &plan.beta1) {
        let per_rep: Vec<Option<(f64, Vec<f64>, usize)>> = (0..plan.reps)
            .into_par_iter()
            .map(|r| {
                let s = setting_for(plan, key, r);
                let run = || -> Result<_> {
                    let sim = gen_setting(&s)?;
                    let eng = CiEngine::new(&sim.data, QuantileSpec::new(s.tau)?, SIM_Q, plan.h)?;
                    let m = eng.select_m(&cfg)?;
                    let draws = eng.draws(m, plan.b, bootstrap_seed(&s))?;
                    Ok((eng.side.fit.beta[SLOPE], sorted_column(&draws, SLOPE), s.n))
                };
                run().map_err(|e| log_failure("coverage", &s, &e)).ok()
            })
            .collect();
        for &alpha in &plan.alpha {
            let hits: Vec<Option<bool>> = per_rep
                .iter()
                .map(|o| {
                    o.as_ref().map(|(b, lam, n)| {
                        let root_n = (*n as f64).sqrt();
                        let lo = b - sample_quantile(lam, 1.0 - alpha / 2.0) / root_n;
                        let hi = b - sample_quantile(lam, alpha / 2.0) / root_n;
                        lo <= key.beta1 && key.beta1 <= hi
                    })
                })
                .collect();
            out.push(CellSummary::from_hits("CI", key, alpha, &hits, plan.m));
        }
    }
    Ok(ExperimentSummary {
        mode: Mode::Coverage,
        setting: plan.setting,
        cells: out,
        runtime_secs: start.elapsed().as_secs_f64(),
        plan: plan.clone(),
    })
}

/// The six compared procedures.
pub const POWER_METHODS: [&str; 6] = ["LR-C", "RB-C", "Wald-C", "LR-U", "RB-U", "Wald-U"];

/// Rejections of all six methods on one dataset for each block size.
fn power_decisions(
    s: &SimSetting,
    plan: &ExperimentPlan,
    ms: &[usize],
    alpha: f64,
) -> Result<Vec<[bool; 6]>> {
    let seed = bootstrap_seed(s);
    let cons = test_engine(s, SIM_Q, plan)?;
    let unc = test_engine(s, 0, plan)?;
    ms.iter()
        .map(|&m| {
            let mut row = [false; 6];
            for (offset, eng) in [(0, &cons), (3, &unc)] {
                let reps = eng.replicates(m, plan.b, seed)?;
                row[offset] = rejects(eng.t_lr, &reps.lr, alpha);
                row[offset + 1] = rejects(eng.t_rb, &reps.rb, alpha);
                let lam = sorted_column(&reps.lambda, SLOPE);
                row[offset + 2] = wald_rejects(eng.full.fit.beta[SLOPE], &lam, s.n, alpha);
            }
            Ok(row)
        })
        .collect()
}

/// Index of the rate nearest `target`; ties go to the smaller index.
fn nearest(rates: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, r) in rates.iter().enumerate() {
        if (r - target).abs() < (rates[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// Size-calibrated power of the six methods. For each `(n, τ)` a pass at
/// `β₁ = 0` picks, per method, the block size whose rejection rate at the
/// calibration level is nearest that level; the power curves then reuse it.
/// The unconstrained methods fit with `q = 0`.
pub fn run_power(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    plan.validate()?;
    let start = Instant::now();
    let alpha = CALIBRATION_LEVEL;
    let mut out = Vec::new();
    for &n in &plan.n {
        let grid = match plan.m {
            Some(m) => vec![m],
            None => default_block_grid(n)?,
        };
        for &tau in &plan.tau {
            let null = CellKey { n, tau, beta1: 0.0 };
            let calib: Vec<Option<Vec<[bool; 6]>>> = (0..plan.reps)
                .into_par_iter()
                .map(|r| {
                    let s = setting_for(plan, null, r);
                    power_decisions(&s, plan, &grid, alpha)
                        .map_err(|e| log_failure("power calibration", &s, &e))
                        .ok()
                })
                .collect();
            let ok: Vec<&Vec<[bool; 6]>> = calib.iter().flatten().collect();
            if ok.is_empty() {
                return Err(Error::InvalidInput(
                    "every calibration replication failed".into(),
                ));
            }
            let chosen: Vec<usize> = (0..6)
                .map(|k| {
                    let rates: Vec<f64> = (0..grid.len())
                        .map(|g| ok.iter().filter(|d| d[g][k]).count() as f64 / ok.len() as f64)
                        .collect();
                    nearest(&rates, alpha)
                })
                .collect();
            for &b1 in &plan.beta1 {
                let key = CellKey { n, tau, beta1: b1 };
                let decisions: Vec<Option<Vec<[bool; 6]>>> = if b1 == 0.0 {
                    calib.clone()
                } else {
                    (0..plan.reps)
                        .into_par_iter()
                        .map(|r| {
                            let s = setting_for(plan, key, r);
                            let ms: Vec<usize> = chosen.iter().map(|&g| grid[g]).collect();
                            // Only the calibrated block sizes are needed here.
                            power_decisions(&s, plan, &dedup(&ms), alpha)
                                .map(|rows| expand(rows, &ms))
                                .map_err(|e| log_failure("power", &s, &e))
                                .ok()
                        })
                        .collect()
                };
                for (k, name) in POWER_METHODS.iter().enumerate() {
                    let hits: Vec<Option<bool>> = decisions
                        .iter()
                        .map(|d| {
                            d.as_ref().map(|rows| {
                                if b1 == 0.0 {
                                    rows[chosen[k]][k]
                                } else {
                                    rows[k][k]
                                }
                            })
                        })
                        .collect();
                    out.push(CellSummary::from_hits(
                        name,
                        key,
                        alpha,
                        &hits,
                        Some(grid[chosen[k]]),
                    ));
                }
            }
        }
    }
    Ok(ExperimentSummary {
        mode: Mode::Power,
        setting: plan.setting,
        cells: out,
        runtime_secs: start.elapsed().as_secs_f64(),
        plan: plan.clone(),
    })
}

fn dedup(ms: &[usize]) -> Vec<usize> {
    let mut v = ms.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Reorders rows computed for `dedup(ms)` so that row `k` belongs to `ms[k]`.
fn expand(rows: Vec<[bool; 6]>, ms: &[usize]) -> Vec<[bool; 6]> {
    let uniq = dedup(ms);
    ms.iter()
        .map(|m| rows[uniq.binary_search(m).expect("present")])
        .collect()
}

/// Dispatches on `plan.mode`.
pub fn run(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    match plan.mode {
        Mode::TypeI => run_type1(plan),
        Mode::Coverage => run_coverage(plan),
        Mode::Power => run_power(plan),
    }
}

/// Pool-adjacent-violators fit of a nondecreasing sequence.
pub fn isotonic_fit(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = ((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, k)| std::iter::repeat_n(v, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_error_formula() {
        assert_eq!(mc_standard_error(0.5, 100), 0.05);
        assert_eq!(mc_standard_error(0.0, 10), 0.0);
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(
            isotonic_fit(&[1.0, 3.0, 2.0, 4.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(isotonic_fit(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn nearest_prefers_smaller_index_on_ties() {
        assert_eq!(nearest(&[0.02, 0.08, 0.05, 0.05], 0.05), 2);
        assert_eq!(nearest(&[0.25, 0.75], 0.5), 0);
    }

    #[test]
    fn expand_restores_order() {
        let rows = vec![[true; 6], [false; 6]];
        let e = expand(rows, &[8, 4, 8, 4, 4, 8]);
        assert!(!e[0][0] && e[1][0] && !e[2][0]);
    }

    #[test]
    fn wald_decision() {
        let lam = [-1.0, 0.0, 1.0, 2.0];
        assert!(wald_rejects(1.0, &lam, 4, 0.05));
        assert!(!wald_rejects(0.0, &lam, 4, 0.05));
    }

    #[test]
    fn plan_validation() {
        let mut p = ExperimentPlan::new(Mode::Power, 1, 400, 0.5, 0.05, 100, 100);
        assert!(p.validate().is_ok());
        p.beta1 = vec![0.1];
        assert!(p.validate().is_err());
        let mut p = ExperimentPlan::new(Mode::TypeI, 1, 400, 0.5, 0.05, 100, 99);
        assert_eq!(p.validate().unwrap_err(), Error::TooFewReplicates(99));
        p.b = 100;
        p.n = vec![];
        assert!(p.validate().is_err());
    }

    #[test]
    fn alpha_one_always_rejects() {
        let mut p = ExperimentPlan::new(Mode::TypeI, 1, 100, 0.5, 1.0, 3, 100);
        p.seed = 5;
        let s = run_type1(&p).unwrap();
        assert!(s.cells.iter().all(|c| c.rate == 1.0 && c.mc_se == 0.0));
    }

    #[test]
    fn tiny_alpha_covers() {
        let mut p = ExperimentPlan::new(Mode::Coverage, 2, 100, 0.5, 1e-6, 3, 100);
        p.seed = 1;
        let s = run_coverage(&p).unwrap();
        assert!(s.cells.iter().all(|c| c.rate == 1.0));
    }
}
