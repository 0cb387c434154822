//! The projected multiplier bootstrap.
//!
//! Gradient contributions `g_i = ψ_τ(ε̂_i) x_i` are summed over blocks of
//! length `m`, centred, and perturbed by standard normal multipliers to give
//! `Ψ_m`, a draw from the Gaussian limit of the score. Each draw is mapped
//! through the metric projection onto the cone,
//!
//! ```text
//! Λ = P_{Q,Ξ}(n^{1/4} β̂ + Ξ⁻¹Ψ) − n^{1/4} β̂,
//! ```
//!
//! which reproduces the boundary behaviour of `√n(β̂ − β₀)`. Intervals use
//! percentiles of `Λ`; tests plug `(Λ, Ξ, Ψ)` into the limiting forms of the
//! likelihood-ratio and rank-based statistics.
//!
//! All routines work in canonical coordinates (the first `q` coefficients
//! are sign-constrained).

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel_cov::{
    default_bandwidth_grid, sandwich_matrix, select_bandwidth_cv, SandwichEstimate,
};
use crate::linalg::{select_columns, SpdFactor};
use crate::projection::Projector;
use crate::qr::{fit_constrained, fit_restricted, psi, Dataset, FitResult, QuantileSpec};
use crate::rng::substream;
use crate::statistic::{
    lr_statistic, rb_statistic, tail_fractions, tested_gram, TestConfigEcho, TestKind, TestResult,
};
use crate::{Error, Result};

/// Fewest replicates accepted for inference.
pub const MIN_REPLICATES: usize = 100;

/// Number of contiguous folds for bandwidth cross-validation.
pub const CV_FOLDS: usize = 5;

/// Width of the minimum-volatility window.
const WINDOW: usize = 7;

/// `g_i = ψ_τ(ε̂_i) x_i^{(S)}` stacked by row.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSeries {
    g: DMatrix<f64>,
    tau: f64,
    columns: Vec<usize>,
}

impl GradientSeries {
    pub fn new(
        data: &Dataset,
        residuals: &DVector<f64>,
        tau: f64,
        columns: &[usize],
    ) -> Result<Self> {
        if residuals.len() != data.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} residuals for {} observations",
                residuals.len(),
                data.n()
            )));
        }
        if let Some(&j) = columns.iter().find(|&&j| j >= data.p()) {
            return Err(Error::DimensionMismatch(format!("column {j} out of range")));
        }
        let mut g = select_columns(data.x(), columns);
        for (i, mut row) in g.row_iter_mut().enumerate() {
            row *= psi(residuals[i], tau);
        }
        Ok(Self {
            g,
            tau,
            columns: columns.to_vec(),
        })
    }

    /// Wraps an explicit gradient matrix.
    pub fn from_matrix(g: DMatrix<f64>, tau: f64) -> Self {
        let columns = (0..g.ncols()).collect();
        Self { g, tau, columns }
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// `ϖ_{1,n}`, the sum over all observations.
    pub fn total(&self) -> DVector<f64> {
        self.g.row_sum().transpose()
    }
}

/// Rolling block sums `ϖ_{i,m} = Σ_{j=i}^{i+m−1} g_j`, one row per start.
pub fn block_sums(gs: &GradientSeries, m: usize) -> Result<DMatrix<f64>> {
    let n = gs.n();
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!(
            "block size {m} outside [1, {n}]"
        )));
    }
    let d = gs.dim();
    let g = &gs.g;
    let m_star = n - m + 1;
    let mut out = DMatrix::zeros(m_star, d);
    for k in 0..d {
        let mut s: f64 = (0..m).map(|i| g[(i, k)]).sum();
        out[(0, k)] = s;
        for i in 1..m_star {
            s += g[(i + m - 1, k)] - g[(i - 1, k)];
            out[(i, k)] = s;
        }
    }
    Ok(out)
}

/// `Ψ_m = Σ_i (ϖ_{i,m} − (m/n) ϖ_{1,n}) V_i / √(m m*)`.
pub fn multiplier_psi(
    blocks: &DMatrix<f64>,
    total: &DVector<f64>,
    m: usize,
    n: usize,
    v: &[f64],
) -> Result<DVector<f64>> {
    let (m_star, d) = blocks.shape();
    if total.len() != d || v.len() != m_star || m == 0 || m > n || m_star != n - m + 1 {
        return Err(Error::DimensionMismatch(format!(
            "blocks {m_star}x{d}, total {}, multipliers {}, m = {m}, n = {n}",
            total.len(),
            v.len()
        )));
    }
    let ratio = m as f64 / n as f64;
    let mut out = DVector::zeros(d);
    for (i, &vi) in v.iter().enumerate() {
        for k in 0..d {
            out[k] += (blocks[(i, k)] - ratio * total[k]) * vi;
        }
    }
    Ok(out / ((m * m_star) as f64).sqrt())
}

/// Centred, scaled block sums for a fixed `m`, so that `Ψ = Wᵀ V`.
#[derive(Debug, Clone)]
pub struct MultiplierBasis {
    w: DMatrix<f64>,
    m: usize,
}

impl MultiplierBasis {
    pub fn new(gs: &GradientSeries, m: usize) -> Result<Self> {
        let n = gs.n();
        let mut w = block_sums(gs, m)?;
        let total = gs.total();
        let m_star = w.nrows();
        let ratio = m as f64 / n as f64;
        let scale = 1.0 / ((m * m_star) as f64).sqrt();
        for mut row in w.row_iter_mut() {
            for k in 0..row.len() {
                row[k] = (row[k] - ratio * total[k]) * scale;
            }
        }
        Ok(Self { w, m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of multipliers consumed, `m* = n − m + 1`.
    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }

    pub fn psi(&self, v: &DVector<f64>) -> DVector<f64> {
        self.w.tr_mul(v)
    }
}

/// `Ψ̂_m = Σ_j ‖ϖ_{j,m} − (m/n)ϖ_{1,n}‖² / (m(n − m + 1))`.
pub fn volatility_statistic(gs: &GradientSeries, m: usize) -> Result<f64> {
    let blocks = block_sums(gs, m)?;
    let total = gs.total();
    let ratio = m as f64 / gs.n() as f64;
    let mut s = 0.0;
    for row in blocks.row_iter() {
        for k in 0..row.len() {
            s += (row[k] - ratio * total[k]).powi(2);
        }
    }
    Ok(s / (m * blocks.nrows()) as f64)
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Index (0-based) of the candidate whose centred 7-point window has the
/// smallest sample standard deviation. Only indices `3..K−3` are eligible;
/// ties go to the smaller index.
pub fn min_volatility_index(values: &[f64]) -> Result<usize> {
    let k = values.len();
    if k < WINDOW {
        return Err(Error::TooFewCandidates(k));
    }
    let half = WINDOW / 2;
    let mut best = (f64::INFINITY, half);
    for c in half..k - half {
        let sd = sample_sd(&values[c - half..=c + half]);
        if sd < best.0 {
            best = (sd, c);
        }
    }
    Ok(best.1)
}

/// Minimum-volatility block size among ascending `candidates`.
pub fn select_block_size(gs: &GradientSeries, candidates: &[usize]) -> Result<usize> {
    if candidates.len() < WINDOW {
        return Err(Error::TooFewCandidates(candidates.len()));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "block size candidates must be ascending".into(),
        ));
    }
    let values = candidates
        .iter()
        .map(|&m| volatility_statistic(gs, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(candidates[min_volatility_index(&values)?])
}

/// `m_k = k⌈n^{1/5}⌉` for `k = 1..K`, `K = min(20, ⌊n^{2/3}/⌈n^{1/5}⌉⌋)`,
/// raised to 7 when the formula gives fewer and `7⌈n^{1/5}⌉ < n`.
pub fn default_block_grid(n: usize) -> Result<Vec<usize>> {
    let nf = n as f64;
    let step = nf.powf(0.2).ceil() as usize;
    let k = ((nf.powf(2.0 / 3.0) / step as f64).floor() as usize).min(20);
    let k = k.max(WINDOW);
    if k * step >= n {
        return Err(Error::InvalidInput(format!(
            "sample size {n} too small for a {WINDOW}-point block size grid"
        )));
    }
    Ok((1..=k).map(|i| i * step).collect())
}

/// `g₁(x, y, z) = ½ xᵀ y x − zᵀ x`.
pub fn g1(x: &DVector<f64>, y: &DMatrix<f64>, z: &DVector<f64>) -> Result<f64> {
    let d = x.len();
    if y.shape() != (d, d) || z.len() != d {
        return Err(Error::DimensionMismatch(
            "g1 arguments disagree in dimension".into(),
        ));
    }
    Ok(0.5 * x.dot(&(y * x)) - z.dot(x))
}

/// `g₂(x, y, z) = (x − y)ᵀ z⁻¹ (x − y)`.
pub fn g2(x: &DVector<f64>, y: &DVector<f64>, z: &DMatrix<f64>) -> Result<f64> {
    let d = x.len();
    if y.len() != d || z.shape() != (d, d) {
        return Err(Error::DimensionMismatch(
            "g2 arguments disagree in dimension".into(),
        ));
    }
    let diff = x - y;
    let sol = z
        .clone()
        .lu()
        .solve(&diff)
        .ok_or_else(|| Error::Singular("g2 weight matrix".into()))?;
    Ok(diff.dot(&sol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraw {
    pub psi: DVector<f64>,
    /// `Ξ⁻¹Ψ`.
    pub upsilon: DVector<f64>,
    pub lambda: DVector<f64>,
}

/// The fixed part of `Ψ ↦ Λ` for one model.
#[derive(Debug, Clone)]
pub struct LambdaMap {
    xi: SpdFactor,
    projector: Projector,
    shift: DVector<f64>,
}

impl LambdaMap {
    /// `beta_hat` must lie in the cone; `xi` is regularized if nearly singular.
    pub fn new(beta_hat: &DVector<f64>, xi: &DMatrix<f64>, n: usize, q: usize) -> Result<Self> {
        let p = beta_hat.len();
        if xi.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "metric is {}x{}, coefficient vector has length {p}",
                xi.nrows(),
                xi.ncols()
            )));
        }
        if q > p {
            return Err(Error::TooManyConstraints { q, p });
        }
        if (0..q).any(|j| beta_hat[j] < -1e-9) {
            return Err(Error::InvalidInput("beta_hat is not in the cone".into()));
        }
        let xi = SpdFactor::new(xi, "sandwich matrix")?;
        let projector = Projector::new(&xi.matrix, q)?;
        let mut shift = beta_hat * (n as f64).powf(0.25);
        for j in 0..q {
            shift[j] = shift[j].max(0.0);
        }
        Ok(Self {
            xi,
            projector,
            shift,
        })
    }

    /// The (possibly ridged) metric in use.
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.xi.matrix
    }

    pub fn draw(&self, psi: DVector<f64>) -> BootstrapDraw {
        let upsilon = self.xi.solve(&psi);
        let lambda = self.projector.project(&(&self.shift + &upsilon)) - &self.shift;
        BootstrapDraw {
            psi,
            upsilon,
            lambda,
        }
    }
}

/// `Λ = P_{Q,Ξ}(n^{1/4}β̂ + Ξ⁻¹Ψ) − n^{1/4}β̂`.
pub fn draw_lambda(
    beta_hat: &DVector<f64>,
    xi: &SandwichEstimate,
    psi: &DVector<f64>,
    n: usize,
    q: usize,
) -> Result<BootstrapDraw> {
    if psi.len() != beta_hat.len() {
        return Err(Error::DimensionMismatch(
            "psi and beta_hat differ in length".into(),
        ));
    }
    Ok(LambdaMap::new(beta_hat, &xi.matrix, n, q)?.draw(psi.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Block size; selected by minimum volatility when absent.
    pub m: Option<usize>,
    /// Kernel bandwidth; selected by cross-validation when absent.
    pub h: Option<f64>,
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Block size candidates; the default grid when absent.
    #[serde(default)]
    pub m_grid: Option<Vec<usize>>,
    /// Clip lower interval bounds of constrained coordinates at zero.
    #[serde(default)]
    pub clip: bool,
}

impl BootstrapConfig {
    pub fn new(b: usize, seed: u64, alpha: f64) -> Self {
        Self {
            m: None,
            h: None,
            b,
            seed,
            alpha,
            m_grid: None,
            clip: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.b < MIN_REPLICATES {
            return Err(Error::TooFewReplicates(self.b));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(m) = self.m {
            if m == 0 || m > n {
                return Err(Error::InvalidInput(format!(
                    "block size {m} outside [1, {n}]"
                )));
            }
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }

    fn resolve_m(&self, gs: &GradientSeries) -> Result<usize> {
        if let Some(m) = self.m {
            return Ok(m);
        }
        let grid = match &self.m_grid {
            Some(g) => g.clone(),
            None => default_block_grid(gs.n())?,
        };
        if grid.iter().any(|&m| m == 0 || m > gs.n()) {
            return Err(Error::InvalidInput(
                "block size candidate out of range".into(),
            ));
        }
        select_block_size(gs, &grid)
    }

    fn resolve_h(&self, residuals: &DVector<f64>) -> Result<f64> {
        match self.h {
            Some(h) => Ok(h),
            None => select_bandwidth_cv(residuals, CV_FOLDS, &default_bandwidth_grid(residuals)?),
        }
    }
}

/// Type-7 sample quantile of ascending data.
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Ascending copy of column `j` of a draw matrix.
pub fn sorted_column(draws: &DMatrix<f64>, j: usize) -> Vec<f64> {
    let mut c: Vec<f64> = draws.column(j).iter().copied().collect();
    c.sort_by(f64::total_cmp);
    c
}

/// `(β̂_j − q_{1−α/2}/√n, β̂_j − q_{α/2}/√n)` per coordinate; `draws` is
/// `B × p`.
pub fn percentile_intervals(
    beta_hat: &DVector<f64>,
    draws: &DMatrix<f64>,
    n: usize,
    alpha: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = beta_hat.len();
    if draws.ncols() != p || draws.nrows() == 0 {
        return Err(Error::DimensionMismatch(
            "draw matrix does not match beta".into(),
        ));
    }
    let root_n = (n as f64).sqrt();
    let mut lower = DVector::zeros(p);
    let mut upper = DVector::zeros(p);
    for j in 0..p {
        let col = sorted_column(draws, j);
        lower[j] = beta_hat[j] - sample_quantile(&col, 1.0 - alpha / 2.0) / root_n;
        upper[j] = beta_hat[j] - sample_quantile(&col, alpha / 2.0) / root_n;
    }
    Ok((lower, upper))
}

fn multipliers(seed: u64, index: u64, len: usize) -> DVector<f64> {
    let mut rng = substream(seed, index);
    DVector::from_fn(len, |_, _| StandardNormal.sample(&mut rng))
}

/// Fitted model plus everything needed to draw `Λ` for it.
#[derive(Debug, Clone)]
pub struct ModelSide {
    pub fit: FitResult,
    pub gradient: GradientSeries,
    pub xi: DMatrix<f64>,
    pub map: LambdaMap,
}

impl ModelSide {
    /// `columns` are the dataset columns the fit's coefficients refer to.
    fn new(data: &Dataset, fit: FitResult, columns: &[usize], h: f64) -> Result<Self> {
        let gradient = GradientSeries::new(data, &fit.residuals, fit.tau, columns)?;
        let xi = sandwich_matrix(data.x(), &fit.residuals, columns, columns, h)?;
        let map = LambdaMap::new(&fit.beta, &xi, data.n(), fit.q)?;
        Ok(Self {
            fit,
            gradient,
            xi,
            map,
        })
    }
}

/// Bootstrap machinery for intervals on one dataset.
#[derive(Debug, Clone)]
pub struct CiEngine {
    pub side: ModelSide,
    pub n: usize,
    pub h: f64,
}

impl CiEngine {
    /// Fits the constrained model; `h` is cross-validated when absent.
    pub fn new(data: &Dataset, spec: QuantileSpec, q: usize, h: Option<f64>) -> Result<Self> {
        let fit = fit_constrained(data, spec, q)?;
        let mut cfg = BootstrapConfig::new(MIN_REPLICATES, 0, 0.05);
        cfg.h = h;
        let h = cfg.resolve_h(&fit.residuals)?;
        let cols: Vec<usize> = (0..data.p()).collect();
        Ok(Self {
            side: ModelSide::new(data, fit, &cols, h)?,
            n: data.n(),
            h,
        })
    }

    pub fn select_m(&self, cfg: &BootstrapConfig) -> Result<usize> {
        cfg.resolve_m(&self.side.gradient)
    }

    /// `B × p` matrix of `Λ` draws.
    pub fn draws(&self, m: usize, b: usize, seed: u64) -> Result<DMatrix<f64>> {
        let basis = MultiplierBasis::new(&self.side.gradient, m)?;
        let rows: Vec<DVector<f64>> = (0..b)
            .into_par_iter()
            .map(|k| {
                let v = multipliers(seed, k as u64, basis.len());
                self.side.map.draw(basis.psi(&v)).lambda
            })
            .collect();
        Ok(stack_rows(&rows, self.side.fit.beta.len()))
    }
}

fn stack_rows(rows: &[DVector<f64>], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiResult {
    pub beta_hat: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    /// `B × p` bootstrap draws of `Λ`.
    pub draws: DMatrix<f64>,
    pub fit: FitResult,
    pub m: usize,
    pub h: f64,
    pub alpha: f64,
    pub n: usize,
}

/// Percentile intervals for every coefficient.
pub fn bootstrap_ci(
    data: &Dataset,
    spec: QuantileSpec,
    q: usize,
    cfg: &BootstrapConfig,
) -> Result<CiResult> {
    cfg.validate(data.n())?;
    let engine = CiEngine::new(data, spec, q, cfg.h)?;
    let m = engine.select_m(cfg)?;
    let draws = engine.draws(m, cfg.b, cfg.seed)?;
    let beta_hat = engine.side.fit.beta.clone();
    let (mut lower, upper) = percentile_intervals(&beta_hat, &draws, data.n(), cfg.alpha)?;
    if cfg.clip {
        for j in 0..q {
            lower[j] = lower[j].max(0.0);
        }
    }
    Ok(CiResult {
        beta_hat,
        lower,
        upper,
        draws,
        fit: engine.side.fit,
        m,
        h: engine.h,
        alpha: cfg.alpha,
        n: data.n(),
    })
}

/// Replicate statistics from one pass over the multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReplicates {
    pub lr: Vec<f64>,
    pub rb: Vec<f64>,
    /// `B × p` full-model draws of `Λ`.
    pub lambda: DMatrix<f64>,
}

/// Bootstrap machinery for testing `β^{(A)} = 0` on one dataset.
#[derive(Debug, Clone)]
pub struct TestEngine {
    pub full: ModelSide,
    pub restricted: ModelSide,
    pub tested: Vec<usize>,
    pub kept: Vec<usize>,
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub t_lr: f64,
    pub t_rb: f64,
    xi_rb: DMatrix<f64>,
    xi0_rb: DMatrix<f64>,
    gram_scaled: SpdFactor,
}

impl TestEngine {
    pub fn new(
        data: &Dataset,
        spec: QuantileSpec,
        tested: &[usize],
        q: usize,
        h: Option<f64>,
    ) -> Result<Self> {
        let full_fit = fit_constrained(data, spec, q)?;
        let rest = fit_restricted(data, spec, tested, q)?;
        let t_lr = lr_statistic(&rest.fit, &full_fit)?;
        let t_rb = rb_statistic(data, spec, &full_fit, &rest.fit, &rest.dropped)?;
        let mut cfg = BootstrapConfig::new(MIN_REPLICATES, 0, 0.05);
        cfg.h = h;
        let h = cfg.resolve_h(&full_fit.residuals)?;

        let n = data.n();
        let all: Vec<usize> = (0..data.p()).collect();
        let tested = rest.dropped.clone();
        let kept = rest.kept.clone();
        let xi_rb = sandwich_matrix(data.x(), &full_fit.residuals, &tested, &all, h)?;
        let xi0_rb = sandwich_matrix(data.x(), &rest.fit.residuals, &tested, &kept, h)?;
        let gram = tested_gram(data, &tested)?;
        let gram_scaled = SpdFactor::new(&(&gram.matrix / n as f64), "tested Gram matrix")?;
        let full = ModelSide::new(data, full_fit, &all, h)?;
        let restricted = ModelSide::new(data, rest.fit, &kept, h)?;
        Ok(Self {
            full,
            restricted,
            tested,
            kept,
            n,
            h,
            tau: spec.tau(),
            t_lr,
            t_rb,
            xi_rb,
            xi0_rb,
            gram_scaled,
        })
    }

    /// Block size for the full-model gradient series.
    pub fn select_m(&self, cfg: &BootstrapConfig) -> Result<usize> {
        cfg.resolve_m(&self.full.gradient)
    }

    pub fn statistic(&self, kind: TestKind) -> f64 {
        match kind {
            TestKind::Lr => self.t_lr,
            TestKind::Rb => self.t_rb,
        }
    }

    /// `B` replicates of both statistics. One multiplier vector per replicate
    /// drives both the full and the restricted score.
    pub fn replicates(&self, m: usize, b: usize, seed: u64) -> Result<TestReplicates> {
        let basis = MultiplierBasis::new(&self.full.gradient, m)?;
        let basis0 = MultiplierBasis::new(&self.restricted.gradient, m)?;
        let rows = (0..b)
            .into_par_iter()
            .map(|k| {
                let v = multipliers(seed, k as u64, basis.len());
                let d = self.full.map.draw(basis.psi(&v));
                let d0 = self.restricted.map.draw(basis0.psi(&v));
                let lr = g1(&d0.lambda, self.restricted.map.metric(), &d0.psi)?
                    - g1(&d.lambda, self.full.map.metric(), &d.psi)?;
                let diff = &self.xi_rb * &d.lambda - &self.xi0_rb * &d0.lambda;
                let rb = diff.dot(&self.gram_scaled.solve(&diff));
                Ok((lr, rb, d.lambda))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = self.full.fit.beta.len();
        Ok(TestReplicates {
            lr: rows.iter().map(|r| r.0).collect(),
            rb: rows.iter().map(|r| r.1).collect(),
            lambda: DMatrix::from_fn(rows.len(), p, |i, j| rows[i].2[j]),
        })
    }

    pub fn result(&self, kind: TestKind, replicates: Vec<f64>, m: usize, seed: u64) -> TestResult {
        let statistic = self.statistic(kind);
        let (p_value, exceed_fraction) = tail_fractions(statistic, &replicates);
        TestResult {
            kind,
            statistic,
            config: TestConfigEcho {
                m,
                h: self.h,
                b: replicates.len(),
                seed,
                tau: self.tau,
            },
            replicates,
            p_value,
            exceed_fraction,
            tested: self.tested.clone(),
        }
    }
}

/// Both tests from shared replicates, `(LR, RB)`.
pub fn bootstrap_tests(
    data: &Dataset,
    spec: QuantileSpec,
    tested: &[usize],
    q: usize,
    cfg: &BootstrapConfig,
) -> Result<(TestResult, TestResult)> {
    cfg.validate(data.n())?;
    let engine = TestEngine::new(data, spec, tested, q, cfg.h)?;
    let m = engine.select_m(cfg)?;
    let reps = engine.replicates(m, cfg.b, cfg.seed)?;
    Ok((
        engine.result(TestKind::Lr, reps.lr, m, cfg.seed),
        engine.result(TestKind::Rb, reps.rb, m, cfg.seed),
    ))
}

/// Bootstrap test of `β^{(A)} = 0` against the constrained alternative.
pub fn bootstrap_test(
    data: &Dataset,
    spec: QuantileSpec,
    tested: &[usize],
    q: usize,
    cfg: &BootstrapConfig,
    kind: TestKind,
) -> Result<TestResult> {
    let (lr, rb) = bootstrap_tests(data, spec, tested, q, cfg)?;
    Ok(match kind {
        TestKind::Lr => lr,
        TestKind::Rb => rb,
    })
}
