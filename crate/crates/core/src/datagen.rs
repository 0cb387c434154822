//! Simulated piecewise locally stationary data.
//!
//! The general generator is a time-varying AR(1),
//! `e_i = a(t_i) e_{i−1} + η_i` with `t_i = i/n` and iid standard normal
//! innovations, where `a` is smooth within segments and may jump at the
//! breakpoints. The three simulation settings build `y = β₀ + β₁x + ε` from
//! such series, with `ε` centred so that its τ-quantile is zero.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::qr::Dataset;
use crate::rng::{substream, Rng};
use crate::{Error, Result};

/// Largest admissible `|a(t)|`.
pub const MAX_COEFFICIENT: f64 = 0.99;

/// Default number of burn-in steps.
pub const DEFAULT_BURN_IN: usize = 500;

/// Coefficient function on one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientFn {
    Constant(f64),
    /// `amplitude · cos(2πt)`.
    Cosine {
        amplitude: f64,
    },
    /// Linear interpolation from `start` at `t = 0` to `end` at `t = 1`.
    Linear {
        start: f64,
        end: f64,
    },
}

impl CoefficientFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            CoefficientFn::Constant(a) => a,
            CoefficientFn::Cosine { amplitude } => amplitude * (2.0 * PI * t).cos(),
            CoefficientFn::Linear { start, end } => start + (end - start) * t,
        }
    }

    fn bound(&self) -> f64 {
        match *self {
            CoefficientFn::Constant(a) => a.abs(),
            CoefficientFn::Cosine { amplitude } => amplitude.abs(),
            CoefficientFn::Linear { start, end } => start.abs().max(end.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseARSpec {
    /// Interior breakpoints, ascending in `(0, 1)`. Segment `r` covers
    /// `(b_{r−1}, b_r]`.
    pub breakpoints: Vec<f64>,
    /// One coefficient function per segment.
    pub segments: Vec<CoefficientFn>,
    pub burn_in: usize,
}

impl PiecewiseARSpec {
    pub fn new(
        breakpoints: Vec<f64>,
        segments: Vec<CoefficientFn>,
        burn_in: usize,
    ) -> Result<Self> {
        let spec = Self {
            breakpoints,
            segments,
            burn_in,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn stationary(a: f64) -> Result<Self> {
        Self::new(vec![], vec![CoefficientFn::Constant(a)], DEFAULT_BURN_IN)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.len() != self.breakpoints.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} breakpoints need {} segments, got {}",
                self.breakpoints.len(),
                self.breakpoints.len() + 1,
                self.segments.len()
            )));
        }
        let mut prev = 0.0;
        for &b in &self.breakpoints {
            if !(b > prev && b < 1.0) {
                return Err(Error::InvalidInput(
                    "breakpoints must be ascending in (0, 1)".into(),
                ));
            }
            prev = b;
        }
        if let Some(s) = self
            .segments
            .iter()
            .find(|s| !(s.bound() <= MAX_COEFFICIENT))
        {
            return Err(Error::InvalidInput(format!(
                "coefficient {s:?} exceeds {MAX_COEFFICIENT} in absolute value"
            )));
        }
        Ok(())
    }

    /// `a(t)`.
    pub fn coefficient(&self, t: f64) -> f64 {
        let r = self.breakpoints.iter().take_while(|&&b| t > b).count();
        self.segments[r].eval(t)
    }
}

fn sample_ar(spec: &PiecewiseARSpec, n: usize, rng: &mut Rng) -> DVector<f64> {
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let a0 = spec.coefficient(1.0 / n as f64);
    let mut e = normal();
    for _ in 0..spec.burn_in {
        e = a0 * e + normal();
    }
    DVector::from_fn(n, |i, _| {
        let t = (i + 1) as f64 / n as f64;
        e = spec.coefficient(t) * e + normal();
        e
    })
}

/// `n` values of the time-varying AR(1); deterministic given `seed`.
pub fn gen_piecewise_ar(spec: &PiecewiseARSpec, n: usize, seed: u64) -> Result<DVector<f64>> {
    spec.validate()?;
    Ok(sample_ar(spec, n, &mut substream(seed, 0)))
}

/// `v_i` from `v_i = a(t_i)² v_{i−1} + 1`, starting at 1 before burn-in.
pub fn marginal_variance(spec: &PiecewiseARSpec, n: usize) -> DVector<f64> {
    let a0 = spec.coefficient(1.0 / n as f64);
    let mut v = 1.0;
    for _ in 0..spec.burn_in {
        v = a0 * a0 * v + 1.0;
    }
    DVector::from_fn(n, |i, _| {
        let a = spec.coefficient((i + 1) as f64 / n as f64);
        v = a * a * v + 1.0;
        v
    })
}

/// Standard normal quantile.
pub fn normal_quantile(tau: f64) -> f64 {
    Normal::standard().inverse_cdf(tau)
}

/// `F_{e_i}⁻¹(τ) = √v_i Φ⁻¹(τ)` for Gaussian innovations.
pub fn marginal_quantile_gaussian_ar(spec: &PiecewiseARSpec, n: usize, tau: f64) -> DVector<f64> {
    let z = normal_quantile(tau);
    marginal_variance(spec, n).map(|v| v.sqrt() * z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    /// 1, 2 or 3.
    pub id: u8,
    pub n: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub tau: f64,
    pub seed: u64,
}

impl SimSetting {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.id) {
            return Err(Error::InvalidInput(format!("unknown setting {}", self.id)));
        }
        if self.n < 50 {
            return Err(Error::InvalidInput(format!("n = {} below 50", self.n)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if !(self.beta0.is_finite() && self.beta1.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Generator for the covariate.
    pub fn covariate_spec(&self) -> PiecewiseARSpec {
        match self.id {
            1 => PiecewiseARSpec::stationary(0.5).expect("valid"),
            _ => PiecewiseARSpec::new(
                vec![0.5],
                vec![CoefficientFn::Constant(-0.3), CoefficientFn::Constant(0.3)],
                DEFAULT_BURN_IN,
            )
            .expect("valid"),
        }
    }

    /// Generator for the error series before centring.
    pub fn error_spec(&self) -> PiecewiseARSpec {
        match self.id {
            1 => PiecewiseARSpec::stationary(0.5).expect("valid"),
            _ => PiecewiseARSpec::new(
                vec![],
                vec![CoefficientFn::Cosine { amplitude: 0.7 }],
                DEFAULT_BURN_IN,
            )
            .expect("valid"),
        }
    }
}

/// A simulated dataset with the coefficients that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    /// Columns: intercept, `x`.
    pub data: Dataset,
    pub beta: DVector<f64>,
    pub x: DVector<f64>,
    pub eps: DVector<f64>,
}

/// Draws one dataset from a simulation setting.
pub fn gen_setting(s: &SimSetting) -> Result<SimData> {
    s.validate()?;
    let n = s.n;
    let x = sample_ar(&s.covariate_spec(), n, &mut substream(s.seed, 1));
    let espec = s.error_spec();
    let e = sample_ar(&espec, n, &mut substream(s.seed, 2));
    let centred = e - marginal_quantile_gaussian_ar(&espec, n, s.tau);
    let eps = match s.id {
        3 => DVector::from_fn(n, |i, _| (1.0 + x[i] * x[i]).sqrt() * centred[i] / 2.0),
        _ => centred,
    };
    let y = DVector::from_fn(n, |i, _| s.beta0 + s.beta1 * x[i] + eps[i]);
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    Ok(SimData {
        data: Dataset::new(y, design)?,
        beta: DVector::from_vec(vec![s.beta0, s.beta1]),
        x,
        eps,
    })
}
