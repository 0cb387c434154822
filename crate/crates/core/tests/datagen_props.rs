use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use cqreg::datagen::{
    gen_piecewise_ar, gen_setting, marginal_variance, CoefficientFn, PiecewiseARSpec, SimSetting,
    DEFAULT_BURN_IN,
};
use cqreg::qr::{fit_constrained, QuantileSpec};

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[test]
fn stationary_ar_autocorrelation() {
    let s = PiecewiseARSpec::stationary(0.5).unwrap();
    let x = gen_piecewise_ar(&s, 5000, 11).unwrap();
    assert!((lag1_autocorrelation(x.as_slice()) - 0.5).abs() < 0.05);
}

#[test]
fn cosine_coefficient_variance_profile() {
    let s = PiecewiseARSpec::new(
        vec![],
        vec![CoefficientFn::Cosine { amplitude: 0.7 }],
        DEFAULT_BURN_IN,
    )
    .unwrap();
    let n = 1000;
    let (mut near0, mut near_quarter) = (0.0, 0.0);
    for seed in 0..200 {
        let e = gen_piecewise_ar(&s, n, seed).unwrap();
        near0 += e.as_slice()[..50].iter().map(|v| v * v).sum::<f64>();
        near_quarter += e.as_slice()[225..275].iter().map(|v| v * v).sum::<f64>();
    }
    assert!(near0 > near_quarter);
    // Against the exact recursion: v ≈ 1/(1 − 0.49) near t = 0, 1 at t = 1/4.
    let v = marginal_variance(&s, n);
    let emp0 = near0 / (200.0 * 50.0);
    let exact0 = v.as_slice()[..50].iter().sum::<f64>() / 50.0;
    assert!((emp0 - exact0).abs() < 0.1 * exact0);
}

fn ks_against_normal(sample: &mut [f64], sd: f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let dist = Normal::new(0.0, sd).unwrap();
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = dist.cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn burn_in_reaches_the_stationary_law() {
    let sd = (4.0f64 / 3.0).sqrt();
    for burn in [DEFAULT_BURN_IN, 2 * DEFAULT_BURN_IN] {
        let s = PiecewiseARSpec::new(vec![], vec![CoefficientFn::Constant(0.5)], burn).unwrap();
        let mut first: Vec<f64> = (0..2000u64)
            .map(|seed| gen_piecewise_ar(&s, 50, seed).unwrap()[0])
            .collect();
        assert!(ks_against_normal(&mut first, sd) < 0.05);
    }
}

#[test]
fn binding_slope_has_boundary_mass() {
    let spec = QuantileSpec::new(0.5).unwrap();
    for id in 1..=3u8 {
        let zeros = (0..200u64)
            .into_par_iter()
            .filter(|&seed| {
                let sim = gen_setting(&SimSetting {
                    id,
                    n: 400,
                    beta0: 1.0,
                    beta1: 0.0,
                    tau: 0.5,
                    seed,
                })
                .unwrap();
                fit_constrained(&sim.data, spec, 2).unwrap().beta[1] == 0.0
            })
            .count();
        assert!(zeros as f64 / 200.0 > 0.2, "setting {id}: {zeros}/200");
    }
}

#[test]
fn heteroscedastic_errors_have_zero_conditional_quantile() {
    for tau in [0.5, 0.8] {
        let sim = gen_setting(&SimSetting {
            id: 3,
            n: 5000,
            beta0: 1.0,
            beta1: 0.0,
            tau,
            seed: 21,
        })
        .unwrap();
        let edges = [0.0, 0.5, 1.0, f64::INFINITY];
        for w in edges.windows(2) {
            let mut bin: Vec<f64> = (0..5000)
                .filter(|&i| sim.x[i].abs() >= w[0] && sim.x[i].abs() < w[1])
                .map(|i| sim.eps[i])
                .collect();
            bin.sort_by(f64::total_cmp);
            let q = bin[((bin.len() as f64 * tau) as usize).min(bin.len() - 1)];
            assert!(q.abs() < 0.1, "tau {tau}, |x| in {w:?}: quantile {q}");
        }
    }
}

#[test]
fn settings_are_deterministic() {
    let s = SimSetting {
        id: 2,
        n: 100,
        beta0: 1.0,
        beta1: 0.5,
        tau: 0.8,
        seed: 3,
    };
    assert_eq!(gen_setting(&s).unwrap(), gen_setting(&s).unwrap());
    let mut t = s;
    t.seed = 4;
    assert_ne!(gen_setting(&s).unwrap().data, gen_setting(&t).unwrap().data);
}
