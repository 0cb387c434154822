use super::*;

fn intercept_only(y: &[f64]) -> Dataset {
    let n = y.len();
    Dataset::new(
        DVector::from_column_slice(y),
        DMatrix::from_element(n, 1, 1.0),
    )
    .unwrap()
}

fn tau(t: f64) -> QuantileSpec {
    QuantileSpec::new(t).unwrap()
}

#[test]
fn check_loss_values() {
    assert_eq!(check_loss(1.0, 0.5), 0.5);
    assert!((check_loss(-1.0, 0.8) - 0.2).abs() < 1e-15);
    assert_eq!(check_loss(0.0, 0.3), 0.0);
}

#[test]
fn psi_values() {
    assert_eq!(psi(-2.0, 0.5), -0.5);
    assert_eq!(psi(3.0, 0.8), 0.8);
    assert_eq!(psi(0.0, 0.8), 0.8);
}

#[test]
fn quantile_spec_bounds() {
    assert!(QuantileSpec::new(0.0).is_err());
    assert!(QuantileSpec::new(1.0).is_err());
    assert!(QuantileSpec::new(f64::NAN).is_err());
}

#[test]
fn dataset_validation() {
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 1.0, 2.0]);
    assert!(Dataset::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), x.clone()).is_err());
    assert!(Dataset::new_general(DVector::from_vec(vec![1.0, 2.0, 3.0]), x).is_ok());
    let x = DMatrix::from_element(2, 2, 1.0);
    assert!(Dataset::new_general(DVector::from_vec(vec![1.0, 2.0]), x).is_err());
    let x = DMatrix::from_element(3, 1, 1.0);
    assert!(Dataset::new(DVector::from_vec(vec![1.0, f64::NAN, 3.0]), x).is_err());
}

#[test]
fn median_of_three() {
    let fit = fit_unconstrained(&intercept_only(&[1.0, 2.0, 3.0]), tau(0.5)).unwrap();
    assert!((fit.beta[0] - 2.0).abs() < 1e-9);
    assert!((fit.loss - 1.0).abs() < 1e-9);
    assert_eq!(fit.residuals[1], 0.0);
}

#[test]
fn median_with_outlier() {
    // Every y_i is a basic solution; losses: 0 → 5, 10 → 15.
    let fit = fit_unconstrained(&intercept_only(&[0.0, 0.0, 0.0, 10.0]), tau(0.5)).unwrap();
    assert!((fit.loss - 5.0).abs() < 1e-9);
    assert!(fit.beta[0].abs() < 1e-9);
}

#[test]
fn negative_median_clipped_to_boundary() {
    let data = intercept_only(&[-3.0, -2.0, -1.0]);
    let fit = fit_constrained(&data, tau(0.5), 1).unwrap();
    assert_eq!(fit.beta[0], 0.0);
    assert!((fit.loss - 3.0).abs() < 1e-9);
    assert_eq!(fit.active, vec![0]);
    assert!(fit.constrained);
}

#[test]
fn constrained_equals_unconstrained_when_interior() {
    let data = intercept_only(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    let a = fit_unconstrained(&data, tau(0.3)).unwrap();
    let b = fit_constrained(&data, tau(0.3), 1).unwrap();
    assert!((a.loss - b.loss).abs() < 1e-9);
    assert!((a.beta[0] - b.beta[0]).abs() < 1e-8);
    assert!(b.active.is_empty());
}

#[test]
fn quantile_coherence_intercept_only() {
    let y: Vec<f64> = (0..23)
        .map(|i| ((i * 7919) % 23) as f64 * 0.37 - 2.0)
        .collect();
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let data = intercept_only(&y);
    for &t in &[0.1, 0.25, 0.5, 0.8, 0.95] {
        let fit = fit_unconstrained(&data, tau(t)).unwrap();
        let n = y.len() as f64;
        let lo = ((n * t).floor() as usize).max(1) - 1;
        let hi = (((n * t).ceil() as usize) + 1).min(y.len()) - 1;
        assert!(fit.beta[0] >= sorted[lo] - 1e-9 && fit.beta[0] <= sorted[hi] + 1e-9);
    }
}

#[test]
fn restricted_with_empty_set_matches_constrained() {
    let x = DMatrix::from_fn(
        30,
        2,
        |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.7).sin() },
    );
    let y = DVector::from_fn(30, |i, _| {
        1.0 + 0.5 * (i as f64 * 0.7).sin() + (i as f64 * 1.3).cos()
    });
    let data = Dataset::new(y, x).unwrap();
    let full = fit_constrained(&data, tau(0.5), 2).unwrap();
    let r = fit_restricted(&data, tau(0.5), &[], 2).unwrap();
    assert_eq!(r.fit, full);
    assert_eq!(r.kept, vec![0, 1]);
}

#[test]
fn restricted_to_intercept() {
    let x = DMatrix::from_fn(9, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    let y = DVector::from_fn(9, |i, _| -(i as f64) - 1.0);
    let data = Dataset::new(y.clone(), x).unwrap();
    let r = fit_restricted(&data, tau(0.5), &[1], 2).unwrap();
    assert_eq!(r.kept, vec![0]);
    assert_eq!(r.fit.q, 1);
    // All responses are negative, so the nonnegative intercept binds.
    assert_eq!(r.fit.beta[0], 0.0);
    assert!((r.fit.loss - total_check_loss(&y, 0.5)).abs() < 1e-9);
}

#[test]
fn restricted_rejects_invalid_sets() {
    let x = DMatrix::from_fn(9, 3, |i, j| {
        if j == 0 {
            1.0
        } else {
            (i * (j + 1)) as f64 % 5.0
        }
    });
    let data = Dataset::new(DVector::from_fn(9, |i, _| i as f64), x).unwrap();
    assert!(fit_restricted(&data, tau(0.5), &[0], 1).is_err());
    assert!(fit_restricted(&data, tau(0.5), &[3], 1).is_err());
    assert!(fit_restricted(&data, tau(0.5), &[1, 1], 1).is_err());
}

#[test]
fn rank_deficient_design_rejected() {
    let x = DMatrix::from_fn(10, 3, |i, j| match j {
        0 => 1.0,
        1 => i as f64,
        _ => 2.0 * i as f64,
    });
    let data = Dataset::new(DVector::from_fn(10, |i, _| i as f64), x).unwrap();
    assert_eq!(
        fit_unconstrained(&data, tau(0.5)).unwrap_err(),
        Error::RankDeficientDesign
    );
}

#[test]
fn subgradient_optimality_on_generic_data() {
    let n = 60;
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => ((i * 37 % 61) as f64 / 61.0 - 0.5) * 3.0,
        _ => ((i * 53 % 59) as f64 / 59.0).powi(2),
    });
    let y = DVector::from_fn(n, |i, _| {
        0.4 + x[(i, 1)] - 2.0 * x[(i, 2)] + ((i * 31 % 17) as f64 / 17.0 - 0.5)
    });
    let data = Dataset::new(y, x.clone()).unwrap();
    let t = 0.3;
    let fit = fit_unconstrained(&data, tau(t)).unwrap();
    let zero: Vec<usize> = (0..n).filter(|&i| fit.residuals[i] == 0.0).collect();
    assert!(zero.len() <= 3);
    // Σ_{nonzero} ψ x_i + Σ_{zero} w_i x_i = 0 for some w ∈ [τ−1, τ]^k.
    let mut g = DVector::zeros(3);
    for i in (0..n).filter(|i| !zero.contains(i)) {
        g += x.row(i).transpose() * psi(fit.residuals[i], t);
    }
    let xz = DMatrix::from_fn(3, zero.len(), |r, c| x[(zero[c], r)]);
    let w = xz.clone().svd(true, true).solve(&(-&g), 1e-12).unwrap();
    assert!(w.iter().all(|&wi| wi >= t - 1.0 - 1e-8 && wi <= t + 1e-8));
    let tol = 1e-6 * n as f64 * x.amax();
    assert!((g + xz * w).amax() <= tol);
}
