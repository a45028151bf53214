use ccgnav::estimator::{
    confidence_ellipsoid, fit, preprocess_linear_sensing, BasisSpec, EstimatorWindow,
};
use ccgnav::numerics::{chi2_quantile, dot, gaussian_sample, inverse, symmetric_eigenvalues, Mat, RngState};
use proptest::prelude::*;

fn cubic(t: f64) -> [f64; 2] {
    [1.0 + 2.0 * t - t.powi(3), 0.5 * t * t]
}

fn window_from(times: &[f64], f: impl Fn(f64) -> Vec<f64>, cov: &Mat) -> EstimatorWindow {
    let mut w = EstimatorWindow::new(times.len()).unwrap();
    for &t in times {
        w.push_measurement(t, f(t), cov.clone()).unwrap();
    }
    w
}

#[test]
fn noise_free_cubic_is_recovered_exactly() {
    for (n, t_start) in [(4, 0.0), (7, 2.0), (30, 40.0), (100, 0.0)] {
        let times: Vec<f64> = (0..n).map(|i| t_start + 0.1 * i as f64).collect();
        let w = window_from(&times, |t| cubic(t).to_vec(), &Mat::identity(2));
        let est = fit(&w, &BasisSpec::polynomial(3)).unwrap();
        let truth = cubic(*times.last().unwrap());
        let scale = 1.0 + truth[0].abs().max(truth[1].abs());
        for j in 0..2 {
            assert!((est.r_hat[j] - truth[j]).abs() < 1e-9 * scale, "N={n}");
        }
    }
}

#[test]
fn constant_obstacle_for_any_degree() {
    for degree in 0..4 {
        let times: Vec<f64> = (0..10).map(|i| 0.5 * i as f64).collect();
        let w = window_from(&times, |_| vec![1.0, 2.0], &Mat::identity(2));
        let est = fit(&w, &BasisSpec::polynomial(degree)).unwrap();
        assert!((est.r_hat[0] - 1.0).abs() < 1e-10 && (est.r_hat[1] - 2.0).abs() < 1e-10);
        // the constant function is reproduced, so the weights sum to one
        assert!((est.a.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn interpolating_window_selects_last_sample() {
    let cov = Mat::from_rows(&[&[0.3, 0.1], &[0.1, 0.2]]);
    let times = [0.0, 0.1, 0.2, 0.3];
    let w = window_from(&times, |t| cubic(t).to_vec(), &cov);
    let est = fit(&w, &BasisSpec::polynomial(3)).unwrap();
    for (i, a) in est.a.iter().enumerate() {
        let want = if i == 3 { 1.0 } else { 0.0 };
        assert!((a - want).abs() < 1e-9);
    }
    assert!(est.pi.sub(&cov).unwrap().max_abs() < 1e-9);
}

#[test]
fn realized_error_is_weighted_noise_sum() {
    let mut rng = RngState::new(11);
    let cov = Mat::from_diag(&[0.25, 0.25]);
    let times: Vec<f64> = (0..50).map(|i| 3.0 + 0.1 * i as f64).collect();
    let noise: Vec<Vec<f64>> = times
        .iter()
        .map(|_| gaussian_sample(&mut rng, &[0.0, 0.0], &cov).unwrap())
        .collect();
    let mut w = EstimatorWindow::new(times.len()).unwrap();
    for (t, n) in times.iter().zip(&noise) {
        let r = cubic(*t);
        w.push_measurement(*t, vec![r[0] + n[0], r[1] + n[1]], cov.clone()).unwrap();
    }
    let est = fit(&w, &BasisSpec::polynomial(3)).unwrap();
    let truth = cubic(*times.last().unwrap());
    for j in 0..2 {
        let weighted: f64 = est.a.iter().zip(&noise).map(|(a, n)| a * n[j]).sum();
        assert!(((est.r_hat[j] - truth[j]) - weighted).abs() < 1e-10);
    }
}

#[test]
fn recentering_leaves_weights_and_covariance_unchanged() {
    let mut rng = RngState::new(12);
    let times: Vec<f64> = (0..20).map(|i| 5.0 + 0.25 * i as f64).collect();
    let cov = Mat::from_diag(&[0.5, 0.1]);
    let mut w = EstimatorWindow::new(times.len()).unwrap();
    for &t in &times {
        let r = cubic(t);
        w.push_measurement(t, vec![r[0] + rng.standard_normal(), r[1]], cov.clone()).unwrap();
    }
    let shifted = fit(&w, &BasisSpec::polynomial(3)).unwrap();
    let raw = fit(
        &w,
        &BasisSpec {
            recenter: false,
            ..BasisSpec::polynomial(3)
        },
    )
    .unwrap();
    for (a, b) in shifted.a.iter().zip(&raw.a) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!(shifted.pi.sub(&raw.pi).unwrap().max_abs() < 1e-8);
    for j in 0..2 {
        assert!((shifted.r_hat[j] - raw.r_hat[j]).abs() < 1e-8);
    }
    assert!(shifted.theta_hat.sub(&raw.theta_hat).unwrap().max_abs() > 1e-3);
}

#[test]
fn unit_covariance_ellipsoid_is_ball_of_chi_square_radius() {
    let times = [0.0, 1.0, 2.0];
    let w = window_from(&times, |_| vec![0.5, -1.0], &Mat::identity(2));
    let mut est = fit(&w, &BasisSpec::polynomial(2)).unwrap();
    est.pi = Mat::identity(2);
    let ell = confidence_ellipsoid(&est, 0.05).unwrap();
    for k in 0..8 {
        let a = k as f64 * 0.7;
        let d = [a.cos(), a.sin()];
        let s = ell.support(&d).unwrap() - dot(&d, &est.r_hat);
        assert!((s - 5.991465f64.sqrt()).abs() < 1e-6, "{s}");
    }
    let tiny = confidence_ellipsoid(&est, 1.0 - 1e-12).unwrap();
    assert!(tiny.support(&[1.0, 0.0]).unwrap() - 0.5 < 1e-5);
    assert!(confidence_ellipsoid(&est, 0.0).is_err());
    est.pi = Mat::from_diag(&[1.0, 0.0]);
    assert!(confidence_ellipsoid(&est, 0.05).is_err());
}

#[test]
fn monte_carlo_coverage_matches_confidence_level() {
    let sigma = 0.5;
    let cov = Mat::from_diag(&[sigma * sigma, sigma * sigma]);
    let n = 100;
    let basis = BasisSpec::polynomial(3);
    let q = chi2_quantile(2, 0.95).unwrap();
    let mut rng = RngState::new(2027);
    let mut covered = 0;
    let trials = 2000;
    for trial in 0..trials {
        let t_start = 0.37 * trial as f64 % 20.0;
        let mut w = EstimatorWindow::new(n).unwrap();
        for i in 0..n {
            let t = t_start + 0.1 * i as f64;
            let r = cubic(0.1 * t);
            let y = gaussian_sample(&mut rng, &r, &cov).unwrap();
            w.push_measurement(t, y, cov.clone()).unwrap();
        }
        let est = fit(&w, &basis).unwrap();
        let truth = cubic(0.1 * est.t_k);
        let e = [truth[0] - est.r_hat[0], truth[1] - est.r_hat[1]];
        let inv = inverse(&est.pi).unwrap();
        let inside = dot(&e, &inv.mulv(&e)) <= q;
        if trial < 20 {
            // the set-based test agrees with the quadratic form
            let ell = confidence_ellipsoid(&est, 0.05).unwrap();
            if let Ok(v) = ell.contains(&truth, 1e-9) {
                assert_eq!(v, inside);
            }
        }
        covered += usize::from(inside);
    }
    let rate = covered as f64 / trials as f64;
    println!("coverage {rate}");
    assert!((0.93..=0.97).contains(&rate), "coverage {rate}");
}

#[test]
fn linear_sensing_reduces_to_position_measurement() {
    let sb = Mat::from_rows(&[&[0.4, 0.1], &[0.1, 0.3]]);
    let (y, s) = preprocess_linear_sensing(&[1.0, 2.0], &Mat::identity(2), &sb).unwrap();
    assert_eq!(y, vec![1.0, 2.0]);
    assert!(s.sub(&sb).unwrap().max_abs() < 1e-12);

    let (y, s) = preprocess_linear_sensing(&[1.0, 2.0], &Mat::identity(2).scale(2.0), &sb).unwrap();
    assert!((y[0] - 0.5).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
    assert!(s.sub(&sb.scale(0.25)).unwrap().max_abs() < 1e-12);

    let h = Mat::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
    let r = [0.7, -1.3];
    let z = h.mulv(&r);
    let (y, s) = preprocess_linear_sensing(&z, &h, &Mat::identity(3)).unwrap();
    assert!((y[0] - r[0]).abs() < 1e-10 && (y[1] - r[1]).abs() < 1e-10);
    assert!(symmetric_eigenvalues(&s).unwrap()[0] > 0.0);

    let flat = Mat::from_rows(&[&[1.0, 1.0], &[2.0, 2.0]]);
    assert!(preprocess_linear_sensing(&[1.0, 2.0], &flat, &Mat::identity(2)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_reproduce_basis_and_covariance_is_psd(
        gaps in proptest::collection::vec(0.01..1.0f64, 6..25),
        t0 in -50.0..50.0f64,
        s1 in 0.01..2.0f64, s2 in 0.01..2.0f64,
    ) {
        let mut t = t0;
        let times: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
        let cov = Mat::from_diag(&[s1, s2]);
        let w = window_from(&times, |_| vec![0.0, 0.0], &cov);
        let basis = BasisSpec::polynomial(3);
        let est = fit(&w, &basis).unwrap();
        let tau_k = times[times.len() - 1] - times[0];
        let phi_k = basis.eval(tau_k);
        for j in 0..basis.len() {
            let got: f64 = est.a.iter().zip(&times).map(|(a, ti)| a * basis.eval(ti - times[0])[j]).sum();
            prop_assert!((got - phi_k[j]).abs() < 1e-6 * (1.0 + phi_k[j].abs()));
        }
        let ev = symmetric_eigenvalues(&est.pi).unwrap();
        prop_assert!(ev[0] >= 0.0);
        prop_assert!(est.pi.asymmetry() < 1e-14);
    }
}
