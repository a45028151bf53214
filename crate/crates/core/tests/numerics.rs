use ccgnav::numerics::{chi2_cdf, chi2_quantile, nullspace_basis, pseudo_inverse, Mat, RngState};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn chi_square_quantiles_agree_with_reference_distribution() {
    for dof in 1..=6u32 {
        let reference = ChiSquared::new(f64::from(dof)).unwrap();
        for p in [0.01, 0.1, 0.5, 0.9, 0.95, 0.99, 0.999] {
            let q = chi2_quantile(dof, p).unwrap();
            let want = reference.inverse_cdf(p);
            assert!((q - want).abs() < 1e-8 * (1.0 + want), "dof {dof} p {p}: {q} vs {want}");
            assert!((chi2_cdf(dof, q) - reference.cdf(q)).abs() < 1e-10);
        }
    }
}

#[test]
fn two_dof_quantile_table_value() {
    assert!((chi2_quantile(2, 0.95).unwrap() - 5.991465).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_inverse_and_nullspace_identities(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
        let mut rng = RngState::new(seed);
        let m = Mat::new(rows, cols, (0..rows * cols).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).unwrap();
        let p = pseudo_inverse(&m, 1e-12).unwrap();
        let mpm = m.mul(&p).mul(&m);
        prop_assert!(mpm.sub(&m).unwrap().max_abs() < 1e-9);
        let pmp = p.mul(&m).mul(&p);
        prop_assert!(pmp.sub(&p).unwrap().max_abs() < 1e-9 * (1.0 + p.max_abs()));
        let n = nullspace_basis(&m, 1e-12).unwrap();
        prop_assert_eq!(n.cols(), cols.saturating_sub(rows));
        prop_assert!(m.mul(&n).max_abs() < 1e-10);
        let ntn = n.transpose().mul(&n);
        prop_assert!(ntn.sub(&Mat::identity(n.cols())).unwrap().max_abs() < 1e-10);
    }
}
