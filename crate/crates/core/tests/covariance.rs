mod common;

use bayeslin::covariance::{self, CovarianceDecomposition};
use bayeslin::estimators;
use bayeslin::scenarios;
use bayeslin::{Error, GeneralLinearDesign, RealMatrix, Tol};
use common::*;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (3usize..=10).prop_flat_map(|n| (Just(n), 1..n.min(5)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn decompose_then_recompose((n, k) in dims(), seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let d = random_design(&mut r, n, k, 50.0);
        let dec = covariance::decompose(&d, &tol).unwrap();
        prop_assert!(rel_fro(&dec.recompose(&tol).unwrap(), d.omega()) < 1e-10);
        // Independent evaluation of the blocks.
        let bi = gj_inverse(&d.xtx());
        let gamma = &bi * d.x().transpose() * d.omega() * d.x() * &bi;
        prop_assert!(rel_fro(&dec.gamma, &gamma) < 1e-10);
    }

    #[test]
    fn block_inverse_matches_direct((n, k) in dims(), seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let d = random_design(&mut r, n, k, 50.0);
        let dec = covariance::decompose(&d, &tol).unwrap();
        let inv = dec.block_inverse(&tol).unwrap();
        prop_assert!(rel_fro(&inv, &gj_inverse(d.omega())) < 1e-8);
    }

    #[test]
    fn rao_structure_is_basis_free((n, k) in dims(), seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let (d, _) = rao_design(&mut r, n, k, false);
        prop_assert!(covariance::has_rao_structure(&d, &tol).unwrap());
        let q = scenarios::random_matrix(n - k, n - k, &mut r).qr().q();
        let rotated = d.parts().with_z(d.z() * q).build(&tol).unwrap();
        prop_assert!(covariance::has_rao_structure(&rotated, &tol).unwrap());
        let dec = covariance::decompose(&rotated, &tol).unwrap();
        prop_assert!(max_abs(&dec.xi) < 1e-10);
    }

    #[test]
    fn gls_equals_ols_under_rao((n, k) in dims(), seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let (d, _) = rao_design(&mut r, n, k, false);
        let gls = estimators::gls_map(&d, &tol).unwrap().l;
        let ols = estimators::ols_map(&d, &tol).unwrap().l;
        prop_assert!(rel_fro(&gls, &ols) < 1e-9);
    }

    #[test]
    fn non_rao_is_detected((n, k) in dims(), seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let (d, _) = non_rao_design(&mut r, n, k, 1e-3);
        prop_assert!(!covariance::has_rao_structure(&d, &tol).unwrap());
    }
}

#[test]
fn printed_blocks_rebuild_example_covariance() {
    let tol = Tol::default();
    for a in [9.0, 12.5, 100.0] {
        let fx = scenarios::example_fixture(a).unwrap();
        let d = &fx.design;
        let printed = CovarianceDecomposition::from_blocks(
            d.x().clone(),
            fx.printed_z.clone(),
            fx.printed_gamma.clone(),
            fx.printed_xi.clone(),
            fx.printed_delta.clone(),
        )
        .unwrap();
        assert!(max_abs(&(printed.recompose(&tol).unwrap() - d.omega())) < 1e-12);
        assert!(max_abs(&(d.x().transpose() * &fx.printed_z)) > 0.5);
        // Canonical Z = e₃ gives Γ equal to the leading 2×2 block of Ω.
        let dec = covariance::decompose(d, &tol).unwrap();
        assert!(max_abs(&(&dec.gamma - d.omega().view((0, 0), (2, 2)))) < 1e-12);
        assert!(!covariance::has_rao_structure(d, &tol).unwrap());
    }
}

#[test]
fn from_blocks_round_trip() {
    let tol = Tol::default();
    let mut r = rng(8);
    let base = GeneralLinearDesign::new(scenarios::random_design_matrix(6, 2, &mut r), RealMatrix::identity(6, 6), &tol).unwrap();
    let gamma = scenarios::random_spd(2, 4.0, &mut r);
    let delta = scenarios::random_spd(4, 4.0, &mut r);
    let xi = scenarios::random_matrix(2, 4, &mut r) * 0.05;
    let dec = CovarianceDecomposition::from_blocks(base.x().clone(), base.z().clone(), gamma.clone(), xi.clone(), delta.clone()).unwrap();
    let om = dec.recompose(&tol).unwrap();
    let d = base.with_omega(om, &tol).unwrap();
    let again = covariance::decompose(&d, &tol).unwrap();
    assert!(rel_fro(&again.gamma, &gamma) < 1e-10);
    assert!(rel_fro(&again.xi, &xi) < 1e-10);
    assert!(rel_fro(&again.delta, &delta) < 1e-10);
}

#[test]
fn indefinite_blocks_are_rejected() {
    let tol = Tol::default();
    let mut r = rng(9);
    let base = GeneralLinearDesign::new(scenarios::random_design_matrix(5, 2, &mut r), RealMatrix::identity(5, 5), &tol).unwrap();
    let dec = CovarianceDecomposition::from_blocks(
        base.x().clone(),
        base.z().clone(),
        RealMatrix::identity(2, 2),
        RealMatrix::from_element(2, 3, 5.0),
        RealMatrix::identity(3, 3),
    )
    .unwrap();
    assert!(matches!(dec.recompose(&tol), Err(Error::NotSpd { .. })));
}
