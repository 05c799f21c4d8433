mod common;

use bayeslin::estimators;
use bayeslin::scenarios;
use bayeslin::sufficiency::{self, recover_blue_map};
use bayeslin::{RealMatrix, Tol};
use common::*;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (3usize..=10).prop_flat_map(|n| (Just(n), 1..n.min(5)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_follows_definiteness((n, k) in dims(), rank in 0usize..5, seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let d = random_design(&mut r, n, k, 20.0);
        let rank = rank.min(k);
        let kk = scenarios::random_psd_of_rank(k, rank, &mut r);
        let v = sufficiency::classify_bayes_linear(&d, &kk, &tol).unwrap();
        prop_assert_eq!(v.sufficient, rank == k);
        prop_assert!(v.complete);
    }

    #[test]
    fn sufficiency_survives_left_mixing((n, k) in dims(), rank in 0usize..5, seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let d = random_design(&mut r, n, k, 20.0);
        let kk = scenarios::random_psd_of_rank(k, rank.min(k), &mut r);
        let f = estimators::bayes_linear_map(&d, d.omega(), &kk, &tol).unwrap().l;
        let a = scenarios::random_spd(k, 10.0, &mut r);
        let before = sufficiency::verdict(&f, &d, &tol).unwrap();
        let after = sufficiency::verdict(&(&a * &f), &d, &tol).unwrap();
        prop_assert_eq!(before.sufficient, after.sufficient);
        prop_assert_eq!(before.complete, after.complete);
    }

    #[test]
    fn sufficient_maps_recover_the_blue((n, k) in dims(), seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let d = random_design(&mut r, n, k, 20.0);
        let kk = scenarios::random_spd(k, 20.0, &mut r);
        let f = estimators::bayes_linear_map(&d, d.omega(), &kk, &tol).unwrap().l;
        prop_assert!(sufficiency::is_linearly_sufficient(&f, &d, &tol).unwrap());
        let rec = recover_blue_map(&f, &d, &tol).unwrap();
        prop_assert!(rec.succeeded(&tol));
        prop_assert!(rec.residual_blue < 1e-8);
    }

    #[test]
    fn identity_and_gls_are_sufficient((n, k) in dims(), seed in any::<u64>()) {
        let tol = Tol::default();
        let mut r = rng(seed);
        let d = random_design(&mut r, n, k, 20.0);
        prop_assert!(sufficiency::is_linearly_sufficient(&RealMatrix::identity(n, n), &d, &tol).unwrap());
        let gls = estimators::gls_map(&d, &tol).unwrap().l;
        let v = sufficiency::verdict(&gls, &d, &tol).unwrap();
        prop_assert!(v.sufficient && v.complete);
    }
}

#[test]
fn rank_one_example_prior_is_not_sufficient() {
    let tol = Tol::default();
    let fx = scenarios::example_fixture(9.0).unwrap();
    let d = &fx.design;
    let f = estimators::bayes_linear_map(d, d.omega(), &fx.k1, &tol).unwrap().l;
    let v = sufficiency::verdict(&f, d, &tol).unwrap();
    assert!(!v.sufficient);
    assert!(v.complete);
    assert!(!recover_blue_map(&f, d, &tol).unwrap().succeeded(&tol));
}

#[test]
fn zero_prior_is_complete_only() {
    let tol = Tol::default();
    let mut r = rng(3);
    let d = random_design(&mut r, 5, 2, 5.0);
    let v = sufficiency::classify_bayes_linear(&d, &RealMatrix::zeros(2, 2), &tol).unwrap();
    assert!(!v.sufficient && v.complete);
}

#[test]
fn wrong_width_is_rejected() {
    let tol = Tol::default();
    let mut r = rng(4);
    let d = random_design(&mut r, 5, 2, 5.0);
    assert!(sufficiency::verdict(&RealMatrix::identity(4, 4), &d, &tol).is_err());
}
