mod common;

use common::{decaying_signal, rng};
use ddm_core::oracle::{linear_cover_check, local_rate_sq, surrogate_rate_sq};
use ddm_core::sigma::SigmaGrid;
use ddm_core::{
    covers_check, ebr_check, minimax_rate, oracle, pt_check, pt_to_ebr_tau, surrogate_oracle, verify_sigma_conditions,
    ClassDef, ModelConfig, PtParams, Signal,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn polished_tail_signals_satisfy_the_bias_restriction() {
    let pt = PtParams::new(2.0, 1, 2.0).unwrap();
    let tau = pt_to_ebr_tau(&pt, 0.0);
    assert!((tau - 6.0).abs() < 1e-12);
    let mut r = rng(31);
    let mut accepted = 0;
    let mut tried = 0;
    while accepted < 300 {
        tried += 1;
        let sig = decaying_signal(512, &mut r);
        if !pt_check(&sig, &pt) {
            continue;
        }
        accepted += 1;
        let eps = 10f64.powf(r.random_range(-3.0..0.0));
        let model = ModelConfig::new(eps, 0.0, 512).unwrap();
        let e = ebr_check(&sig, &model, tau);
        assert!(e.member, "ratio {} at eps {eps}", e.ratio);
    }
    assert!(tried > accepted, "sampler should also produce non-members");
}

#[test]
fn sigma_conditions_hold_for_the_reference_smoothing_levels() {
    for p in [0.0, 0.5, 1.0, 2.0] {
        let model = ModelConfig::new(1.0, p, 1).unwrap();
        let report = verify_sigma_conditions(&model, 10_000, &SigmaGrid::default()).unwrap();
        assert!(report.passed(), "p = {p}: {:?}", report.violations.first());
        assert!(report.checks > 10_000);
    }
}

#[test]
fn zero_signal_rates() {
    let model = ModelConfig::new(0.1, 0.0, 64).unwrap();
    let z = Signal::zero(64);
    let o = oracle(&z, &model);
    assert_eq!(o.i_star, 1);
    assert!((o.rate_sq - 0.01).abs() < 1e-15);
    assert!(ebr_check(&z, &model, 1e-12).member);
}

#[test]
fn class_samples_stay_within_the_covering_constants() {
    let model = ModelConfig::new(0.02, 0.5, 512).unwrap();
    let defs = [
        ClassDef::SobolevHyperrectangle { beta: 1.0, q: 1.0 },
        ClassDef::SobolevEllipsoid { beta: 1.0, q: 1.0 },
        ClassDef::AnalyticEllipsoid { c: 1.0, d: 1.0, q: 1.0 },
        ClassDef::ParametricHyperrectangle { n0: 20, q: 1.0 },
    ];
    for def in defs {
        let class = def.materialize(512);
        let rep = covers_check(&class, &model, 200, 7).unwrap();
        assert!(rep.passed, "{}: worst {}", def.name(), rep.worst_ratio);
        assert!(minimax_rate(&class, &model).unwrap().rate_sq > 0.0);
    }
    assert!(linear_cover_check(&model, 200, 8).passed);
}

fn signal_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 1..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracles_are_minimal(coeffs in signal_strategy(), eps in 0.001..1.0f64, p in 0.0..2.0f64) {
        let sig = Signal::custom(coeffs);
        let model = ModelConfig::new(eps, p, sig.len()).unwrap();
        let o = oracle(&sig, &model);
        let s = surrogate_oracle(&sig, &model);
        for i in 1..=sig.len() {
            prop_assert!(o.rate_sq <= local_rate_sq(&sig, &model, i) * (1.0 + 1e-12));
            prop_assert!(s.surr_rate_sq <= surrogate_rate_sq(&sig, &model, i) * (1.0 + 1e-12));
        }
        prop_assert!((o.rate_sq - local_rate_sq(&sig, &model, o.i_star)).abs() <= 1e-12 * o.rate_sq);
    }

    #[test]
    fn oracle_rate_is_monotone_in_signal_size(coeffs in signal_strategy(), c in 1.0..10.0f64, eps in 0.01..1.0f64) {
        let sig = Signal::custom(coeffs);
        let model = ModelConfig::new(eps, 1.0, sig.len()).unwrap();
        let small = oracle(&sig, &model).rate_sq;
        let big = oracle(&sig.scaled(c), &model).rate_sq;
        prop_assert!(big >= small * (1.0 - 1e-12));
        prop_assert!(big <= c * c * small * (1.0 + 1e-12));
    }

    #[test]
    fn oracle_rate_grows_with_noise(coeffs in signal_strategy(), eps in 0.001..0.5f64, f in 1.0..4.0f64) {
        let sig = Signal::custom(coeffs);
        let lo = ModelConfig::new(eps, 0.5, sig.len()).unwrap();
        let hi = ModelConfig::new(eps * f, 0.5, sig.len()).unwrap();
        prop_assert!(oracle(&sig, &hi).rate_sq >= oracle(&sig, &lo).rate_sq * (1.0 - 1e-12));
    }
}
