mod common;

use common::*;
use isac_beamkit::cvxkit::fully_digital_capacity;
use isac_beamkit::design::dft_column;
use isac_beamkit::isac_opt::{
    ao_p1, ao_p1_with, design_rate, dft_select_fc, fpp_sca_vrf, init_random_phase, isac_ao_from, optimal_rbb_isac,
    wmmse_objective, wmmse_update, FppScaOptions,
};
use isac_beamkit::linalg::{CMat, C64};
use isac_beamkit::model::default_prior;
use isac_beamkit::pcrb::SensingModel;
use isac_beamkit::sensing_opt::{ao_p0, AoOptions};
use isac_beamkit::{HybridDesign, RxArchitecture, RxCombiner, Scenario, TxAnalog};
use proptest::prelude::*;
use std::f64::consts::PI;

fn with_rate_fraction(mut s: Scenario, frac: f64) -> Scenario {
    let cap = fully_digital_capacity(s.channels(), s.power, s.noise_comm);
    s.rate_target = frac * cap;
    s
}

/// Own DFT column e^{-j2π qn/N}, written from the definition.
fn dft(n: usize, q: usize) -> isac_beamkit::linalg::CVec {
    isac_beamkit::linalg::CVec::from_fn(n, |i, _| C64::from_polar(1.0, -2.0 * PI * (q * i) as f64 / n as f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn wmmse_surrogate_is_tight_and_a_lower_bound(seed in 0u64..1_000_000, ns in 1usize..3) {
        let mut r = rng(seed);
        let h = rand_cmat(&mut r, 2, 4);
        let v = rand_phase_mat(&mut r, 4, 2);
        let vbb = rand_cmat(&mut r, 2, ns);
        let noise = 0.3;
        let aux = wmmse_update(&h, &v, &vbb, noise).unwrap();
        let rate = log_det_rate(&(&h * &v), &(&vbb * vbb.adjoint()), noise);
        prop_assert!((aux.xi - rate).abs() <= 1e-10 * rate.max(1.0));
        let v2 = rand_phase_mat(&mut r, 4, 2);
        let vbb2 = rand_cmat(&mut r, 2, ns);
        let lower = wmmse_objective(&aux, &h, &v2, &vbb2, noise).unwrap();
        let rate2 = log_det_rate(&(&h * &v2), &(&vbb2 * vbb2.adjoint()), noise);
        prop_assert!(lower <= rate2 + 1e-10 * rate2.abs().max(1.0));
    }

    #[test]
    fn dft_selection_is_exhaustive_optimum(seed in 0u64..1_000_000, n in 2usize..7, k_raw in 1usize..7) {
        let k = k_raw.min(n);
        let mut r = rng(seed);
        let b = rand_psd(&mut r, n, 2);
        let score = |q: &[usize]| -> f64 { q.iter().map(|&i| { let f = dft(n, i); f.dotc(&(&b * &f)).re }).sum() };
        let best = subsets(n, k).iter().map(|q| score(q)).fold(f64::NEG_INFINITY, f64::max);
        let got = dft_select_fc(&b, k);
        prop_assert_eq!(got.len(), k);
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(score(&got) >= best - 1e-12 * best.abs());
    }
}

#[test]
fn dft_columns_match_definition() {
    for n in [1, 4, 7] {
        for q in 0..n {
            assert!((dft_column(n, q) - dft(n, q)).norm() < 1e-13);
        }
    }
}

#[test]
fn dft_selection_ties_go_to_low_indices() {
    assert_eq!(dft_select_fc(&CMat::identity(5, 5), 2), vec![0, 1]);
    let f = dft(4, 3);
    assert_eq!(dft_select_fc(&(&f * f.adjoint()), 1), vec![3]);
}

#[test]
fn random_init_is_deterministic_and_nested() {
    let s = with_rate_fraction(small_scenario(4, 4, 2, 2, 2, RxArchitecture::PartiallyConnected, default_prior(), 11), 0.5);
    let a = init_random_phase(&s, 20, 5).unwrap();
    let b = init_random_phase(&s, 20, 5).unwrap();
    assert_eq!(a, b);
    let model = SensingModel::new(&s).unwrap();
    let one = model.pcrb(&init_random_phase(&s, 1, 5).unwrap());
    let many = model.pcrb(&init_random_phase(&s, 100, 5).unwrap());
    if let Ok(one) = one {
        assert!(many.unwrap() <= one);
    }
    assert!(design_rate(&s, &a).unwrap() >= s.rate_target * (1.0 - 1e-9));
    assert!(init_random_phase(&s, 0, 5).is_err());
}

#[test]
fn zero_rate_target_matches_sensing_optimizer() {
    let s = small_scenario(4, 4, 2, 2, 2, RxArchitecture::PartiallyConnected, default_prior(), 12);
    assert_eq!(ao_p1(&s).unwrap().pcrb, ao_p0(&s).unwrap().pcrb);
}

#[test]
fn digital_only_design_is_one_shot_optimum() {
    // identity analog blocks: the loop reduces to a single digital solve
    let s = with_rate_fraction(small_scenario(4, 4, 2, 4, 4, RxArchitecture::FullyDigital, default_prior(), 13), 0.6);
    let model = SensingModel::new(&s).unwrap();
    let rx = RxCombiner::Identity(4);
    let a1 = model.a1(&rx).unwrap();
    let h = &s.channels()[0];
    let r = optimal_rbb_isac(&a1, &TxAnalog::Identity(4), h, s.power, s.rate_target, s.noise_comm).unwrap();
    let design = HybridDesign { v_rf: TxAnalog::Identity(4), r_bb: vec![r], rx };
    let want = model.pcrb(&design).unwrap();
    let rep = isac_ao_from(&s, &model, design, &AoOptions::default()).unwrap();
    assert!(rel(rep.pcrb, want) < 1e-12);
    assert!(rep.rate >= s.rate_target - 1e-9);
}

#[test]
fn hybrid_design_is_feasible_and_no_better_than_fully_digital() {
    for seed in 0..3 {
        let s = with_rate_fraction(small_scenario(4, 4, 2, 2, 2, RxArchitecture::PartiallyConnected, default_prior(), 20 + seed), 0.5);
        let opts = AoOptions { max_iters: 30, tol: 1e-6, ..AoOptions::default() };
        let rep = ao_p1_with(&s, &opts).unwrap();
        assert!(rep.rate >= s.rate_target - 1e-6, "seed {seed}");
        assert!(rep.design.power() <= s.power * (1.0 + 1e-9));
        assert!(rep.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.design.v_rf.matrix().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));

        let mut fd = s.clone();
        fd.arrays = isac_beamkit::ArrayConfig::new(4, 4, 2, 4, 4, RxArchitecture::FullyDigital).unwrap();
        let model = SensingModel::new(&fd).unwrap();
        let rx = RxCombiner::Identity(4);
        let a1 = model.a1(&rx).unwrap();
        let r = optimal_rbb_isac(&a1, &TxAnalog::Identity(4), &fd.channels()[0], fd.power, fd.rate_target, fd.noise_comm).unwrap();
        let bound = model.pcrb(&HybridDesign { v_rf: TxAnalog::Identity(4), r_bb: vec![r], rx }).unwrap();
        assert!(rep.pcrb >= bound * (1.0 - 1e-9), "seed {seed}: {} < {bound}", rep.pcrb);
    }
}

#[test]
fn analog_step_keeps_rate_and_improves_objective() {
    let s = with_rate_fraction(small_scenario(4, 4, 2, 2, 2, RxArchitecture::PartiallyConnected, default_prior(), 31), 0.4);
    let model = SensingModel::new(&s).unwrap();
    let start = init_random_phase(&s, 10, 3).unwrap();
    let v0 = start.v_rf.matrix();
    let a1 = model.a1(&start.rx).unwrap();
    let r = start.r_bb[0].clone();
    let out = fpp_sca_vrf(&s, &a1, &r, &v0, &FppScaOptions::default()).unwrap();
    let v = &out.v_rf;
    assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    // own evaluation: R scaled down only if V R V^H overshoots the budget
    let x = v * &r * v.adjoint();
    let scale = (s.power / tr_re(&x)).min(1.0);
    let obj = tr_re(&(&a1 * &x)) * scale;
    assert!(rel(out.objective, obj) < 1e-10);
    let obj0 = tr_re(&(&a1 * &v0 * &r * v0.adjoint()));
    assert!(out.objective >= obj0);
    let h = &s.channels()[0];
    let rate = log_det_rate(&(h * v), &(&r * C64::from(scale)), s.noise_comm);
    assert!(rate >= s.rate_target - 1e-6);
    assert_eq!(out.improved, out.objective > obj0);
    if !out.improved {
        assert_eq!(&out.v_rf, &v0);
    }
    let mut bad = v0.clone();
    bad[(0, 0)] *= C64::from(2.0);
    assert!(fpp_sca_vrf(&s, &a1, &r, &bad, &FppScaOptions::default()).is_err());
}
