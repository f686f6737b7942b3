mod common;

use common::*;
use isac_beamkit::linalg::{c, CMat, C64};
use isac_beamkit::model::{
    default_prior, default_scenario, gen_rician_channel, gen_wideband_channel, gen_wideband_taps,
    steering_derivative, steering_vector, taps_to_subcarriers, CommChannel,
};
use isac_beamkit::quadrature::QuadratureGrid;
use isac_beamkit::{ArrayConfig, Error, GmmAnglePrior, GmmComponent, ReflectionPrior, RxArchitecture};
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

#[test]
fn steering_small_cases() {
    let v = steering_vector(2, 0.0).unwrap();
    assert!(v.iter().all(|z| close(*z, c(1.0, 0.0), 1e-15)));
    let v = steering_vector(3, 0.0).unwrap();
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|z| close(*z, c(1.0, 0.0), 1e-15)));
    // m = ±1/2, sin(π/6) = 1/2: phases ∓π/4
    let v = steering_vector(2, FRAC_PI_6).unwrap();
    assert!(close(v[0], C64::from_polar(1.0, -FRAC_PI_4), 1e-15));
    assert!(close(v[1], C64::from_polar(1.0, FRAC_PI_4), 1e-15));
}

#[test]
fn steering_rejects_out_of_range_angles() {
    assert!(matches!(steering_vector(4, FRAC_PI_2), Err(Error::Domain { .. })));
    assert!(matches!(steering_vector(4, -2.0), Err(Error::Domain { .. })));
    assert!(steering_derivative(4, 1.6).is_err());
    assert!(steering_vector(4, -FRAC_PI_2).is_ok());
}

#[test]
fn steering_derivative_small_cases() {
    for t in [-1.0, 0.0, 0.7] {
        let d = steering_derivative(1, t).unwrap();
        assert_eq!(d[0], c(0.0, 0.0));
    }
    let d = steering_derivative(2, 0.0).unwrap();
    assert!(close(d[0], c(0.0, -PI / 2.0), 1e-15));
    assert!(close(d[1], c(0.0, PI / 2.0), 1e-15));
}

#[test]
fn steering_derivative_matches_central_difference() {
    let h = 1e-6;
    let fd = (steering_vector(4, 0.3 + h).unwrap() - steering_vector(4, 0.3 - h).unwrap()) / C64::from(2.0 * h);
    let d = steering_derivative(4, 0.3).unwrap();
    assert!((&fd - &d).norm() <= 1e-6 * d.norm());
}

proptest! {
    #[test]
    fn steering_unit_modulus_and_conjugate_symmetric(n in 1usize..20, t in -1.5707f64..1.5707) {
        let v = steering_vector(n, t).unwrap();
        let oracle = steer(n, t);
        for i in 0..n {
            prop_assert!((v[i].norm() - 1.0).abs() < 1e-14);
            prop_assert!((v[i] - v[n - 1 - i].conj()).norm() < 1e-13);
            prop_assert!((v[i] - oracle[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn steering_derivative_fd(n in 1usize..16, t in -1.5f64..1.5) {
        let h = 1e-6;
        let fd = (steering_vector(n, t + h).unwrap() - steering_vector(n, t - h).unwrap()) / C64::from(2.0 * h);
        let d = steering_derivative(n, t).unwrap();
        prop_assert!((&fd - &d).norm() <= 1e-6 * d.norm().max(1e-3));
        prop_assert!((&d - steer_d(n, t)).norm() < 1e-12);
    }

    #[test]
    fn wideband_parseval(seed in 0u64..10_000, taps in 1usize..5, k in 4usize..9) {
        let arrays = ArrayConfig::new(3, 2, 2, 1, 1, RxArchitecture::PartiallyConnected).unwrap();
        let t = gen_wideband_taps(&arrays, taps, k, 1.0, seed).unwrap();
        let hk = taps_to_subcarriers(&t, k);
        let lhs: f64 = hk.iter().map(|h| h.norm_squared()).sum();
        let rhs: f64 = k as f64 * t.iter().map(|h| h.norm_squared()).sum::<f64>();
        prop_assert!(rel(lhs, rhs) < 1e-9);
    }
}

#[test]
fn array_invariants() {
    use RxArchitecture::*;
    assert!(ArrayConfig::new(8, 12, 6, 3, 6, PartiallyConnected).is_ok());
    let e = ArrayConfig::new(8, 12, 6, 3, 5, PartiallyConnected).unwrap_err();
    assert!(e.to_string().contains("divisible"), "{e}");
    assert!(ArrayConfig::new(8, 12, 6, 9, 6, PartiallyConnected).is_err());
    assert!(ArrayConfig::new(8, 12, 6, 3, 13, FullyConnected).is_err());
    assert!(ArrayConfig::new(8, 12, 6, 3, 5, FullyConnected).is_ok());
    assert!(ArrayConfig::new(8, 12, 6, 3, 6, FullyDigital).is_err());
    assert!(ArrayConfig::new(0, 12, 6, 1, 6, PartiallyConnected).is_err());
}

#[test]
fn prior_invariants() {
    let g = |w, m, v| GmmComponent { weight: w, mean: m, variance: v };
    assert!(GmmAnglePrior::new(vec![g(0.5, 0.0, 0.01), g(0.5, 0.3, 0.01)]).is_ok());
    assert!(GmmAnglePrior::new(vec![g(0.5, 0.0, 0.01), g(0.4, 0.3, 0.01)]).is_err());
    assert!(GmmAnglePrior::new(vec![g(1.0, 0.0, 0.0)]).is_err());
    assert!(GmmAnglePrior::new(vec![g(1.0, FRAC_PI_2, 0.01)]).is_err());
    assert!(GmmAnglePrior::new(vec![]).is_err());
    assert!(ReflectionPrior::new(-1.0).is_err());
    assert!(ReflectionPrior::new(0.0).is_ok());
}

#[test]
fn prior_density_mass_inside_domain() {
    // trapezoid on a fine uniform grid against the density written out directly
    let prior = default_prior();
    let n = 400_000;
    let h = PI / n as f64;
    let mut mass = 0.0;
    for i in 0..=n {
        let t = -FRAC_PI_2 + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let p = prior.density(t);
        assert!(rel(p, gmm_pdf(&prior, t)) < 1e-12 || p < 1e-280);
        mass += w * p * h;
    }
    assert!(mass >= 1.0 - 1e-6 && mass <= 1.0 + 1e-9, "mass {mass}");
}

#[test]
fn prior_score_matches_log_density_difference() {
    let prior = default_prior();
    for t in [-1.2, -0.74, -0.6, 0.0, 0.9, 1.3] {
        let h = 1e-6;
        let fd = (prior.log_density(t + h) - prior.log_density(t - h)) / (2.0 * h);
        assert!((prior.score(t) - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{t}");
    }
}

#[test]
fn prior_samples_match_mixture_moments() {
    let prior = default_prior();
    let mean: f64 = prior.components().iter().map(|g| g.weight * g.mean).sum();
    let second: f64 = prior.components().iter().map(|g| g.weight * (g.variance + g.mean * g.mean)).sum();
    let var = second - mean * mean;
    let mut r = rng(7);
    let n = 200_000;
    let s: Vec<f64> = (0..n).map(|_| prior.sample(&mut r)).collect();
    let m = s.iter().sum::<f64>() / n as f64;
    assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt(), "{m} vs {mean}");
}

#[test]
fn rician_los_limit() {
    let arrays = ArrayConfig::new(8, 12, 6, 3, 6, RxArchitecture::PartiallyConnected).unwrap();
    let (theta, r_u, b0, pe) = (0.36, 400.0, 1e-3, 3.5);
    let h = gen_rician_channel(&arrays, theta, r_u, 1e12, b0, pe, 3).unwrap();
    let beta: f64 = b0 / f64::powf(r_u, pe);
    let los = steer(6, theta) * steer(8, theta).adjoint() * C64::from(beta.sqrt());
    for (x, y) in h.iter().zip(los.iter()) {
        assert!((x - y).norm() <= 1e-5 * y.norm());
    }
}

#[test]
fn rician_is_deterministic_per_seed() {
    let arrays = ArrayConfig::new(8, 12, 6, 3, 6, RxArchitecture::PartiallyConnected).unwrap();
    let a = gen_rician_channel(&arrays, 0.36, 400.0, 0.1585, 1e-3, 3.5, 11).unwrap();
    let b = gen_rician_channel(&arrays, 0.36, 400.0, 0.1585, 1e-3, 3.5, 11).unwrap();
    let c2 = gen_rician_channel(&arrays, 0.36, 400.0, 0.1585, 1e-3, 3.5, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c2);
}

#[test]
fn rician_average_power() {
    let arrays = ArrayConfig::new(8, 12, 6, 3, 6, RxArchitecture::PartiallyConnected).unwrap();
    let (b0, r_u, pe) = (1e-3, 400.0, 3.5);
    let beta: f64 = b0 / f64::powf(r_u, pe);
    let n = 10_000;
    let mut acc = 0.0;
    for s in 0..n {
        let h = gen_rician_channel(&arrays, 0.36, r_u, 0.1585, b0, pe, s).unwrap();
        acc += h.norm_squared() / 48.0;
    }
    let avg = acc / n as f64;
    assert!(rel(avg, beta) < 0.1, "{avg} vs {beta}");
}

#[test]
fn wideband_small_cases() {
    let arrays = ArrayConfig::new(3, 2, 2, 1, 1, RxArchitecture::PartiallyConnected).unwrap();
    let hk = gen_wideband_channel(&arrays, 1, 6, 1.0, 5).unwrap();
    assert_eq!(hk.len(), 6);
    assert!(hk.iter().all(|h| h == &hk[0]));

    let mut r = rng(1);
    let a = rand_cmat(&mut r, 2, 3);
    let b = rand_cmat(&mut r, 2, 3);
    let hk = taps_to_subcarriers(&[a.clone(), b.clone()], 2);
    assert!((&hk[0] - (&a + &b)).norm() < 1e-14);
    assert!((&hk[1] - (&a - &b)).norm() < 1e-14);

    assert!(gen_wideband_channel(&arrays, 7, 6, 1.0, 5).is_err());
    assert!(gen_wideband_channel(&arrays, 0, 6, 1.0, 5).is_err());
    let ch = CommChannel::wideband(vec![a, b], 4).unwrap();
    assert_eq!(ch.per_subcarrier().len(), 4);
}

#[test]
fn default_scenario_is_valid_and_reseedable() {
    let s = default_scenario(3);
    s.validate().unwrap();
    assert_eq!(s.power, 1.0);
    assert!(rel(s.noise_sense, 1e-12) < 1e-15);
    let t = s.reseeded(4).unwrap();
    assert_ne!(s.channel, t.channel);
    assert_eq!(t.reseeded(3).unwrap(), s);
    let mut bad = s.clone();
    bad.noise_comm = 0.0;
    assert!(bad.validate().is_err());
    let mut bad = s;
    bad.channel = CommChannel::Narrowband(CMat::zeros(2, 2));
    assert!(bad.validate().is_err());
}

#[test]
fn quadrature_grid_for_prior_is_ordered() {
    let g = QuadratureGrid::for_prior(&default_prior(), 2048).unwrap();
    assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
    assert!(g.weights.iter().all(|&w| w > 0.0));
    let total: f64 = g.weights.iter().sum();
    assert!((total - PI).abs() < 1e-12);
}
