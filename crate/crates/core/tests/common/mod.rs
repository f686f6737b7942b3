//! Independent helpers for the oracle tests. Nothing here calls into the
//! optimizers; matrices are built from scratch with a local RNG.
#![allow(dead_code)]

use isac_beamkit::linalg::{c, CMat, CVec, C64};
use isac_beamkit::model::{ChannelModel, CommChannel};
use isac_beamkit::{ArrayConfig, GmmAnglePrior, ReflectionPrior, RxArchitecture, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gauss<R: Rng>(r: &mut R) -> f64 {
    // Box-Muller, kept local so the oracle shares no sampler with the crate
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn cgauss<R: Rng>(r: &mut R) -> C64 {
    c(gauss(r), gauss(r)) / 2f64.sqrt()
}

pub fn rand_cmat<R: Rng>(r: &mut R, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| cgauss(r))
}

pub fn rand_psd<R: Rng>(r: &mut R, n: usize, rank: usize) -> CMat {
    let g = rand_cmat(r, n, rank);
    &g * g.adjoint()
}

pub fn rand_phases<R: Rng>(r: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| C64::from_polar(1.0, r.random_range(-PI..PI)))
}

pub fn rand_phase_mat<R: Rng>(r: &mut R, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| C64::from_polar(1.0, r.random_range(-PI..PI)))
}

/// Steering vector written out from its definition.
pub fn steer(n: usize, theta: f64) -> CVec {
    CVec::from_fn(n, |i, _| {
        let m = i as f64 - (n as f64 - 1.0) / 2.0;
        C64::from_polar(1.0, PI * m * theta.sin())
    })
}

pub fn steer_d(n: usize, theta: f64) -> CVec {
    CVec::from_fn(n, |i, _| {
        let m = i as f64 - (n as f64 - 1.0) / 2.0;
        c(0.0, PI * m * theta.cos()) * C64::from_polar(1.0, PI * m * theta.sin())
    })
}

pub fn tr_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

pub fn log_det_rate(h: &CMat, r: &CMat, noise: f64) -> f64 {
    let n = h.nrows();
    let m = CMat::identity(n, n) + h * r * h.adjoint() / C64::from(noise);
    // log det via Cholesky of a Hermitian PD matrix
    let ch = m.cholesky().expect("PD");
    ch.l().diagonal().iter().map(|z| 2.0 * z.re.ln()).sum()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Gaussian-mixture density evaluated from its definition.
pub fn gmm_pdf(prior: &GmmAnglePrior, t: f64) -> f64 {
    prior
        .components()
        .iter()
        .map(|g| g.weight * (-(t - g.mean).powi(2) / (2.0 * g.variance)).exp() / (2.0 * PI * g.variance).sqrt())
        .sum()
}

/// Small scenario with an explicit narrowband channel and no channel model.
pub fn small_scenario(
    n_tx: usize,
    n_rx: usize,
    n_user: usize,
    n_rf_tx: usize,
    n_rf_rx: usize,
    arch: RxArchitecture,
    prior: GmmAnglePrior,
    seed: u64,
) -> Scenario {
    let arrays = ArrayConfig::new(n_tx, n_rx, n_user, n_rf_tx, n_rf_rx, arch).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let h = rand_cmat(&mut r, n_user, n_tx) * C64::from(1e-4);
    Scenario {
        arrays,
        angle_prior: prior,
        reflection: ReflectionPrior { gamma: 2e-12 },
        channel: CommChannel::Narrowband(h),
        channel_model: None,
        power: 1.0,
        noise_comm: 1e-12,
        noise_sense: 1e-12,
        symbols: 30,
        rate_target: 0.0,
        subcarriers: 1,
        quadrature_points: 512,
        seed,
    }
}

pub fn rician(user_angle: f64) -> ChannelModel {
    ChannelModel::Rician {
        user_angle,
        user_distance: 400.0,
        rician_factor: 10f64.powf(-0.8),
        ref_gain: 1e-3,
        path_exp: 3.5,
    }
}

/// Brute-force k-subsets of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}
