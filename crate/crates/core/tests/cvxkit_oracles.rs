mod common;

use common::*;
use isac_beamkit::cvxkit::{
    fully_digital_capacity, rate_constrained_trace_max, rate_constrained_trace_max_multi, solve_convex_qcqp,
    top_generalized_eig, water_fill, ConvexQcqp, DigitalBranch, QuadConstraint, QuadForm, SolverStatus,
};
use isac_beamkit::linalg::{c, CMat, CVec, C64};
use isac_beamkit::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn herm_pow(m: &CMat, p: f64) -> CMat {
    let e = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        let v = e.eigenvectors.column(i);
        out += v * v.adjoint() * C64::from(e.eigenvalues[i].powf(p));
    }
    out
}

fn min_eig(m: &CMat) -> f64 {
    let h = (m + m.adjoint()) * C64::from(0.5);
    h.symmetric_eigen().eigenvalues.min()
}

fn max_eig(m: &CMat) -> f64 {
    let h = (m + m.adjoint()) * C64::from(0.5);
    h.symmetric_eigen().eigenvalues.max()
}

fn rayleigh(a: &CMat, b: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re / x.dotc(&(b * x)).re
}

fn rand_cvec<R: rand::Rng>(r: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cgauss(r))
}

/// Water level found by bisection on Σ (ν − 1/g)^+ = P.
fn water_bisect(gains: &[f64], power: f64) -> Vec<f64> {
    let alloc = |nu: f64| -> f64 { gains.iter().filter(|&&g| g > 0.0).map(|&g| (nu - 1.0 / g).max(0.0)).sum() };
    let (mut lo, mut hi) = (0.0, 1.0);
    while alloc(hi) < power {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid) < power { lo = mid } else { hi = mid }
    }
    let nu = 0.5 * (lo + hi);
    gains.iter().map(|&g| if g > 0.0 { (nu - 1.0 / g).max(0.0) } else { 0.0 }).collect()
}

#[test]
fn generalized_eig_diagonal_pencil() {
    let d = |v: &[f64]| CMat::from_diagonal(&CVec::from_iterator(v.len(), v.iter().map(|&x| c(x, 0.0))));
    let (l, x) = top_generalized_eig(&d(&[2.0, 9.0]), &d(&[1.0, 3.0])).unwrap();
    assert!((l - 3.0).abs() < 1e-12);
    assert!(x[0].norm() < 1e-12);
    assert!((x[1].norm() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn generalized_eig_beats_random_rayleigh_quotients() {
    let mut r = rng(21);
    let n = 5;
    let a = rand_psd(&mut r, n, 3) - CMat::identity(n, n) * C64::from(0.5);
    let b = rand_psd(&mut r, n, n) + CMat::identity(n, n) * C64::from(0.1);
    let (l, x) = top_generalized_eig(&a, &b).unwrap();
    assert!((x.dotc(&(&b * &x)).re - 1.0).abs() < 1e-10);
    let resid = &a * &x - &b * &x * C64::from(l);
    assert!(resid.norm() < 1e-9 * a.norm());
    assert!((rayleigh(&a, &b, &x) - l).abs() < 1e-10 * l.abs().max(1.0));
    let mut best = f64::NEG_INFINITY;
    for _ in 0..100_000 {
        best = best.max(rayleigh(&a, &b, &rand_cvec(&mut r, n)));
    }
    assert!(best <= l * (1.0 + 1e-12) + 1e-12);
    // independent value: largest eigenvalue of B^{-1/2} A B^{-1/2}
    let bi = herm_pow(&b, -0.5);
    assert!((max_eig(&(&bi * &a * &bi)) - l).abs() < 1e-9 * l.abs().max(1.0));
}

#[test]
fn qcqp_unit_disc() {
    let mut p = ConvexQcqp::new(DVector::from_vec(vec![-1.0, -1.0]));
    p.constraints.push(QuadConstraint {
        quad: QuadForm::Dense { start: 0, mat: DMatrix::identity(2, 2) },
        linear: vec![],
        offset: -1.0,
    });
    let rep = solve_convex_qcqp(&p, 1e-10);
    assert!(rep.converged());
    let s = 0.5f64.sqrt();
    assert!((rep.x[0] - s).abs() < 1e-6 && (rep.x[1] - s).abs() < 1e-6);
    assert!((rep.objective + 2f64.sqrt()).abs() < 1e-8);
    assert!(rep.max_violation <= 1e-9);

    // nonnegativity binds on the second coordinate
    let mut q = ConvexQcqp::new(DVector::from_vec(vec![-1.0, 1.0]));
    q.constraints = p.constraints.clone();
    q.nonneg = vec![1];
    let rep = solve_convex_qcqp(&q, 1e-10);
    assert!(rep.converged());
    assert!((rep.objective + 1.0).abs() < 1e-7);
    assert!(rep.x[1].abs() < 1e-6);
}

#[test]
fn qcqp_reports_infeasible() {
    let mut p = ConvexQcqp::new(DVector::from_vec(vec![1.0]));
    p.constraints.push(QuadConstraint { quad: QuadForm::Diagonal(vec![(0, 1.0)]), linear: vec![], offset: 1.0 });
    assert_eq!(solve_convex_qcqp(&p, 1e-9).status, SolverStatus::Infeasible);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn qcqp_ellipsoid_closed_form(seed in 0u64..1_000_000) {
        let mut r = rng(seed);
        let n = 4;
        let g = DMatrix::from_fn(n, n, |_, _| gauss(&mut r));
        let pm = &g * g.transpose() + DMatrix::identity(n, n) * 0.2;
        let cv = DVector::from_fn(n, |_, _| gauss(&mut r));
        let mut p = ConvexQcqp::new(cv.clone());
        p.constraints.push(QuadConstraint { quad: QuadForm::Dense { start: 0, mat: pm.clone() }, linear: vec![], offset: -1.0 });
        let rep = solve_convex_qcqp(&p, 1e-10);
        prop_assert!(rep.converged());
        let pinv = pm.clone().try_inverse().unwrap();
        let want = -(cv.dot(&(&pinv * &cv))).sqrt();
        prop_assert!((rep.objective - want).abs() <= 1e-7 * want.abs());
        // sampled feasible points never beat the solver
        let ch = pinv.cholesky().unwrap();
        for _ in 0..2000 {
            let z = DVector::from_fn(n, |_, _| gauss(&mut r));
            let u: f64 = rand::Rng::random(&mut r);
            let x = ch.l() * z.normalize() * u;
            prop_assert!(x.dot(&(&pm * &x)) <= 1.0 + 1e-12);
            prop_assert!(cv.dot(&x) >= rep.objective - 1e-9);
        }
    }

    #[test]
    fn water_fill_matches_bisection(gains in prop::collection::vec(0.0f64..10.0, 1..8), power in 0.01f64..20.0) {
        let p = water_fill(&gains, power);
        if gains.iter().all(|&g| g == 0.0) {
            prop_assert!(p.iter().all(|&v| v == 0.0));
        } else {
            let q = water_bisect(&gains, power);
            prop_assert!((p.iter().sum::<f64>() - power).abs() < 1e-10 * power.max(1.0));
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-8 * power.max(1.0));
            }
        }
    }
}

#[test]
fn water_fill_examples() {
    assert_eq!(water_fill(&[1.0, 1.0], 2.0), vec![1.0, 1.0]);
    // ν = 1.5: second channel stays off
    let p = water_fill(&[2.0, 0.5], 1.0);
    assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
    assert_eq!(water_fill(&[3.0], 0.0), vec![0.0]);
}

/// Problem data with a non-trivial Gram matrix.
struct Instance {
    a: CMat,
    g: CMat,
    h: Vec<CMat>,
    power: f64,
    noise: f64,
}

fn instance(seed: u64, n: usize, n_user: usize, k: usize) -> Instance {
    let mut r = rng(seed);
    let v = rand_phase_mat(&mut r, n + 2, n);
    Instance {
        a: rand_psd(&mut r, n, 2),
        g: v.adjoint() * &v,
        h: (0..k).map(|_| rand_cmat(&mut r, n_user, n)).collect(),
        power: 1.0,
        noise: 0.5,
    }
}

impl Instance {
    fn rate(&self, r: &[CMat]) -> f64 {
        self.h.iter().zip(r).map(|(h, rk)| log_det_rate(h, rk, self.noise)).sum::<f64>() / self.h.len() as f64
    }

    /// Capacity and a capacity-achieving allocation from water-filling the whitened eigenmodes.
    fn capacity_with_cov(&self) -> (f64, Vec<CMat>) {
        let gi = herm_pow(&self.g, -0.5);
        let mut gains = vec![];
        let mut modes = vec![];
        for (k, h) in self.h.iter().enumerate() {
            let m = &gi * h.adjoint() * h * &gi;
            let e = m.symmetric_eigen();
            for i in 0..e.eigenvalues.len() {
                gains.push(e.eigenvalues[i].max(0.0) / self.noise);
                modes.push((k, e.eigenvectors.column(i).into_owned()));
            }
        }
        let p = water_bisect(&gains, self.power);
        let n = self.a.nrows();
        let mut cov = vec![CMat::zeros(n, n); self.h.len()];
        for ((k, v), q) in modes.iter().zip(&p) {
            cov[*k] += &gi * v * v.adjoint() * &gi * C64::from(*q);
        }
        let cap = gains.iter().zip(&p).map(|(g, q)| (1.0 + g * q).ln()).sum::<f64>() / self.h.len() as f64;
        (cap, cov)
    }

    fn capacity(&self) -> f64 {
        self.capacity_with_cov().0
    }

    /// Random full-power allocation R_k = G^{-1/2} S_k G^{-1/2}.
    fn sample<R: rand::Rng>(&self, r: &mut R) -> Vec<CMat> {
        let n = self.a.nrows();
        let gi = herm_pow(&self.g, -0.5);
        let rank = r.random_range(1..=n);
        let s: Vec<CMat> = self.h.iter().map(|_| rand_psd(r, n, rank)).collect();
        let t: f64 = s.iter().map(tr_re).sum();
        s.iter().map(|sk| &gi * sk * &gi * C64::from(self.power / t)).collect()
    }

    /// Best objective over random feasible points, each a random mix of a
    /// full-power draw and the capacity-achieving allocation.
    fn sample_oracle(&self, target: f64, draws: usize, seed: u64) -> (f64, usize) {
        let mut r = rng(seed);
        let (_, cap_cov) = self.capacity_with_cov();
        let mut best = f64::NEG_INFINITY;
        let mut hits = 0;
        for _ in 0..draws {
            let t: f64 = rand::Rng::random(&mut r);
            let rs: Vec<CMat> = self
                .sample(&mut r)
                .iter()
                .zip(&cap_cov)
                .map(|(x, y)| x * C64::from(t) + y * C64::from(1.0 - t))
                .collect();
            if self.rate(&rs) >= target {
                hits += 1;
                best = best.max(rs.iter().map(|x| tr_re(&(&self.a * x))).sum());
            }
        }
        (best, hits)
    }
}

#[test]
fn zero_rate_target_is_rank_one_generalized_eigvec() {
    let inst = instance(31, 4, 2, 1);
    let sol = rate_constrained_trace_max(&inst.a, &inst.g, &inst.h[0], inst.power, 0.0, inst.noise).unwrap();
    assert_eq!(sol.branch, DigitalBranch::SensingOptimal);
    let (l, _) = top_generalized_eig(&inst.a, &inst.g).unwrap();
    assert!(rel(sol.objective, l * inst.power) < 1e-10);
    let e = sol.r_bb[0].clone().symmetric_eigen();
    let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    assert!(ev[1].abs() < 1e-10 * ev[0]);
    assert!(rel(tr_re(&(&inst.g * &sol.r_bb[0])), inst.power) < 1e-12);
}

#[test]
fn zero_sensing_term_gives_capacity() {
    let mut inst = instance(32, 3, 3, 1);
    inst.a = CMat::zeros(3, 3);
    let cap = inst.capacity();
    let sol = rate_constrained_trace_max(&inst.a, &inst.g, &inst.h[0], inst.power, 0.5 * cap, inst.noise).unwrap();
    assert_eq!(sol.branch, DigitalBranch::Capacity);
    assert!(rel(sol.rate, cap) < 1e-10);
    assert!(rel(fully_digital_capacity(&inst.h, inst.power, inst.noise), {
        let mut id = Instance { g: CMat::identity(3, 3), ..instance(32, 3, 3, 1) };
        id.a = CMat::zeros(3, 3);
        id.capacity()
    }) < 1e-10);
}

#[test]
fn infeasible_target_reports_capacity() {
    let inst = instance(33, 3, 2, 1);
    let cap = inst.capacity();
    let err = rate_constrained_trace_max(&inst.a, &inst.g, &inst.h[0], inst.power, cap * 1.01, inst.noise).unwrap_err();
    match err {
        Error::Infeasible { max_rate, .. } => assert!(rel(max_rate, cap) < 1e-10),
        e => panic!("{e}"),
    }
}

/// KKT of max Σ tr(A R_k) + β((1/K) Σ log|I + H R H^H/σ²| − R̄) − μ(Σ tr(G R_k) − P).
fn check_kkt(inst: &Instance, target: f64, seed: u64) {
    let sol = rate_constrained_trace_max_multi(&inst.a, &inst.g, &inst.h, inst.power, target, inst.noise).unwrap();
    assert_eq!(sol.branch, DigitalBranch::Dual, "seed {seed}");
    assert!(sol.rate >= target - 1e-12 && sol.rate <= target + 1e-9, "rate {} target {target}", sol.rate);
    assert!(rel(sol.power, inst.power) < 1e-9);
    assert!(sol.beta > 0.0 && sol.mu > 0.0);
    let kf = inst.h.len() as f64;
    let scale = inst.a.norm() + sol.mu * inst.g.norm();
    for (h, r) in inst.h.iter().zip(&sol.r_bb) {
        assert!(min_eig(r) >= -1e-10 * r.norm());
        let m = h.nrows();
        let inner = (CMat::identity(m, m) * C64::from(inst.noise) + h * r * h.adjoint()).try_inverse().unwrap();
        let z = &inst.a - &inst.g * C64::from(sol.mu) + h.adjoint() * inner * h * C64::from(sol.beta / kf);
        assert!(max_eig(&z) <= 1e-6 * scale, "seed {seed}: λmax(Z) = {}", max_eig(&z));
        assert!((&z * r).norm() <= 1e-6 * scale * r.norm().max(1e-12), "seed {seed}");
    }
    let (best, hits) = inst.sample_oracle(target, 20_000, seed);
    assert!(hits > 0, "seed {seed}: no feasible samples");
    assert!(best <= sol.objective * (1.0 + 1e-9), "seed {seed}: sample {best} > {}", sol.objective);
}

#[test]
fn dual_branch_satisfies_kkt_narrowband() {
    for seed in 40..46 {
        let inst = instance(seed, 4, 2, 1);
        let cap = inst.capacity();
        let s0 = rate_constrained_trace_max(&inst.a, &inst.g, &inst.h[0], inst.power, 0.0, inst.noise).unwrap();
        // halfway between the sensing-optimal rate and capacity
        check_kkt(&inst, 0.5 * (s0.rate + cap), seed);
    }
}

#[test]
fn dual_branch_satisfies_kkt_multicarrier() {
    for seed in 50..54 {
        let inst = instance(seed, 3, 2, 3);
        let cap = inst.capacity();
        check_kkt(&inst, 0.97 * cap, seed);
    }
}

#[test]
fn objective_is_monotone_in_rate_target() {
    let inst = instance(61, 4, 2, 1);
    let cap = inst.capacity();
    let mut prev = f64::INFINITY;
    for i in 0..=10 {
        let t = cap * i as f64 / 10.0;
        let sol = rate_constrained_trace_max(&inst.a, &inst.g, &inst.h[0], inst.power, t, inst.noise).unwrap();
        assert!(sol.rate >= t - 1e-9);
        assert!(sol.objective <= prev * (1.0 + 1e-9));
        prev = sol.objective;
    }
}
