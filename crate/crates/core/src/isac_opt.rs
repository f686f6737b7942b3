//! Narrowband ISAC design under a MIMO rate constraint.
//!
//! The transmit analog block uses the WMMSE rewrite of the rate and a
//! feasible-point-pursuit SCA loop; the digital block is solved by duality; the
//! receive block reuses the sensing-only updates.

use std::time::Instant;

use nalgebra::DVector;

use crate::cvxkit::{
    average_rate, rate_constrained_trace_max_multi, solve_convex_qcqp, ConvexQcqp, DigitalSolution,
    QuadConstraint, QuadForm,
};
use crate::design::{HybridDesign, RxCombiner, TxAnalog};
use crate::error::{Error, Result};
use crate::linalg::{
    hermitize, inv_hpd, kron, lift_hermitian, log_det_hpd, psd_factor, trace_prod_re, trace_re,
    unit_modulus, vec_of, CMat, CVec, C64,
};
use crate::model::{stream_rng, streams, Scenario};
use crate::pcrb::SensingModel;
use crate::sensing_opt::{ao_p0_with, randomize_phases, update_receiver, AoOptions, AoReport};

/// Rank threshold (relative to the trace) defining the stream count of R_BB.
pub const STREAM_RANK_TOL: f64 = 1e-9;

/// WMMSE auxiliaries at their closed-form optimum.
#[derive(Debug, Clone)]
pub struct WmmseAux {
    /// Decoder (N_U × N_S).
    pub q: CMat,
    /// MSE weight (N_S × N_S).
    pub u: CMat,
    /// MSE matrix at the optimal decoder.
    pub e: CMat,
    /// Surrogate rate ξ (nats/s/Hz).
    pub xi: f64,
}

pub fn wmmse_update(h: &CMat, v_rf: &CMat, v_bb: &CMat, noise: f64) -> Result<WmmseAux> {
    if !(noise > 0.0) {
        return Err(Error::Invalid("noise power must be positive".into()));
    }
    let hv = h * v_rf * v_bb;
    let nu = h.nrows();
    let ns = v_bb.ncols();
    let jm = CMat::identity(nu, nu) * C64::from(noise) + &hv * hv.adjoint();
    let q = inv_hpd(&jm)? * &hv;
    let e = hermitize(&(CMat::identity(ns, ns) - hv.adjoint() * &q));
    let u = inv_hpd(&e)?;
    let mut aux = WmmseAux { q, u, e, xi: 0.0 };
    aux.xi = wmmse_objective(&aux, h, v_rf, v_bb, noise)?;
    Ok(aux)
}

/// ξ(Q, U, V) = log|U| − tr(U E(Q, V)) + N_S for arbitrary V; never exceeds the rate.
pub fn wmmse_objective(aux: &WmmseAux, h: &CMat, v_rf: &CMat, v_bb: &CMat, noise: f64) -> Result<f64> {
    let ns = v_bb.ncols();
    let a = CMat::identity(ns, ns) - aux.q.adjoint() * h * v_rf * v_bb;
    let e = &a * a.adjoint() + aux.q.adjoint() * &aux.q * C64::from(noise);
    Ok(log_det_hpd(&aux.u)? - trace_prod_re(&aux.u, &e) + ns as f64)
}

/// Average rate of a design on the scenario channel.
pub fn design_rate(scenario: &Scenario, design: &HybridDesign) -> Result<f64> {
    let v = design.v_rf.matrix();
    let hs: Vec<CMat> = scenario.channels().iter().map(|h| h * &v).collect();
    average_rate(&hs, &design.r_bb, scenario.noise_comm)
}

/// Inner-loop settings of the feasible-point-pursuit SCA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FppScaOptions {
    /// Slack penalty relative to the largest sensing-gradient entry.
    pub epsilon: f64,
    pub max_iters: usize,
    pub slack_tol: f64,
    pub obj_tol: f64,
    pub qcqp_tol: f64,
}

impl Default for FppScaOptions {
    fn default() -> Self {
        FppScaOptions {
            epsilon: 0.1,
            max_iters: 30,
            slack_tol: 1e-7,
            obj_tol: 1e-8,
            qcqp_tol: 1e-9,
        }
    }
}

/// Snapshot of one SCA iteration.
#[derive(Debug, Clone)]
pub struct FppScaState {
    pub v_bar: CVec,
    /// Absolute penalty used in this iteration.
    pub epsilon: f64,
    pub slack_r: f64,
    pub slack_p: f64,
    pub slack_w: f64,
    /// Sensing objective Σ_k tr(Ã V R_k V^H) at the unprojected iterate.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct FppScaOutcome {
    /// Best unit-modulus iterate (the start if nothing better was found).
    pub v_rf: CMat,
    pub objective: f64,
    pub history: Vec<FppScaState>,
    pub slacks_vanished: bool,
    pub improved: bool,
}

struct Surrogate {
    upsilon3: CMat,
    c: CVec,
    eta: f64,
}

/// Per-subcarrier WMMSE quantities linearized at V̄, averaged over subcarriers.
fn rate_surrogate(v_bar: &CMat, r: &[CMat], h: &[CMat], noise: f64) -> Result<Surrogate> {
    let (nt, nrf) = v_bar.shape();
    let n = nt * nrf;
    let kf = h.len() as f64;
    let mut up3 = CMat::zeros(n, n);
    let mut c = CVec::zeros(n);
    let mut eta = 0.0;
    for (hk, rk) in h.iter().zip(r) {
        let f = psd_factor(rk, STREAM_RANK_TOL);
        if f.ncols() == 0 {
            continue;
        }
        let aux = wmmse_update(hk, v_bar, &f, noise)?;
        let qh_h = aux.q.adjoint() * hk;
        let d1 = hermitize(&(qh_h.adjoint() * &aux.u * &qh_h));
        let d2 = &f * &aux.u * &qh_h;
        up3 += kron(&rk.transpose(), &d1);
        c += vec_of(&d2.transpose());
        eta += log_det_hpd(&aux.u)? - trace_re(&aux.u)
            - noise * trace_prod_re(&aux.u, &(aux.q.adjoint() * &aux.q))
            + f.ncols() as f64;
    }
    Ok(Surrogate {
        upsilon3: hermitize(&(up3 / C64::from(kf))),
        c: c / C64::from(kf),
        eta: eta / kf,
    })
}

struct Evaluated {
    objective: f64,
    rate: f64,
}

/// Sensing objective and rate of an analog matrix, with R scaled down if it overshoots P.
fn evaluate(v: &CMat, a: &CMat, r: &[CMat], h: &[CMat], power: f64, noise: f64) -> Evaluated {
    let xs: Vec<CMat> = r.iter().map(|rk| v * rk * v.adjoint()).collect();
    let used: f64 = xs.iter().map(trace_re).sum();
    let scale = if used > power && used > 0.0 { power / used } else { 1.0 };
    let objective = xs.iter().map(|x| trace_prod_re(a, x)).sum::<f64>() * scale;
    let hv: Vec<CMat> = h.iter().map(|hk| hk * v).collect();
    let rs: Vec<CMat> = r.iter().map(|rk| rk * C64::from(scale)).collect();
    let rate = average_rate(&hv, &rs, noise).unwrap_or(f64::NEG_INFINITY);
    Evaluated { objective, rate }
}

/// Feasible-point-pursuit SCA over the transmit analog matrix, shared by the
/// narrowband (one channel) and OFDM (K channels) problems.
///
/// The slack penalty is `epsilon · max_m |g_m|` with g the sensing gradient at the
/// linearization point, so the step it allows is scale-free. It is raised tenfold
/// whenever the total slack fails to halve over two iterations.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fpp_sca_core(
    a_tilde: &CMat,
    r: &[CMat],
    h: &[CMat],
    noise: f64,
    power: f64,
    rate_target: f64,
    v_init: &CMat,
    opts: &FppScaOptions,
) -> Result<FppScaOutcome> {
    let (nt, nrf) = v_init.shape();
    let n = nt * nrf;
    let mut r_sum = CMat::zeros(nrf, nrf);
    for rk in r {
        r_sum += rk;
    }
    let up2 = kron(&r_sum.transpose(), &CMat::identity(nt, nt));
    let up2_l = lift_hermitian(&hermitize(&up2));
    let start = evaluate(v_init, a_tilde, r, h, power, noise);
    let mut best = (v_init.clone(), start.objective);
    let feasible_rate = rate_target - 1e-6;
    let with_rate = rate_target > 0.0;
    // layout: [Re v; Im v; p; w]
    let dim = 4 * n;
    let mut v_bar = vec_of(v_init);
    let mut eps_rel = opts.epsilon;
    let mut last_raise = 0usize;
    let mut history: Vec<FppScaState> = Vec::new();
    let mut prev_obj = start.objective;
    let mut slacks_vanished = false;
    for it in 0..opts.max_iters {
        let vb_mat = CMat::from_column_slice(nt, nrf, v_bar.as_slice());
        // gradient of the sensing objective: vec(Ã V̄ Σ R_k)
        let g = vec_of(&(a_tilde * &vb_mat * &r_sum));
        let gscale = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(gscale > 0.0) {
            break;
        }
        let eps = eps_rel * gscale;
        let mut obj = DVector::zeros(dim);
        for i in 0..n {
            obj[i] = -2.0 * g[i].re;
            obj[n + i] = -2.0 * g[i].im;
            obj[2 * n + i] = eps;
            obj[3 * n + i] = eps;
        }
        let mut prob = ConvexQcqp::new(obj);
        prob.head_dim = 2 * n;
        prob.constraints.push(QuadConstraint {
            quad: QuadForm::Dense { start: 0, mat: up2_l.clone() },
            linear: vec![],
            offset: -power,
        });
        let mut x0 = DVector::zeros(dim);
        if with_rate {
            let s = rate_surrogate(&vb_mat, r, h, noise)?;
            let mut lin = Vec::with_capacity(2 * n);
            for i in 0..n {
                lin.push((i, -2.0 * s.c[i].re));
                lin.push((n + i, 2.0 * s.c[i].im));
            }
            prob.constraints.push(QuadConstraint {
                quad: QuadForm::Dense { start: 0, mat: lift_hermitian(&s.upsilon3) },
                linear: lin,
                offset: rate_target - s.eta,
            });
        }
        for m in 0..n {
            let z = v_bar[m];
            x0[m] = z.re;
            x0[n + m] = z.im;
            let mag2 = z.norm_sqr();
            x0[2 * n + m] = (mag2 - 1.0).max(0.0) + 1.0;
            x0[3 * n + m] = (1.0 - mag2).max(0.0) + 1.0;
            prob.constraints.push(QuadConstraint {
                quad: QuadForm::Diagonal(vec![(m, 1.0), (n + m, 1.0)]),
                linear: vec![(2 * n + m, -1.0)],
                offset: -1.0,
            });
            prob.constraints.push(QuadConstraint {
                quad: QuadForm::Zero,
                linear: vec![(m, -2.0 * z.re), (n + m, -2.0 * z.im), (3 * n + m, -1.0)],
                offset: 1.0 + mag2,
            });
            prob.nonneg.push(2 * n + m);
            prob.nonneg.push(3 * n + m);
        }
        prob.start = Some(x0);
        let rep = solve_convex_qcqp(&prob, opts.qcqp_tol);
        if !rep.converged() {
            break;
        }
        let x = rep.x;
        let v = CVec::from_fn(n, |i, _| C64::new(x[i], x[n + i]));
        let slack_p: f64 = (0..n).map(|m| x[2 * n + m].max(0.0)).sum();
        let slack_w: f64 = (0..n).map(|m| x[3 * n + m].max(0.0)).sum();
        // the rate constraint carries no slack: V̄ always satisfies its own surrogate
        let slack_r = 0.0;
        let v_mat = CMat::from_column_slice(nt, nrf, v.as_slice());
        let raw_obj: f64 = r.iter().map(|rk| trace_prod_re(a_tilde, &(&v_mat * rk * v_mat.adjoint()))).sum();
        history.push(FppScaState { v_bar: v.clone(), epsilon: eps, slack_r, slack_p, slack_w, objective: raw_obj });
        let z = CMat::from_column_slice(nt, nrf, unit_modulus(&v).as_slice());
        let ev = evaluate(&z, a_tilde, r, h, power, noise);
        if ev.rate >= feasible_rate && ev.objective > best.1 {
            best = (z, ev.objective);
        }
        let slack = slack_p + slack_w + slack_r;
        let change = (raw_obj - prev_obj).abs() / raw_obj.abs().max(1.0);
        prev_obj = raw_obj;
        v_bar = v;
        if slack < opts.slack_tol {
            slacks_vanished = true;
            if change < opts.obj_tol {
                break;
            }
        } else {
            slacks_vanished = false;
            if it >= last_raise + 2 {
                let old = history[it - 2].slack_p + history[it - 2].slack_w + history[it - 2].slack_r;
                if slack > 0.5 * old {
                    eps_rel *= 10.0;
                    last_raise = it;
                }
            }
        }
    }
    let improved = best.1 > start.objective;
    Ok(FppScaOutcome {
        v_rf: best.0,
        objective: best.1,
        history,
        slacks_vanished,
        improved,
    })
}

/// Cyclic closed-form phase updates of V with the digital part fixed; a move is
/// kept only if the rate target still holds and the sensing objective rises.
/// Returns the refined matrix when it improves on `v`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn guarded_phase_passes(
    a_tilde: &CMat,
    r: &[CMat],
    h: &[CMat],
    noise: f64,
    power: f64,
    rate_target: f64,
    v: &CMat,
    max_passes: usize,
) -> Option<CMat> {
    let (nt, nrf) = v.shape();
    let n = nt * nrf;
    let mut r_sum = CMat::zeros(nrf, nrf);
    for rk in r {
        r_sum += rk;
    }
    // tr(Ã V R V^H) = vec(V)^H (R^T ⊗ Ã) vec(V)
    let m = kron(&r_sum.transpose(), a_tilde);
    let scale = crate::linalg::max_abs(&m);
    let mut x = vec_of(v);
    let start = evaluate(v, a_tilde, r, h, power, noise).objective;
    let mut cur = start;
    for _ in 0..max_passes {
        let pass_start = cur;
        for k in 0..n {
            let mut s = C64::from(0.0);
            for i in 0..n {
                if i != k {
                    s += m[(k, i)] * x[i];
                }
            }
            if s.norm() <= 1e-15 * scale {
                continue;
            }
            let mut y = x.clone();
            y[k] = s / s.norm();
            let ev = evaluate(&CMat::from_column_slice(nt, nrf, y.as_slice()), a_tilde, r, h, power, noise);
            if ev.rate >= rate_target - 1e-6 && ev.objective > cur {
                x = y;
                cur = ev.objective;
            }
        }
        if cur <= pass_start * (1.0 + 1e-12) {
            break;
        }
    }
    (cur > start).then(|| CMat::from_column_slice(nt, nrf, x.as_slice()))
}

/// Narrowband transmit-analog update.
pub fn fpp_sca_vrf(
    scenario: &Scenario,
    a_tilde: &CMat,
    r_bb: &CMat,
    v_init: &CMat,
    opts: &FppScaOptions,
) -> Result<FppScaOutcome> {
    if scenario.subcarriers != 1 {
        return Err(Error::Invalid("narrowband update needs a single subcarrier".into()));
    }
    if v_init.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
        return Err(Error::Invalid("initial analog matrix must be unit-modulus".into()));
    }
    fpp_sca_core(
        a_tilde,
        std::slice::from_ref(r_bb),
        scenario.channels(),
        scenario.noise_comm,
        scenario.power,
        scenario.rate_target,
        v_init,
        opts,
    )
}

/// Digital covariance(s) for a fixed analog precoder.
pub fn optimal_rbb_multi(
    a_tilde: &CMat,
    v_rf: &TxAnalog,
    h: &[CMat],
    power: f64,
    rate_target: f64,
    noise: f64,
) -> Result<DigitalSolution> {
    let v = v_rf.matrix();
    let ae = hermitize(&(v.adjoint() * a_tilde * &v));
    let g = hermitize(&(v.adjoint() * &v));
    let he: Vec<CMat> = h.iter().map(|hk| hk * &v).collect();
    rate_constrained_trace_max_multi(&ae, &g, &he, power, rate_target, noise)
}

pub fn optimal_rbb_isac(
    a_tilde: &CMat,
    v_rf: &TxAnalog,
    h: &CMat,
    power: f64,
    rate_target: f64,
    noise: f64,
) -> Result<CMat> {
    let sol = optimal_rbb_multi(a_tilde, v_rf, std::slice::from_ref(h), power, rate_target, noise)?;
    Ok(sol.r_bb.into_iter().next().unwrap())
}

/// Indices (0-based) of the `n_rf_rx` largest diagonal entries of F^H B̃ F,
/// ties resolved towards the lowest index.
pub fn dft_select_fc(b_tilde: &CMat, n_rf_rx: usize) -> Vec<usize> {
    let n = b_tilde.nrows();
    let vals: Vec<f64> = (0..n)
        .map(|q| {
            let f = crate::design::dft_column(n, q);
            f.dotc(&(b_tilde * &f)).re
        })
        .collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut left: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n_rf_rx);
    for _ in 0..n_rf_rx.min(n) {
        let top = left.iter().map(|&i| vals[i]).fold(f64::NEG_INFINITY, f64::max);
        let pos = left.iter().position(|&i| vals[i] >= top - tol).unwrap();
        out.push(left.remove(pos));
    }
    out.sort_unstable();
    out
}

/// Draw `n_rand` random-phase analog matrices, give each its optimal digital part
/// and keep the feasible one with the smallest PCRB.
pub fn init_random_phase(scenario: &Scenario, n_rand: usize, seed: u64) -> Result<HybridDesign> {
    let model = SensingModel::new(scenario)?;
    init_random_phase_with(scenario, &model, n_rand, seed)
}

pub(crate) fn init_random_phase_with(
    scenario: &Scenario,
    model: &SensingModel,
    n_rand: usize,
    seed: u64,
) -> Result<HybridDesign> {
    if n_rand == 0 {
        return Err(Error::Invalid("n_rand must be at least 1".into()));
    }
    let template = HybridDesign::all_ones(&scenario.arrays, scenario.subcarriers, scenario.power);
    let mut best: Option<(f64, HybridDesign)> = None;
    let mut best_rate = f64::NEG_INFINITY;
    for r in 0..n_rand {
        let mut rng = stream_rng(seed, streams::RANDOM_INIT + r as u64);
        let mut d = randomize_phases(&template, &mut rng);
        match digital_update(scenario, model, &d) {
            Ok(r_bb) => {
                d.r_bb = r_bb;
                let p = model.pcrb(&d)?;
                if best.as_ref().is_none_or(|b| p < b.0) {
                    best = Some((p, d));
                }
            }
            Err(Error::Infeasible { max_rate, .. }) => best_rate = best_rate.max(max_rate),
            Err(e) => return Err(e),
        }
    }
    best.map(|b| b.1).ok_or(Error::Infeasible {
        target: scenario.rate_target,
        max_rate: best_rate,
    })
}

/// Optimal digital covariances for the analog blocks of `design`.
pub(crate) fn digital_update(scenario: &Scenario, model: &SensingModel, design: &HybridDesign) -> Result<Vec<CMat>> {
    let a1 = model.a1(&design.rx)?;
    let sol = optimal_rbb_multi(
        &a1,
        &design.v_rf,
        scenario.channels(),
        scenario.power,
        scenario.rate_target,
        scenario.noise_comm,
    )?;
    Ok(sol.r_bb)
}

fn feasible(scenario: &Scenario, design: &HybridDesign) -> Result<bool> {
    let rate = design_rate(scenario, design)?;
    Ok(rate >= scenario.rate_target - 1e-6 && design.power() <= scenario.power + 1e-8)
}

/// Upper bound on guarded phase passes per outer iteration.
const PHASE_PASSES: usize = 50;

/// Alternating optimization under the rate constraint from a feasible start.
pub fn isac_ao_from(
    scenario: &Scenario,
    model: &SensingModel,
    init: HybridDesign,
    opts: &AoOptions,
) -> Result<AoReport> {
    let start = Instant::now();
    if !feasible(scenario, &init)? {
        return Err(Error::Invalid("initial design violates the rate or power constraint".into()));
    }
    let hs = scenario.channels();
    let mut design = init;
    let mut pcrb = model.pcrb(&design)?;
    let mut trace = vec![pcrb];
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let before = pcrb;
        let a1 = model.a1(&design.rx)?;
        let mut v_moved = false;
        if let (TxAnalog::Phases(v), false) = (&design.v_rf, opts.fix_tx_analog) {
            let out = fpp_sca_core(
                &a1,
                &design.r_bb,
                hs,
                scenario.noise_comm,
                scenario.power,
                scenario.rate_target,
                v,
                &opts.fpp,
            )?;
            if out.improved {
                let mut cand = design.clone();
                cand.v_rf = TxAnalog::Phases(out.v_rf);
                if let Ok(sol) = optimal_rbb_multi(&a1, &cand.v_rf, hs, scenario.power, scenario.rate_target, scenario.noise_comm) {
                    cand.r_bb = sol.r_bb;
                    let p = model.pcrb(&cand)?;
                    if p <= pcrb && feasible(scenario, &cand)? {
                        design = cand;
                        pcrb = p;
                        v_moved = true;
                    }
                }
            }
        }
        if let (TxAnalog::Phases(v), false) = (&design.v_rf, opts.fix_tx_analog) {
            // SCA steps move all phases at once and can stall where single-phase moves still help
            if let Some(vr) = guarded_phase_passes(
                &a1,
                &design.r_bb,
                hs,
                scenario.noise_comm,
                scenario.power,
                scenario.rate_target,
                v,
                PHASE_PASSES,
            ) {
                let mut cand = design.clone();
                cand.v_rf = TxAnalog::Phases(vr);
                if let Ok(sol) = optimal_rbb_multi(&a1, &cand.v_rf, hs, scenario.power, scenario.rate_target, scenario.noise_comm) {
                    cand.r_bb = sol.r_bb;
                    let p = model.pcrb(&cand)?;
                    if p <= pcrb && feasible(scenario, &cand)? {
                        design = cand;
                        pcrb = p;
                        v_moved = true;
                    }
                }
            }
        }
        if !v_moved {
            if let Ok(sol) = optimal_rbb_multi(&a1, &design.v_rf, hs, scenario.power, scenario.rate_target, scenario.noise_comm) {
                let mut cand = design.clone();
                cand.r_bb = sol.r_bb;
                let p = model.pcrb(&cand)?;
                if p <= pcrb && feasible(scenario, &cand)? {
                    design = cand;
                    pcrb = p;
                }
            }
        }
        let x = design.tx_covariance_sum();
        let rx = update_receiver(model, &design.rx, &x)?;
        if rx != design.rx {
            let mut cand = design.clone();
            cand.rx = rx;
            let p = model.pcrb(&cand)?;
            if p <= pcrb {
                design = cand;
                pcrb = p;
            }
        }
        trace.push(pcrb);
        if (before - pcrb) / before < opts.tol {
            converged = true;
            break;
        }
    }
    let rate = design_rate(scenario, &design)?;
    Ok(AoReport {
        trace,
        design,
        converged,
        wall_time: start.elapsed(),
        pcrb,
        rate,
    })
}

/// Deterministic start: all-ones phases with optimal digital part, or the best
/// random-phase draw when the all-ones matrix cannot meet the rate target.
pub(crate) fn isac_start(scenario: &Scenario, model: &SensingModel, opts: &AoOptions) -> Result<HybridDesign> {
    let mut d = HybridDesign::all_ones(&scenario.arrays, scenario.subcarriers, scenario.power);
    match digital_update(scenario, model, &d) {
        Ok(r) => {
            d.r_bb = r;
            Ok(d)
        }
        Err(Error::Infeasible { .. }) => init_random_phase_with(scenario, model, opts.n_random_init, opts.seed),
        Err(e) => Err(e),
    }
}

/// Runs the ISAC optimizer from the deterministic start and any seeded restarts.
pub(crate) fn isac_ao_model(scenario: &Scenario, model: &SensingModel, opts: &AoOptions) -> Result<AoReport> {
    let init = isac_start(scenario, model, opts)?;
    let mut best = isac_ao_from(scenario, model, init, opts)?;
    for r in 0..opts.restarts {
        let seed = opts.seed.wrapping_add(streams::RESTART + r as u64);
        let start = match init_random_phase_with(scenario, model, opts.n_random_init.max(1), seed) {
            Ok(s) => s,
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        let rep = isac_ao_from(scenario, model, start, opts)?;
        if rep.pcrb < best.pcrb {
            best = rep;
        }
    }
    Ok(best)
}

/// Narrowband ISAC optimization with default options.
pub fn ao_p1(scenario: &Scenario) -> Result<AoReport> {
    ao_p1_with(scenario, &AoOptions::default())
}

pub fn ao_p1_with(scenario: &Scenario, opts: &AoOptions) -> Result<AoReport> {
    if scenario.subcarriers != 1 {
        return Err(Error::Invalid("narrowband optimizer needs a single subcarrier".into()));
    }
    if scenario.rate_target == 0.0 {
        return ao_p0_with(scenario, opts);
    }
    let model = SensingModel::new(scenario)?;
    isac_ao_model(scenario, &model, opts)
}

/// Receive combiner used as the starting point for a given architecture.
pub fn default_rx(scenario: &Scenario) -> RxCombiner {
    RxCombiner::all_ones(&scenario.arrays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn wmmse_no_signal() {
        let h = CMat::from_element(2, 3, c(0.3, -0.2));
        let v = CMat::from_element(3, 2, c(1.0, 0.0));
        let vbb = CMat::zeros(2, 1);
        let aux = wmmse_update(&h, &v, &vbb, 0.5).unwrap();
        assert!(aux.xi.abs() < 1e-14);
        assert!((aux.u[(0, 0)] - C64::from(1.0)).norm() < 1e-14);
    }

    #[test]
    fn wmmse_scalar() {
        let h = CMat::from_element(1, 1, c(0.8, 0.6));
        let v = CMat::from_element(1, 1, c(0.0, 1.0));
        let vbb = CMat::from_element(1, 1, c(1.5, 0.0));
        let aux = wmmse_update(&h, &v, &vbb, 0.2).unwrap();
        let expect = (1.0f64 + 1.5 * 1.5 / 0.2).ln();
        assert!((aux.xi - expect).abs() < 1e-10);
    }

    #[test]
    fn dft_select_examples() {
        let n = 6;
        let f2 = crate::design::dft_column(n, 1);
        let b = &f2 * f2.adjoint();
        let q = dft_select_fc(&b, 2);
        assert!(q.contains(&1));
        assert_eq!(dft_select_fc(&CMat::identity(n, n), 3), vec![0, 1, 2]);
    }
}
