//! Sensing-only hybrid beamforming: closed-form transmit solutions, phase-only
//! coordinate updates and the alternating optimizer.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::cvxkit::rate_constrained_trace_max_multi;
pub use crate::design::{HybridDesign, RxCombiner, TxAnalog};
use crate::error::{Error, Result};
use crate::isac_opt::{dft_select_fc, init_random_phase_with};
use crate::linalg::{herm_eig, unit_modulus, CMat, CVec, C64};
use crate::model::{stream_rng, streams, Scenario};
use crate::pcrb::SensingModel;

/// Outcome of an alternating optimization run.
#[derive(Debug, Clone)]
pub struct AoReport {
    /// PCRB after initialization and after every outer iteration.
    pub trace: Vec<f64>,
    pub design: HybridDesign,
    pub converged: bool,
    pub wall_time: Duration,
    /// Final PCRB (last trace entry).
    pub pcrb: f64,
    /// Achieved average rate of the final design (nats/s/Hz).
    pub rate: f64,
}

impl AoReport {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Options shared by the alternating optimizers.
#[derive(Debug, Clone)]
pub struct AoOptions {
    pub max_iters: usize,
    /// Stop when the relative PCRB improvement of an outer iteration falls below this.
    pub tol: f64,
    /// Additional seeded random-phase starts; the best final PCRB is kept.
    pub restarts: usize,
    pub seed: u64,
    /// Random draws used when the all-ones start violates the rate target.
    pub n_random_init: usize,
    /// Keep the transmit analog matrix fixed (only digital and receive blocks move).
    pub fix_tx_analog: bool,
    pub fpp: crate::isac_opt::FppScaOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions {
            max_iters: 200,
            tol: 1e-8,
            restarts: 0,
            seed: 0,
            n_random_init: 20,
            fix_tx_analog: false,
            fpp: Default::default(),
        }
    }
}

/// R* = P q₁ q₁^H for the strongest eigenvector of A.
///
/// On a degenerate top eigenspace the direction closest to the first coordinate
/// axis (then the second, ...) is chosen.
pub fn solve_p0_fully_digital(a: &CMat, power: f64) -> CMat {
    let q = top_direction(a);
    &q * q.adjoint() * C64::from(power)
}

pub(crate) fn top_direction(a: &CMat) -> CVec {
    let n = a.nrows();
    let e = herm_eig(a);
    let l1 = e.values[0];
    let tol = 1e-12 * l1.abs().max(e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))).max(f64::MIN_POSITIVE);
    let k = e.values.iter().take_while(|&&v| l1 - v <= tol).count();
    if k == 1 {
        return e.vectors.column(0).into_owned();
    }
    let basis = e.vectors.columns(0, k);
    for axis in 0..n {
        // projection of the axis onto the top eigenspace
        let coeffs: CVec = basis.row(axis).adjoint();
        if coeffs.norm() > 1e-8 {
            let mut v = &basis * coeffs;
            v /= C64::from(v.norm());
            crate::linalg::normalize_phase(&mut v);
            return v;
        }
    }
    e.vectors.column(0).into_owned()
}

/// Split a fully-digital beamformer f into two unit-modulus columns with equal
/// digital weights; extra RF chains get all-ones columns with zero weight.
pub fn hybrid_from_rank1(f: &CVec, n_rf_tx: usize) -> Result<(CMat, CVec)> {
    if n_rf_tx < 2 {
        return Err(Error::Invalid("rank-1 factorization needs at least 2 RF chains".into()));
    }
    let fmax = f.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if fmax == 0.0 {
        return Err(Error::Invalid("zero beamformer cannot be factorized".into()));
    }
    let c = fmax / 2.0;
    let n = f.len();
    let mut v = CMat::from_element(n, n_rf_tx, C64::from(1.0));
    for m in 0..n {
        let phase = f[m].arg();
        let delta = (f[m].norm() / (2.0 * c)).clamp(0.0, 1.0).acos();
        v[(m, 0)] = C64::from_polar(1.0, phase + delta);
        v[(m, 1)] = C64::from_polar(1.0, phase - delta);
    }
    let mut vbb = CVec::zeros(n_rf_tx);
    vbb[0] = C64::from(c);
    vbb[1] = C64::from(c);
    Ok((v, vbb))
}

/// One ascending cyclic pass of phase alignment maximizing x^H Π x over unit-modulus x.
pub fn coordinate_pass(x: &CVec, pi: &CMat) -> CVec {
    let n = x.len();
    let mut x = unit_modulus(x);
    let scale = crate::linalg::max_abs(pi);
    for k in 0..n {
        let mut s = C64::from(0.0);
        for i in 0..n {
            if i != k {
                s += x[i] * pi[(i, k)].conj();
            }
        }
        x[k] = if s.norm() <= 1e-15 * scale { C64::from(1.0) } else { s / s.norm() };
    }
    x
}

pub fn coordinate_update_receive(d: &CVec, pi: &CMat) -> CVec {
    coordinate_pass(d, pi)
}

pub fn coordinate_update_transmit(v: &CVec, a_tilde: &CMat) -> CVec {
    coordinate_pass(v, a_tilde)
}

/// Π with diagonal blocks B̃_ii^T for a partially-connected receiver with `n_rf` blocks.
pub fn receive_pi(b_tilde: &CMat, n_rf: usize) -> CMat {
    let n = b_tilde.nrows();
    let m = n / n_rf;
    let mut pi = CMat::zeros(n, n);
    for blk in 0..n_rf {
        for i in 0..m {
            for j in 0..m {
                pi[(blk * m + i, blk * m + j)] = b_tilde[(blk * m + j, blk * m + i)];
            }
        }
    }
    pi
}

/// Receive-side block update for a fixed transmit covariance sum `x`.
pub(crate) fn update_receiver(model: &SensingModel, rx: &RxCombiner, x: &CMat) -> Result<RxCombiner> {
    Ok(match rx {
        RxCombiner::Partial { d, n_rf } => {
            let b = model.b_tilde(x)?;
            RxCombiner::Partial {
                d: coordinate_update_receive(d, &receive_pi(&b, *n_rf)),
                n_rf: *n_rf,
            }
        }
        RxCombiner::Dft { indices, n_rx } => {
            let b = model.b_tilde(x)?;
            RxCombiner::Dft {
                indices: dft_select_fc(&b, indices.len()),
                n_rx: *n_rx,
            }
        }
        RxCombiner::Identity(n) => RxCombiner::Identity(*n),
    })
}

fn put_on_first(r: CMat, k: usize) -> Vec<CMat> {
    let n = r.nrows();
    let mut out = vec![CMat::zeros(n, n); k];
    out[0] = r;
    out
}

/// Best sensing-only transmit block for the current receiver.
fn transmit_step(
    model: &SensingModel,
    design: &HybridDesign,
    power: f64,
    k: usize,
    fix_tx: bool,
) -> Result<HybridDesign> {
    let a1 = model.a1(&design.rx)?;
    let mut next = design.clone();
    match &design.v_rf {
        TxAnalog::Identity(_) => {
            next.r_bb = put_on_first(solve_p0_fully_digital(&a1, power), k);
        }
        TxAnalog::Phases(v) if fix_tx => {
            let ae = v.adjoint() * &a1 * v;
            let g = v.adjoint() * v;
            let h = CMat::zeros(1, v.ncols());
            let sol = rate_constrained_trace_max_multi(&ae, &g, &[h], power, 0.0, 1.0)?;
            next.r_bb = put_on_first(sol.r_bb.into_iter().next().unwrap(), k);
        }
        TxAnalog::Phases(v) if v.ncols() == 1 => {
            let col = v.column(0).into_owned();
            let vn = coordinate_update_transmit(&col, &a1);
            next.v_rf = TxAnalog::Phases(CMat::from_column_slice(vn.len(), 1, vn.as_slice()));
            let n_tx = vn.len() as f64;
            next.r_bb = put_on_first(CMat::from_element(1, 1, C64::from(power / n_tx)), k);
        }
        TxAnalog::Phases(v) => {
            let q = top_direction(&a1);
            let f = q * C64::from(power.sqrt());
            let (vr, vbb) = hybrid_from_rank1(&f, v.ncols())?;
            next.v_rf = TxAnalog::Phases(vr);
            next.r_bb = put_on_first(&vbb * vbb.adjoint(), k);
        }
    }
    Ok(next)
}

/// Sensing-only alternating optimization from a given starting design.
pub fn ao_p0_from(
    scenario: &Scenario,
    model: &SensingModel,
    init: HybridDesign,
    opts: &AoOptions,
) -> Result<AoReport> {
    let start = Instant::now();
    let k = scenario.subcarriers;
    let mut design = init;
    let mut pcrb = model.pcrb(&design)?;
    let mut trace = vec![pcrb];
    let mut converged = false;
    if scenario.power == 0.0 {
        converged = true;
    } else {
        // the first transmit step may replace an arbitrary digital start
        for _ in 0..opts.max_iters {
            let cand = transmit_step(model, &design, scenario.power, k, opts.fix_tx_analog)?;
            let p_tx = model.pcrb(&cand)?;
            let (cand, p_cand) = if p_tx <= pcrb { (cand, p_tx) } else { (design.clone(), pcrb) };
            let x = cand.tx_covariance_sum();
            let mut with_rx = cand.clone();
            with_rx.rx = update_receiver(model, &cand.rx, &x)?;
            let p_rx = model.pcrb(&with_rx)?;
            let (next, p_next) = if p_rx <= p_cand { (with_rx, p_rx) } else { (cand, p_cand) };
            let improvement = (pcrb - p_next) / pcrb;
            design = next;
            pcrb = p_next;
            trace.push(pcrb);
            if improvement < opts.tol {
                converged = true;
                break;
            }
        }
    }
    Ok(AoReport {
        trace,
        design,
        converged,
        wall_time: start.elapsed(),
        pcrb,
        rate: 0.0,
    })
    .map(|mut r| {
        r.rate = crate::isac_opt::design_rate(scenario, &r.design).unwrap_or(0.0);
        r
    })
}

/// Random unit-modulus phases for the analog blocks of a design template.
pub(crate) fn randomize_phases<R: Rng + ?Sized>(template: &HybridDesign, rng: &mut R) -> HybridDesign {
    let mut phase = || C64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
    let v_rf = match &template.v_rf {
        TxAnalog::Phases(v) => TxAnalog::Phases(CMat::from_fn(v.nrows(), v.ncols(), |_, _| phase())),
        TxAnalog::Identity(n) => TxAnalog::Identity(*n),
    };
    let rx = match &template.rx {
        RxCombiner::Partial { d, n_rf } => RxCombiner::Partial {
            d: CVec::from_fn(d.len(), |_, _| phase()),
            n_rf: *n_rf,
        },
        RxCombiner::Dft { indices, n_rx } => {
            let mut all: Vec<usize> = (0..*n_rx).collect();
            for i in (1..all.len()).rev() {
                let j = rng.random_range(0..=i);
                all.swap(i, j);
            }
            let mut q: Vec<usize> = all[..indices.len()].to_vec();
            q.sort_unstable();
            RxCombiner::Dft { indices: q, n_rx: *n_rx }
        }
        RxCombiner::Identity(n) => RxCombiner::Identity(*n),
    };
    HybridDesign {
        v_rf,
        r_bb: template.r_bb.clone(),
        rx,
    }
}

/// Sensing-only optimization with the default all-ones start plus optional restarts.
pub fn ao_p0(scenario: &Scenario) -> Result<AoReport> {
    ao_p0_with(scenario, &AoOptions::default())
}

pub fn ao_p0_with(scenario: &Scenario, opts: &AoOptions) -> Result<AoReport> {
    let model = SensingModel::new(scenario)?;
    let init = HybridDesign::all_ones(&scenario.arrays, scenario.subcarriers, scenario.power);
    ao_p0_model(scenario, &model, init, opts)
}

/// All-ones start followed by `opts.restarts` random-phase starts; best final PCRB wins.
pub fn ao_p0_model(
    scenario: &Scenario,
    model: &SensingModel,
    init: HybridDesign,
    opts: &AoOptions,
) -> Result<AoReport> {
    let mut best = ao_p0_from(scenario, model, init.clone(), opts)?;
    for r in 0..opts.restarts {
        let mut rng = stream_rng(opts.seed, streams::RESTART + r as u64);
        let start = if opts.fix_tx_analog {
            let mut d = randomize_phases(&init, &mut rng);
            d.v_rf = init.v_rf.clone();
            d
        } else {
            randomize_phases(&init, &mut rng)
        };
        let rep = ao_p0_from(scenario, model, start, opts)?;
        if rep.pcrb < best.pcrb {
            best = rep;
        }
    }
    Ok(best)
}

/// Best of the all-ones start and a random-phase initialization.
pub fn ao_p0_best_of(scenario: &Scenario, model: &SensingModel, n_rand: usize, opts: &AoOptions) -> Result<AoReport> {
    let init = HybridDesign::all_ones(&scenario.arrays, scenario.subcarriers, scenario.power);
    let mut best = ao_p0_model(scenario, model, init, opts)?;
    if n_rand > 0 {
        let start = init_random_phase_with(scenario, model, n_rand, opts.seed)?;
        let rep = ao_p0_from(scenario, model, start, opts)?;
        if rep.pcrb < best.pcrb {
            best = rep;
        }
    }
    Ok(best)
}
