//! Benchmark schemes, parameter sweeps, Monte-Carlo aggregation and receive
//! power patterns.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{HybridDesign, RxCombiner, TxAnalog};
use crate::error::{Error, Result};
use crate::isac_opt::{design_rate, digital_update, init_random_phase_with, isac_ao_from};
use crate::linalg::{CMat, C64};
use crate::model::{dbm_to_watts, steering_unchecked, steering_vector, GmmAnglePrior, RxArchitecture, Scenario};
use crate::pcrb::SensingModel;
use crate::quadrature::SteeringTable;
use crate::sensing_opt::{ao_p0_from, AoOptions, AoReport};

/// Number of points of the default pattern grid over [−π/2, π/2].
pub const PATTERN_POINTS: usize = 721;

/// Fraction of pattern mass expected within ±3σ of the mixture means for an
/// optimized sensing design. This is a tool-defined acceptance constant.
pub const FOCUS_MASS_THRESHOLD: f64 = 0.6;

/// Random draws used by [`SchemeId::RandomPhase`] when none is given.
pub const DEFAULT_RANDOM_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    /// V = I and W = I; the remaining digital problem is convex.
    FullyDigitalOptimal,
    /// W = I, hybrid transmitter optimized by the alternating framework.
    FDReceive,
    /// V = I, hybrid receiver optimized by the alternating framework.
    FDTransmit,
    /// Best of n random analog draws, each with its optimal digital part.
    RandomPhase(usize),
    /// Analog columns steered at the user and at the heaviest mixture means.
    DirectionAlignment,
    /// Framework run against the CRB at the prior mode only.
    PartialPriorCrb,
    ProposedAO,
}

impl SchemeId {
    pub fn name(&self) -> String {
        match self {
            SchemeId::FullyDigitalOptimal => "fully_digital".into(),
            SchemeId::FDReceive => "fd_receive".into(),
            SchemeId::FDTransmit => "fd_transmit".into(),
            SchemeId::RandomPhase(n) => format!("random_phase({n})"),
            SchemeId::DirectionAlignment => "direction_alignment".into(),
            SchemeId::PartialPriorCrb => "partial_prior".into(),
            SchemeId::ProposedAO => "proposed".into(),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "fully_digital" => SchemeId::FullyDigitalOptimal,
            "fd_receive" => SchemeId::FDReceive,
            "fd_transmit" => SchemeId::FDTransmit,
            "random_phase" => SchemeId::RandomPhase(DEFAULT_RANDOM_DRAWS),
            "direction_alignment" => SchemeId::DirectionAlignment,
            "partial_prior" => SchemeId::PartialPriorCrb,
            "proposed" => SchemeId::ProposedAO,
            _ => {
                let n = s
                    .strip_prefix("random_phase(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::Invalid(format!("unknown scheme '{s}'")))?;
                SchemeId::RandomPhase(n)
            }
        })
    }
}

/// Receive side made fully digital.
fn with_fd_receiver(scenario: &Scenario) -> Scenario {
    let mut s = scenario.clone();
    s.arrays.rx_architecture = RxArchitecture::FullyDigital;
    s.arrays.n_rf_rx = s.arrays.n_rx;
    s
}

/// Uniform power over all antennas and subcarriers behind an identity precoder.
fn identity_tx(scenario: &Scenario, rx: RxCombiner) -> HybridDesign {
    let n = scenario.arrays.n_tx;
    let k = scenario.subcarriers;
    let p = scenario.power / (n * k) as f64;
    HybridDesign {
        v_rf: TxAnalog::Identity(n),
        r_bb: vec![CMat::identity(n, n) * C64::from(p); k],
        rx,
    }
}

/// Sensing-only or rate-constrained alternating optimization from `init`.
///
/// With a rate target, an analog start that cannot meet it is replaced by the
/// best feasible random-phase draw when the transmit phases are free to move.
fn run_framework(scenario: &Scenario, model: &SensingModel, init: HybridDesign, opts: &AoOptions) -> Result<AoReport> {
    if scenario.rate_target == 0.0 {
        return ao_p0_from(scenario, model, init, opts);
    }
    let mut start = init;
    match digital_update(scenario, model, &start) {
        Ok(r) => start.r_bb = r,
        Err(e) if e.is_infeasible() && !opts.fix_tx_analog && !start.v_rf.is_identity() => {
            start = init_random_phase_with(scenario, model, opts.n_random_init.max(1), opts.seed)?;
        }
        Err(e) => return Err(e),
    }
    isac_ao_from(scenario, model, start, opts)
}

fn better(a: Result<AoReport>, b: Result<AoReport>) -> Result<AoReport> {
    match (a, b) {
        (Ok(x), Ok(y)) => Ok(if y.pcrb < x.pcrb { y } else { x }),
        (Ok(x), Err(e)) | (Err(e), Ok(x)) => {
            if e.is_infeasible() {
                Ok(x)
            } else {
                Err(e)
            }
        }
        (Err(a), Err(b)) => Err(if !a.is_infeasible() {
            a
        } else if !b.is_infeasible() {
            b
        } else {
            max_infeasible(a, b)
        }),
    }
}

/// The infeasibility error carrying the larger achieved rate.
fn max_infeasible(a: Error, b: Error) -> Error {
    match (&a, &b) {
        (Error::Infeasible { max_rate: ra, .. }, Error::Infeasible { max_rate: rb, .. }) if rb > ra => b,
        _ => a,
    }
}

/// Options used by the schemes: the scenario seed, 100 random draws, and for
/// rate-constrained runs a 1e-4 outer tolerance with 10 SCA iterations per
/// analog step, which keeps desk-scale sweeps tractable.
pub fn scheme_options(scenario: &Scenario) -> AoOptions {
    let mut o = AoOptions {
        seed: scenario.seed,
        n_random_init: DEFAULT_RANDOM_DRAWS,
        ..AoOptions::default()
    };
    if scenario.rate_target > 0.0 {
        o.tol = 1e-4;
        o.fpp.max_iters = 10;
    }
    o
}

pub fn run_scheme(scheme: SchemeId, scenario: &Scenario) -> Result<AoReport> {
    run_scheme_with(scheme, scenario, &scheme_options(scenario))
}

/// Runs one scheme. For [`SchemeId::PartialPriorCrb`] the trace holds the
/// point-CRB surrogate while `pcrb` is the true PCRB of the final design.
pub fn run_scheme_with(scheme: SchemeId, scenario: &Scenario, opts: &AoOptions) -> Result<AoReport> {
    scenario.validate()?;
    match scheme {
        SchemeId::FullyDigitalOptimal => {
            let s = with_fd_receiver(scenario);
            let model = SensingModel::new(&s)?;
            let init = identity_tx(&s, RxCombiner::Identity(s.arrays.n_rx));
            run_framework(&s, &model, init, opts)
        }
        SchemeId::FDReceive => {
            let s = with_fd_receiver(scenario);
            let model = SensingModel::new(&s)?;
            let mut init = HybridDesign::all_ones(&s.arrays, s.subcarriers, s.power);
            init.rx = RxCombiner::Identity(s.arrays.n_rx);
            run_framework(&s, &model, init, opts)
        }
        SchemeId::FDTransmit => {
            let model = SensingModel::new(scenario)?;
            let init = identity_tx(scenario, RxCombiner::all_ones(&scenario.arrays));
            run_framework(scenario, &model, init, opts)
        }
        SchemeId::RandomPhase(n) => {
            let start = Instant::now();
            let model = SensingModel::new(scenario)?;
            let design = init_random_phase_with(scenario, &model, n, opts.seed)?;
            let pcrb = model.pcrb(&design)?;
            let rate = design_rate(scenario, &design)?;
            Ok(AoReport {
                trace: vec![pcrb],
                design,
                converged: true,
                wall_time: start.elapsed(),
                pcrb,
                rate,
            })
        }
        SchemeId::DirectionAlignment => {
            let user = scenario
                .channel_model
                .and_then(|m| m.user_angle())
                .ok_or_else(|| Error::Invalid("direction alignment needs a channel model with a user angle".into()))?;
            let model = SensingModel::new(scenario)?;
            let mut init = HybridDesign::all_ones(&scenario.arrays, scenario.subcarriers, scenario.power);
            init.v_rf = TxAnalog::Phases(alignment_matrix(scenario.arrays.n_tx, scenario.arrays.n_rf_tx, user, &scenario.angle_prior)?);
            let fixed = AoOptions {
                fix_tx_analog: true,
                ..opts.clone()
            };
            run_framework(scenario, &model, init, &fixed)
        }
        SchemeId::PartialPriorCrb => {
            let truth = SensingModel::new(scenario)?;
            let mode = scenario.angle_prior.mode();
            let table = SteeringTable::from_points(&scenario.arrays, &[mode], &[1.0]);
            let point = SensingModel::with_table(scenario, table, truth.f_p_theta);
            let rep = proposed(scenario, &point, opts)?;
            let pcrb = truth.pcrb(&rep.design)?;
            Ok(AoReport { pcrb, ..rep })
        }
        SchemeId::ProposedAO => {
            let model = SensingModel::new(scenario)?;
            proposed(scenario, &model, opts)
        }
    }
}

/// Best of the runs from the all-ones start and from the best random-phase draw.
fn proposed(scenario: &Scenario, model: &SensingModel, opts: &AoOptions) -> Result<AoReport> {
    let ones = HybridDesign::all_ones(&scenario.arrays, scenario.subcarriers, scenario.power);
    let random = |n| init_random_phase_with(scenario, model, n, opts.seed);
    if scenario.rate_target == 0.0 {
        let det = ao_p0_from(scenario, model, ones, opts);
        if opts.n_random_init == 0 {
            return det;
        }
        return better(det, random(opts.n_random_init).and_then(|d| ao_p0_from(scenario, model, d, opts)));
    }
    let from_random = random(opts.n_random_init.max(1)).and_then(|d| isac_ao_from(scenario, model, d, opts));
    let from_ones = digital_update(scenario, model, &ones)
        .and_then(|r| isac_ao_from(scenario, model, HybridDesign { r_bb: r, ..ones }, opts));
    better(from_random, from_ones)
}

/// Column 1 steered at the user, column j at the mean with the (j−1)-th largest
/// weight; columns beyond the mixture size repeat the user direction.
pub fn alignment_matrix(n_tx: usize, n_rf: usize, user_angle: f64, prior: &GmmAnglePrior) -> Result<CMat> {
    let mut comps: Vec<_> = prior.components().to_vec();
    // stable sort keeps declaration order among equal weights
    comps.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let mut v = CMat::zeros(n_tx, n_rf);
    let user = steering_vector(n_tx, user_angle)?;
    for j in 0..n_rf {
        let col = match j.checked_sub(1).and_then(|i| comps.get(i)) {
            Some(c) => steering_vector(n_tx, c.mean)?,
            None => user.clone(),
        };
        v.set_column(j, &col);
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// sweeps

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Transmit power budget in dBm.
    PowerDbm,
    /// Rate target in bits/s/Hz.
    RateBits,
    /// Transmit RF chains with n_rf_tx + n_rf_rx held at `total`.
    NRfTx { total: usize },
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::PowerDbm => "power_dbm",
            SweepVar::RateBits => "rate_bits",
            SweepVar::NRfTx { .. } => "n_rf_tx",
        }
    }

    /// Scenario with the swept quantity set to `value`.
    pub fn apply(&self, template: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = template.clone();
        match *self {
            SweepVar::PowerDbm => s.power = dbm_to_watts(value),
            SweepVar::RateBits => {
                if !(value >= 0.0) {
                    return Err(Error::Domain {
                        what: "rate target",
                        value,
                        expected: "nonnegative bits/s/Hz",
                    });
                }
                s.rate_target = value * std::f64::consts::LN_2;
            }
            SweepVar::NRfTx { total } => {
                if value.fract() != 0.0 || value < 1.0 || value >= total as f64 {
                    return Err(Error::Invalid(format!("n_rf_tx = {value} is not an allocation of {total} chains")));
                }
                s.arrays.n_rf_tx = value as usize;
                s.arrays.n_rf_rx = total - value as usize;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub template: Scenario,
    pub var: SweepVar,
    pub values: Vec<f64>,
    pub schemes: Vec<SchemeId>,
    pub trials: usize,
    /// Trial t redraws the channel with seed `seed + t`.
    pub seed: u64,
    /// Worker threads, 0 for the rayon default.
    pub threads: usize,
    /// Record wall-clock time per cell; off by default so tables are reproducible.
    pub timing: bool,
}

impl SweepSpec {
    pub fn new(template: Scenario, var: SweepVar, values: Vec<f64>, schemes: Vec<SchemeId>) -> Self {
        let seed = template.seed;
        SweepSpec {
            template,
            var,
            values,
            schemes,
            trials: 1,
            seed,
            threads: 0,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Invalid("sweep needs at least one value".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) || self.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("sweep values must be finite and sorted ascending".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Invalid("sweep needs at least one scheme".into()));
        }
        if self.trials == 0 {
            return Err(Error::Invalid("trials must be at least 1".into()));
        }
        self.template.validate()
    }
}

/// One (value, scheme, trial) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub value: f64,
    pub scheme: String,
    pub trial: usize,
    /// NaN when the cell is infeasible.
    pub pcrb_theta: f64,
    /// Achieved rate, or the best achievable rate of an infeasible cell.
    pub rate_nats: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn rate_bits(&self) -> f64 {
        self.rate_nats / std::f64::consts::LN_2
    }
}

fn run_cell(spec: &SweepSpec, value: f64, scheme: SchemeId, trial: usize) -> Result<ResultRow> {
    let start = Instant::now();
    let mut row = ResultRow {
        sweep_var: spec.var.name().into(),
        value,
        scheme: scheme.name(),
        trial,
        pcrb_theta: f64::NAN,
        rate_nats: 0.0,
        iterations: 0,
        feasible: false,
        wall_ms: 0.0,
    };
    let seeded = spec.template.reseeded(spec.seed.wrapping_add(trial as u64))?;
    let scenario = match spec.var.apply(&seeded, value) {
        Ok(s) => s,
        // an impossible RF split is a point of the sweep, not a failure
        Err(_) if matches!(spec.var, SweepVar::NRfTx { .. }) => return Ok(row),
        Err(e) => return Err(e),
    };
    match run_scheme(scheme, &scenario) {
        Ok(rep) => {
            row.pcrb_theta = rep.pcrb;
            row.rate_nats = rep.rate;
            row.iterations = rep.iterations();
            row.feasible = true;
        }
        Err(Error::Infeasible { max_rate, .. }) => row.rate_nats = max_rate.max(0.0),
        Err(e) => return Err(e),
    }
    if spec.timing {
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    Ok(row)
}

/// Runs `f` on a pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Solver(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// One row per (value, scheme, trial) in that nesting order. Cells run in
/// parallel; the table does not depend on the thread count.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &v in &spec.values {
        for &s in &spec.schemes {
            for t in 0..spec.trials {
                cells.push((v, s, t));
            }
        }
    }
    with_threads(spec.threads, || {
        cells
            .par_iter()
            .map(|&(v, s, t)| run_cell(spec, v, s, t))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Per-(value, scheme) statistics over the feasible trials of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_var: String,
    pub value: f64,
    pub scheme: String,
    pub trials: usize,
    pub feasible: usize,
    pub mean_pcrb: f64,
    pub stderr_pcrb: f64,
    pub mean_rate_nats: f64,
    pub stderr_rate_nats: f64,
}

fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Groups sweep rows by (value, scheme) in first-seen order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(u64, String)> = Vec::new();
    for r in rows {
        let k = (r.value.to_bits(), r.scheme.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(vb, scheme)| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.value.to_bits() == vb && r.scheme == scheme).collect();
            let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.feasible).collect();
            let p: Vec<f64> = ok.iter().map(|r| r.pcrb_theta).collect();
            let q: Vec<f64> = ok.iter().map(|r| r.rate_nats).collect();
            let (mean_pcrb, stderr_pcrb) = mean_stderr(&p);
            let (mean_rate_nats, stderr_rate_nats) = mean_stderr(&q);
            AggregateRow {
                sweep_var: group[0].sweep_var.clone(),
                value: f64::from_bits(vb),
                scheme,
                trials: group.len(),
                feasible: ok.len(),
                mean_pcrb,
                stderr_pcrb,
                mean_rate_nats,
                stderr_rate_nats,
            }
        })
        .collect()
}

/// Sweep with `n_trials` channel draws, reduced to means and standard errors.
pub fn mc_average(spec: &SweepSpec, n_trials: usize) -> Result<Vec<AggregateRow>> {
    if n_trials == 0 {
        return Err(Error::Invalid("n_trials must be at least 1".into()));
    }
    let mut s = spec.clone();
    s.trials = n_trials;
    Ok(aggregate(&sweep(&s)?))
}

// ---------------------------------------------------------------------------
// power patterns

/// `n` uniform angles over [−π/2, π/2].
pub fn angle_grid(n: usize) -> Vec<f64> {
    let h = std::f64::consts::FRAC_PI_2;
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| -h + 2.0 * h * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn default_angle_grid() -> Vec<f64> {
    angle_grid(PATTERN_POINTS)
}

/// Received power γ Σ_k ‖W^H b(θ) a^H(θ) V V_BB,k‖²_F, evaluated as
/// γ Σ_k (a^H X_k a)(b^H W W^H b) with X_k = V R_k V^H.
pub fn power_pattern(scenario: &Scenario, design: &HybridDesign, grid: &[f64]) -> Vec<(f64, f64)> {
    let xs = design.tx_covariances();
    let w = design.rx.matrix();
    let wwh = &w * w.adjoint();
    let gamma = scenario.reflection.gamma;
    grid.iter()
        .map(|&t| {
            let a = steering_unchecked(scenario.arrays.n_tx, t);
            let b = steering_unchecked(scenario.arrays.n_rx, t);
            let rx = (b.adjoint() * &wwh * &b)[(0, 0)].re;
            let tx: f64 = xs.iter().map(|x| (a.adjoint() * x * &a)[(0, 0)].re).sum();
            (t, (gamma * tx * rx).max(0.0))
        })
        .collect()
}

/// Trapezoid integral of a sampled curve.
pub fn trapezoid(curve: &[(f64, f64)]) -> f64 {
    curve.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

/// Fraction of trapezoid-integrated mass inside the union of [μ_i − kσ_i, μ_i + kσ_i].
///
/// Each trapezoid panel counts toward the inside mass by the share of its width
/// covered by the union.
pub fn mass_near_means(curve: &[(f64, f64)], prior: &GmmAnglePrior, k_sigma: f64) -> f64 {
    let total = trapezoid(curve);
    if !(total > 0.0) {
        return 0.0;
    }
    let mut iv: Vec<(f64, f64)> = prior
        .components()
        .iter()
        .map(|c| {
            let s = c.variance.sqrt();
            (c.mean - k_sigma * s, c.mean + k_sigma * s)
        })
        .collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in iv {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let inside: f64 = curve
        .windows(2)
        .map(|w| {
            let (x0, x1) = (w[0].0, w[1].0);
            let width = x1 - x0;
            if width <= 0.0 {
                return 0.0;
            }
            let covered: f64 = merged.iter().map(|&(lo, hi)| (hi.min(x1) - lo.max(x0)).max(0.0)).sum();
            0.5 * width * (w[0].1 + w[1].1) * covered / width
        })
        .sum();
    inside / total
}
