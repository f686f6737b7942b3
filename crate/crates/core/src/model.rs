//! Array geometry, priors, steering vectors and communication channels.
//!
//! Angles are radians and powers are linear (watts) everywhere in this crate.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64, J};

pub const THETA_MIN: f64 = -FRAC_PI_2;
pub const THETA_MAX: f64 = FRAC_PI_2;

/// Receive-side analog architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RxArchitecture {
    PartiallyConnected,
    FullyConnected,
    FullyDigital,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_user: usize,
    pub n_rf_tx: usize,
    pub n_rf_rx: usize,
    pub rx_architecture: RxArchitecture,
}

impl ArrayConfig {
    pub fn new(
        n_tx: usize,
        n_rx: usize,
        n_user: usize,
        n_rf_tx: usize,
        n_rf_rx: usize,
        rx_architecture: RxArchitecture,
    ) -> Result<Self> {
        let cfg = ArrayConfig {
            n_tx,
            n_rx,
            n_user,
            n_rf_tx,
            n_rf_rx,
            rx_architecture,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("n_user", self.n_user),
            ("n_rf_tx", self.n_rf_tx),
            ("n_rf_rx", self.n_rf_rx),
        ] {
            if v == 0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.n_rf_tx > self.n_tx {
            return Err(Error::Invalid(format!(
                "n_rf_tx = {} exceeds n_tx = {}",
                self.n_rf_tx, self.n_tx
            )));
        }
        if self.n_rf_rx > self.n_rx {
            return Err(Error::Invalid(format!(
                "n_rf_rx = {} exceeds n_rx = {}",
                self.n_rf_rx, self.n_rx
            )));
        }
        match self.rx_architecture {
            RxArchitecture::PartiallyConnected if self.n_rx % self.n_rf_rx != 0 => {
                Err(Error::Invalid(format!(
                    "partially-connected receiver needs n_rx divisible by n_rf_rx ({} mod {} != 0)",
                    self.n_rx, self.n_rf_rx
                )))
            }
            RxArchitecture::FullyDigital if self.n_rf_rx != self.n_rx => Err(Error::Invalid(
                format!(
                    "fully-digital receiver needs n_rf_rx = n_rx ({} != {})",
                    self.n_rf_rx, self.n_rx
                ),
            )),
            _ => Ok(()),
        }
    }

    /// Antennas per receive RF chain in the partially-connected layout.
    pub fn block_len(&self) -> usize {
        self.n_rx / self.n_rf_rx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Gaussian-mixture prior on the target angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmAnglePrior {
    components: Vec<GmmComponent>,
}

impl GmmAnglePrior {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Invalid("angle prior needs at least one component".into()));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::Invalid(format!("component {i}: weight must be positive")));
            }
            if !(c.variance.is_finite() && c.variance > 0.0) {
                return Err(Error::Invalid(format!("component {i}: variance must be positive")));
            }
            if !(THETA_MIN..THETA_MAX).contains(&c.mean) {
                return Err(Error::Domain {
                    what: "component mean",
                    value: c.mean,
                    expected: "[-pi/2, pi/2)",
                });
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(GmmAnglePrior { components })
    }

    pub fn single(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![GmmComponent {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    fn log_terms(&self, theta: f64) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(move |c| {
            let d = theta - c.mean;
            c.weight.ln() - 0.5 * (2.0 * PI * c.variance).ln() - d * d / (2.0 * c.variance)
        })
    }

    pub fn log_density(&self, theta: f64) -> f64 {
        let max = self.log_terms(theta).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + self.log_terms(theta).map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    pub fn density(&self, theta: f64) -> f64 {
        self.log_density(theta).exp()
    }

    /// d/dθ ln p(θ), evaluated through component responsibilities so it stays
    /// finite far in the tails.
    pub fn score(&self, theta: f64) -> f64 {
        let logs: Vec<f64> = self.log_terms(theta).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, l) in self.components.iter().zip(&logs) {
            let r = (l - max).exp();
            den += r;
            num += r * (-(theta - c.mean) / c.variance);
        }
        num / den
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().unwrap();
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        chosen.mean + chosen.variance.sqrt() * z
    }

    /// Most probable angle inside the domain (grid search then golden-section refinement).
    pub fn mode(&self) -> f64 {
        let n = 20_001;
        let step = (THETA_MAX - THETA_MIN) / (n - 1) as f64;
        let mut best = (THETA_MIN, f64::NEG_INFINITY);
        for i in 0..n {
            let t = THETA_MIN + step * i as f64;
            let l = self.log_density(t);
            if l > best.1 {
                best = (t, l);
            }
        }
        let (mut lo, mut hi) = ((best.0 - step).max(THETA_MIN), (best.0 + step).min(THETA_MAX));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if self.log_density(a) >= self.log_density(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        let t = 0.5 * (lo + hi);
        t.min(THETA_MAX - f64::EPSILON)
    }
}

/// Prior on the complex reflection coefficient: zero-mean with E|α|² = gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionPrior {
    pub gamma: f64,
}

impl ReflectionPrior {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Invalid("reflection gamma must be nonnegative".into()));
        }
        Ok(ReflectionPrior { gamma })
    }
}

fn check_angle(theta: f64) -> Result<()> {
    if (THETA_MIN..THETA_MAX).contains(&theta) {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "theta",
            value: theta,
            expected: "[-pi/2, pi/2)",
        })
    }
}

/// Half-wavelength ULA response with symmetric element indexing, without the angle check.
pub fn steering_unchecked(n: usize, theta: f64) -> CVec {
    let s = theta.sin();
    let mid = (n as f64 - 1.0) / 2.0;
    CVec::from_fn(n, |i, _| {
        let m = i as f64 - mid;
        C64::from_polar(1.0, PI * m * s)
    })
}

pub fn steering_derivative_unchecked(n: usize, theta: f64) -> CVec {
    let (s, c) = theta.sin_cos();
    let mid = (n as f64 - 1.0) / 2.0;
    CVec::from_fn(n, |i, _| {
        let m = i as f64 - mid;
        J * (PI * m * c) * C64::from_polar(1.0, PI * m * s)
    })
}

pub fn steering_vector(n: usize, theta: f64) -> Result<CVec> {
    if n == 0 {
        return Err(Error::Invalid("antenna count must be positive".into()));
    }
    check_angle(theta)?;
    Ok(steering_unchecked(n, theta))
}

pub fn steering_derivative(n: usize, theta: f64) -> Result<CVec> {
    if n == 0 {
        return Err(Error::Invalid("antenna count must be positive".into()));
    }
    check_angle(theta)?;
    Ok(steering_derivative_unchecked(n, theta))
}

/// Generator for a named random stream under a scenario seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub mod streams {
    pub const NLOS: u64 = 1;
    pub const TAPS: u64 = 2;
    pub const ORACLE: u64 = 3;
    pub const RANDOM_INIT: u64 = 0x100;
    pub const RESTART: u64 = 0x10_000;
}

/// Circularly-symmetric complex Gaussian with E|z|² = var.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    // fill row by row so the draw order does not depend on storage layout
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(rng, var);
        }
    }
    m
}

/// Narrowband Rician channel H (n_user × n_tx).
pub fn gen_rician_channel(
    arrays: &ArrayConfig,
    user_angle: f64,
    user_distance: f64,
    rician_factor: f64,
    ref_gain: f64,
    path_exp: f64,
    seed: u64,
) -> Result<CMat> {
    if !(user_distance > 0.0) {
        return Err(Error::Invalid("user distance must be positive".into()));
    }
    if !(ref_gain > 0.0) {
        return Err(Error::Invalid("reference gain must be positive".into()));
    }
    if !(rician_factor >= 0.0) {
        return Err(Error::Invalid("Rician factor must be nonnegative".into()));
    }
    let beta = ref_gain / user_distance.powf(path_exp);
    let a = steering_vector(arrays.n_tx, user_angle)?;
    let b = steering_vector(arrays.n_user, user_angle)?;
    let los = &b * a.adjoint();
    let mut rng = stream_rng(seed, streams::NLOS);
    let nlos = complex_gaussian_matrix(&mut rng, arrays.n_user, arrays.n_tx, 1.0);
    let scale = (beta / (rician_factor + 1.0)).sqrt();
    Ok((los * C64::from(rician_factor.sqrt()) + nlos) * C64::from(scale))
}

/// Per-subcarrier responses H_k = Σ_l taps[l] e^{-j2π k l / K}.
pub fn taps_to_subcarriers(taps: &[CMat], subcarriers: usize) -> Vec<CMat> {
    let (r, c) = taps[0].shape();
    (0..subcarriers)
        .map(|k| {
            let mut h = CMat::zeros(r, c);
            for (l, tap) in taps.iter().enumerate() {
                let ph = -2.0 * PI * ((k * l) % subcarriers) as f64 / subcarriers as f64;
                h += tap * C64::from_polar(1.0, ph);
            }
            h
        })
        .collect()
}

/// Random wideband taps with entries CN(0, gain / n_taps).
pub fn gen_wideband_taps(arrays: &ArrayConfig, n_taps: usize, subcarriers: usize, gain: f64, seed: u64) -> Result<Vec<CMat>> {
    if n_taps == 0 || n_taps > subcarriers {
        return Err(Error::Invalid(format!(
            "tap count {n_taps} must lie in [1, {subcarriers}]"
        )));
    }
    if !(gain > 0.0) {
        return Err(Error::Invalid("wideband gain must be positive".into()));
    }
    let mut rng = stream_rng(seed, streams::TAPS);
    Ok((0..n_taps)
        .map(|_| complex_gaussian_matrix(&mut rng, arrays.n_user, arrays.n_tx, gain / n_taps as f64))
        .collect())
}

pub fn gen_wideband_channel(
    arrays: &ArrayConfig,
    n_taps: usize,
    subcarriers: usize,
    gain: f64,
    seed: u64,
) -> Result<Vec<CMat>> {
    let taps = gen_wideband_taps(arrays, n_taps, subcarriers, gain, seed)?;
    Ok(taps_to_subcarriers(&taps, subcarriers))
}

/// Communication channel to the user.
#[derive(Debug, Clone, PartialEq)]
pub enum CommChannel {
    Narrowband(CMat),
    Wideband { taps: Vec<CMat>, subcarriers: Vec<CMat> },
}

impl CommChannel {
    pub fn wideband(taps: Vec<CMat>, n_subcarriers: usize) -> Result<Self> {
        if taps.is_empty() || taps.len() > n_subcarriers {
            return Err(Error::Invalid("wideband channel needs 1..=K taps".into()));
        }
        let subcarriers = taps_to_subcarriers(&taps, n_subcarriers);
        Ok(CommChannel::Wideband { taps, subcarriers })
    }

    /// Frequency-domain matrices, one per subcarrier (a single one for narrowband).
    pub fn per_subcarrier(&self) -> &[CMat] {
        match self {
            CommChannel::Narrowband(h) => std::slice::from_ref(h),
            CommChannel::Wideband { subcarriers, .. } => subcarriers,
        }
    }
}

/// Statistical recipe for the user channel, used to redraw it per seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    Rician {
        user_angle: f64,
        user_distance: f64,
        rician_factor: f64,
        ref_gain: f64,
        path_exp: f64,
    },
    Wideband {
        taps: usize,
        user_distance: f64,
        ref_gain: f64,
        path_exp: f64,
    },
}

impl ChannelModel {
    pub fn realize(&self, arrays: &ArrayConfig, subcarriers: usize, seed: u64) -> Result<CommChannel> {
        match *self {
            ChannelModel::Rician {
                user_angle,
                user_distance,
                rician_factor,
                ref_gain,
                path_exp,
            } => {
                if subcarriers != 1 {
                    return Err(Error::Invalid(
                        "Rician channel model is narrowband; use subcarriers = 1".into(),
                    ));
                }
                gen_rician_channel(arrays, user_angle, user_distance, rician_factor, ref_gain, path_exp, seed)
                    .map(CommChannel::Narrowband)
            }
            ChannelModel::Wideband {
                taps,
                user_distance,
                ref_gain,
                path_exp,
            } => {
                if !(user_distance > 0.0) {
                    return Err(Error::Invalid("user distance must be positive".into()));
                }
                let gain = ref_gain / user_distance.powf(path_exp);
                let t = gen_wideband_taps(arrays, taps, subcarriers, gain, seed)?;
                CommChannel::wideband(t, subcarriers)
            }
        }
    }

    pub fn user_angle(&self) -> Option<f64> {
        match *self {
            ChannelModel::Rician { user_angle, .. } => Some(user_angle),
            ChannelModel::Wideband { .. } => None,
        }
    }
}

/// Complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arrays: ArrayConfig,
    pub angle_prior: GmmAnglePrior,
    pub reflection: ReflectionPrior,
    pub channel: CommChannel,
    /// Recipe the channel was drawn from, if any.
    pub channel_model: Option<ChannelModel>,
    /// Transmit power budget (W).
    pub power: f64,
    pub noise_comm: f64,
    pub noise_sense: f64,
    pub symbols: usize,
    /// Rate target in nats/s/Hz.
    pub rate_target: f64,
    pub subcarriers: usize,
    pub quadrature_points: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.arrays.validate()?;
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(Error::Invalid("power budget must be nonnegative".into()));
        }
        if !(self.noise_comm > 0.0 && self.noise_sense > 0.0) {
            return Err(Error::Invalid("noise powers must be positive".into()));
        }
        if self.symbols == 0 {
            return Err(Error::Invalid("symbol count must be positive".into()));
        }
        if !(self.rate_target.is_finite() && self.rate_target >= 0.0) {
            return Err(Error::Invalid("rate target must be nonnegative".into()));
        }
        if self.subcarriers == 0 {
            return Err(Error::Invalid("subcarrier count must be positive".into()));
        }
        if self.quadrature_points < 2 {
            return Err(Error::Invalid("quadrature needs at least 2 points".into()));
        }
        let hs = self.channel.per_subcarrier();
        if hs.len() != self.subcarriers {
            return Err(Error::Dimension(format!(
                "channel has {} subcarriers, scenario declares {}",
                hs.len(),
                self.subcarriers
            )));
        }
        for h in hs {
            if h.shape() != (self.arrays.n_user, self.arrays.n_tx) {
                return Err(Error::Dimension(format!(
                    "channel is {}x{}, expected {}x{}",
                    h.nrows(),
                    h.ncols(),
                    self.arrays.n_user,
                    self.arrays.n_tx
                )));
            }
        }
        Ok(())
    }

    /// Same scenario with the channel redrawn from its model under a new seed.
    pub fn reseeded(&self, seed: u64) -> Result<Scenario> {
        let mut s = self.clone();
        s.seed = seed;
        if let Some(model) = self.channel_model {
            s.channel = model.realize(&self.arrays, self.subcarriers, seed)?;
        }
        Ok(s)
    }

    pub fn channels(&self) -> &[CMat] {
        self.channel.per_subcarrier()
    }
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Builds the default mixture used throughout the examples and tests.
pub fn default_prior() -> GmmAnglePrior {
    GmmAnglePrior::new(vec![
        GmmComponent { weight: 0.31, mean: -0.74, variance: 10f64.powf(-2.5) },
        GmmComponent { weight: 0.24, mean: -0.54, variance: 1e-2 },
        GmmComponent { weight: 0.28, mean: -0.75, variance: 1e-2 },
        GmmComponent { weight: 0.17, mean: 0.95, variance: 10f64.powf(-2.5) },
    ])
    .expect("default prior is valid")
}

/// Default narrowband scenario (8 transmit, 12 receive, 6 user antennas; 30 dBm budget).
pub fn default_scenario(seed: u64) -> Scenario {
    let arrays = ArrayConfig::new(8, 12, 6, 3, 6, RxArchitecture::PartiallyConnected).unwrap();
    let model = ChannelModel::Rician {
        user_angle: 0.36,
        user_distance: 400.0,
        rician_factor: db_to_linear(-8.0),
        ref_gain: db_to_linear(-30.0),
        path_exp: 3.5,
    };
    Scenario {
        arrays,
        angle_prior: default_prior(),
        reflection: ReflectionPrior { gamma: 2e-12 },
        channel: model.realize(&arrays, 1, seed).unwrap(),
        channel_model: Some(model),
        power: dbm_to_watts(30.0),
        noise_comm: dbm_to_watts(-90.0),
        noise_sense: dbm_to_watts(-90.0),
        symbols: 30,
        rate_target: 4.5 * std::f64::consts::LN_2,
        subcarriers: 1,
        quadrature_points: 2048,
        seed,
    }
}

/// Default wideband scenario: 16 subcarriers, 8 taps, path-loss exponent 2.8.
pub fn default_ofdm_scenario(seed: u64) -> Scenario {
    let mut s = default_scenario(seed);
    let model = ChannelModel::Wideband {
        taps: 8,
        user_distance: 400.0,
        ref_gain: db_to_linear(-30.0),
        path_exp: 2.8,
    };
    s.subcarriers = 16;
    s.channel = model.realize(&s.arrays, 16, seed).unwrap();
    s.channel_model = Some(model);
    s
}
