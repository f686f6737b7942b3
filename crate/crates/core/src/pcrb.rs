//! Posterior Fisher information and PCRB for the target angle.

use nalgebra::{Matrix2, Matrix3};
use rand_distr::{Distribution, StandardNormal};

use crate::design::{HybridDesign, RxCombiner};
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, trace_prod_re, CMat, C64};
use crate::model::{
    steering_unchecked, stream_rng, streams, ArrayConfig, Scenario, THETA_MAX, THETA_MIN,
};
use crate::quadrature::{prior_fisher_theta, QuadratureGrid, SteeringTable};

/// Posterior FIM blocks for ζ = (θ, Re α, Im α).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pfim {
    pub j_theta_theta: f64,
    pub j_theta_alpha: [f64; 2],
    pub j_alpha_alpha: Matrix2<f64>,
    pub f_p_theta: f64,
    pub f_p_alpha: Matrix2<f64>,
}

impl Pfim {
    pub fn matrix(&self) -> Matrix3<f64> {
        let ja = &self.j_alpha_alpha + &self.f_p_alpha;
        Matrix3::new(
            self.j_theta_theta + self.f_p_theta,
            self.j_theta_alpha[0],
            self.j_theta_alpha[1],
            self.j_theta_alpha[0],
            ja[(0, 0)],
            ja[(0, 1)],
            self.j_theta_alpha[1],
            ja[(1, 0)],
            ja[(1, 1)],
        )
    }

    /// [F^{-1}]_{11} through the full 3×3 inverse.
    pub fn pcrb_full_inverse(&self) -> Result<f64> {
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite("PFIM is singular".into()))?;
        Ok(inv[(0, 0)])
    }
}

/// PCRB of θ. Uses the scalar form when the cross block vanishes, else a Schur complement.
pub fn pcrb_theta(pfim: &Pfim) -> Result<f64> {
    let ftt = pfim.f_p_theta + pfim.j_theta_theta;
    let schur = if pfim.j_theta_alpha == [0.0, 0.0] {
        ftt
    } else {
        let ja = pfim.j_alpha_alpha + pfim.f_p_alpha;
        let inv = ja
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite("alpha block is singular".into()))?;
        let c = nalgebra::Vector2::new(pfim.j_theta_alpha[0], pfim.j_theta_alpha[1]);
        ftt - c.dot(&(inv * c))
    };
    if !(schur > 0.0) || !schur.is_finite() {
        return Err(Error::NotPositiveDefinite("theta information is not positive".into()));
    }
    Ok(1.0 / schur)
}

/// Cached integration data for one scenario: steering table, prior Fisher term, scales.
#[derive(Debug, Clone)]
pub struct SensingModel {
    pub table: SteeringTable,
    pub f_p_theta: f64,
    pub gamma: f64,
    /// 2 L / σ_S²
    pub obs_scale: f64,
    pub arrays: ArrayConfig,
}

impl SensingModel {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let grid = QuadratureGrid::for_prior(&scenario.angle_prior, scenario.quadrature_points)?;
        let table = SteeringTable::new(&scenario.arrays, &scenario.angle_prior, &grid);
        let f_p_theta = prior_fisher_theta(&scenario.angle_prior, &grid)?;
        Ok(Self::with_table(scenario, table, f_p_theta))
    }

    /// Model whose integrals run over a caller-supplied table.
    pub fn with_table(scenario: &Scenario, table: SteeringTable, f_p_theta: f64) -> Self {
        SensingModel {
            table,
            f_p_theta,
            gamma: scenario.reflection.gamma,
            obs_scale: 2.0 * scenario.symbols as f64 / scenario.noise_sense,
            arrays: scenario.arrays,
        }
    }

    /// (A1, A2) for a receive combiner.
    pub fn a_matrices(&self, rx: &RxCombiner) -> Result<(CMat, CMat)> {
        self.table.a_matrices(&rx.matrix())
    }

    pub fn a1(&self, rx: &RxCombiner) -> Result<CMat> {
        Ok(self.a_matrices(rx)?.0)
    }

    pub fn b_tilde(&self, x: &CMat) -> Result<CMat> {
        self.table.b_matrix(x)
    }

    /// Coefficient κ with J_θθ = κ tr(A1 X) for a receiver of noise scale c_w.
    pub fn theta_gain(&self, noise_scale: f64) -> f64 {
        self.obs_scale * self.gamma / noise_scale
    }

    /// PCRB from a precomputed tr(A1 X).
    pub fn pcrb_from_trace(&self, trace_a1x: f64, noise_scale: f64) -> f64 {
        1.0 / (self.f_p_theta + self.theta_gain(noise_scale) * trace_a1x.max(0.0))
    }

    pub fn pfim(&self, design: &HybridDesign) -> Result<Pfim> {
        let x = design.tx_covariance_sum();
        if x.nrows() != self.arrays.n_tx {
            return Err(Error::Dimension("design does not match the transmit array".into()));
        }
        if design.rx.n_rx() != self.arrays.n_rx {
            return Err(Error::Dimension("design does not match the receive array".into()));
        }
        let (a1, a2) = self.a_matrices(&design.rx)?;
        let cw = design.rx.noise_scale();
        let jtt = self.theta_gain(cw) * trace_prod_re(&a1, &x).max(0.0);
        let jaa = self.obs_scale / cw * trace_prod_re(&a2, &x).max(0.0);
        Ok(Pfim {
            j_theta_theta: jtt,
            j_theta_alpha: [0.0, 0.0],
            j_alpha_alpha: Matrix2::identity() * jaa,
            f_p_theta: self.f_p_theta,
            f_p_alpha: f_p_alpha(self.gamma),
        })
    }

    pub fn pcrb(&self, design: &HybridDesign) -> Result<f64> {
        let x = design.tx_covariance_sum();
        let a1 = self.a1(&design.rx)?;
        Ok(self.pcrb_from_trace(trace_prod_re(&a1, &x), design.rx.noise_scale()))
    }
}

/// Prior information on (Re α, Im α) for a circular Gaussian with E|α|² = γ.
pub fn f_p_alpha(gamma: f64) -> Matrix2<f64> {
    if gamma > 0.0 {
        Matrix2::identity() * (2.0 / gamma)
    } else {
        Matrix2::identity() * f64::INFINITY
    }
}

pub fn assemble_pfim(scenario: &Scenario, design: &HybridDesign) -> Result<Pfim> {
    design.validate(&scenario.arrays, scenario.power)?;
    if design.r_bb.len() != scenario.subcarriers {
        return Err(Error::Dimension("one digital covariance per subcarrier expected".into()));
    }
    SensingModel::new(scenario)?.pfim(design)
}

/// PCRB for a fully-connected DFT receiver through the receive-side form tr(B̃ W W^H).
pub fn pcrb_fully_connected(scenario: &Scenario, design: &HybridDesign) -> Result<f64> {
    let w = design.rx.matrix();
    let n_rx = scenario.arrays.n_rx as f64;
    let gram = w.adjoint() * &w;
    let dev = crate::linalg::max_abs(&(gram - CMat::identity(w.ncols(), w.ncols()) * C64::from(n_rx)));
    if dev > 1e-9 * n_rx {
        return Err(Error::Invalid(format!(
            "combiner columns are not orthogonal with norm² n_rx (deviation {dev:e})"
        )));
    }
    let model = SensingModel::new(scenario)?;
    let b = model.b_tilde(&design.tx_covariance_sum())?;
    let t = trace_prod_re(&b, &(&w * w.adjoint()));
    Ok(model.pcrb_from_trace(t, n_rx))
}

/// Monte-Carlo estimate of the observation FIM with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct OracleEstimate {
    /// Mean of the 3×3 observation information over sampled (θ, α).
    pub fim: Matrix3<f64>,
    pub std_err: Matrix3<f64>,
    pub f_p_theta: f64,
    pub f_p_theta_std_err: f64,
    pub samples: usize,
}

impl OracleEstimate {
    pub fn j_theta_theta(&self) -> f64 {
        self.fim[(0, 0)]
    }
}

/// Sample-based evaluation of the observation FIM by finite differences of the
/// noiseless echo; independent of the quadrature path.
pub fn fim_oracle(
    scenario: &Scenario,
    design: &HybridDesign,
    mc_samples: usize,
    fd_step: f64,
    seed: u64,
) -> Result<OracleEstimate> {
    if mc_samples < 1000 {
        return Err(Error::Invalid("oracle needs at least 1000 samples".into()));
    }
    if !(fd_step > 0.0 && fd_step <= 1e-3) {
        return Err(Error::Invalid("finite-difference step must be in (0, 1e-3]".into()));
    }
    let arrays = &scenario.arrays;
    let w = design.rx.matrix();
    let wh = w.adjoint();
    let cw = design.rx.noise_scale();
    // stacked square-root factor of Σ_k X_k
    let v = design.v_rf.matrix();
    let blocks: Vec<CMat> = design.r_bb.iter().map(|r| &v * psd_factor(r, 0.0)).collect();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut f = CMat::zeros(arrays.n_tx, cols.max(1));
    let mut at = 0;
    for b in &blocks {
        f.view_mut((0, at), (arrays.n_tx, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    let l = scenario.symbols as f64;
    let scale = 2.0 * l / (cw * scenario.noise_sense);
    let gamma = scenario.reflection.gamma;
    let prior = &scenario.angle_prior;

    let mut rng = stream_rng(seed, streams::ORACLE);
    let mut sum = [0.0f64; 6];
    let mut sum_sq = [0.0f64; 6];
    let mut fp_sum = 0.0;
    let mut fp_sq = 0.0;
    let echo = |t: f64| -> CMat {
        let a = steering_unchecked(arrays.n_tx, t);
        let b = steering_unchecked(arrays.n_rx, t);
        let wb = &wh * b;
        &wb * (a.adjoint() * &f)
    };
    for _ in 0..mc_samples {
        let theta = prior.sample(&mut rng);
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        let alpha = C64::new(re, im) * (gamma / 2.0).sqrt();
        let inside = (THETA_MIN..THETA_MAX).contains(&theta);
        let mut vals = [0.0f64; 6];
        let mut fp = 0.0;
        if inside {
            let g = (echo(theta + fd_step) - echo(theta - fd_step)) / C64::from(2.0 * fd_step);
            let m = echo(theta);
            // derivatives of α·(W^H M F): θ → α G, Re α → M, Im α → jM
            let d_theta = &g * alpha;
            let ip = |x: &CMat, y: &CMat| -> C64 { x.iter().zip(y.iter()).map(|(p, q)| p.conj() * q).sum() };
            let tm = ip(&d_theta, &m);
            vals[0] = scale * d_theta.norm_squared(); // θθ
            vals[1] = scale * tm.re; // θ,Re α
            vals[2] = scale * (tm * C64::new(0.0, 1.0)).re; // θ,Im α
            vals[3] = scale * m.norm_squared(); // Re,Re
            vals[4] = 0.0; // Re,Im: Re(j‖m‖²) = 0
            vals[5] = vals[3]; // Im,Im
            let s = prior.score(theta);
            fp = s * s;
        }
        for i in 0..6 {
            sum[i] += vals[i];
            sum_sq[i] += vals[i] * vals[i];
        }
        fp_sum += fp;
        fp_sq += fp * fp;
    }
    let n = mc_samples as f64;
    let mean = |s: f64| s / n;
    let se = |s: f64, sq: f64| {
        let m = s / n;
        ((sq / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    };
    let idx = [(0, 0, 0), (0, 1, 1), (0, 2, 2), (1, 1, 3), (1, 2, 4), (2, 2, 5)];
    let mut fim = Matrix3::zeros();
    let mut err = Matrix3::zeros();
    for &(i, j, k) in &idx {
        fim[(i, j)] = mean(sum[k]);
        fim[(j, i)] = fim[(i, j)];
        err[(i, j)] = se(sum[k], sum_sq[k]);
        err[(j, i)] = err[(i, j)];
    }
    Ok(OracleEstimate {
        fim,
        std_err: err,
        f_p_theta: mean(fp_sum),
        f_p_theta_std_err: se(fp_sum, fp_sq),
        samples: mc_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pfim(jtt: f64, fp: f64) -> Pfim {
        Pfim {
            j_theta_theta: jtt,
            j_theta_alpha: [0.0, 0.0],
            j_alpha_alpha: Matrix2::identity(),
            f_p_theta: fp,
            f_p_alpha: Matrix2::identity() * 2.0,
        }
    }

    #[test]
    fn scalar_examples() {
        assert!((pcrb_theta(&pfim(0.0, 100.0)).unwrap() - 0.01).abs() < 1e-15);
        assert!((pcrb_theta(&pfim(300.0, 100.0)).unwrap() - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn zero_information_is_an_error() {
        assert!(pcrb_theta(&pfim(0.0, 0.0)).is_err());
    }
}
