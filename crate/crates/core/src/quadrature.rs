//! Prior-weighted integration over the target angle.
//!
//! Every integral of the form ∫ f(θ) p(θ) dθ is evaluated with a composite
//! Gauss-Legendre rule whose panels cluster around the mixture components.

use crate::design::RxCombiner;
use crate::error::{Error, Result};
use crate::linalg::{hermitize, CMat, CVec, C64};
use crate::model::{
    steering_derivative_unchecked, steering_unchecked, ArrayConfig, GmmAnglePrior, THETA_MAX,
    THETA_MIN,
};

/// Number of global panels laid over the whole domain.
const GLOBAL_PANELS: usize = 32;
/// Component panels span mean ± this many standard deviations.
const SIGMA_SPAN: i32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub domain: (f64, f64),
}

/// Gauss-Legendre nodes and weights on [-1, 1] (ascending nodes).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

impl QuadratureGrid {
    /// Composite rule over arbitrary sorted breakpoints with `per_panel` nodes each.
    pub fn composite(breaks: &[f64], per_panel: usize) -> Self {
        let (x, w) = gauss_legendre(per_panel);
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * per_panel);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * xi);
                weights.push(half * wi);
            }
        }
        QuadratureGrid {
            nodes,
            weights,
            domain: (breaks[0], *breaks.last().unwrap()),
        }
    }

    /// Panels adapted to a mixture prior over [-π/2, π/2] with roughly `total` nodes.
    pub fn for_prior(prior: &GmmAnglePrior, total: usize) -> Result<Self> {
        if total < 2 {
            return Err(Error::Invalid("quadrature needs at least 2 points".into()));
        }
        let (lo, hi) = (THETA_MIN, THETA_MAX);
        let mut br: Vec<f64> = (0..=GLOBAL_PANELS)
            .map(|i| lo + (hi - lo) * i as f64 / GLOBAL_PANELS as f64)
            .collect();
        for c in prior.components() {
            let s = c.variance.sqrt();
            for k in -SIGMA_SPAN..=SIGMA_SPAN {
                let t = c.mean + k as f64 * s;
                if t > lo && t < hi {
                    br.push(t);
                }
            }
        }
        br.sort_by(f64::total_cmp);
        let min_gap = 1e-13 * (hi - lo);
        let mut merged: Vec<f64> = Vec::with_capacity(br.len());
        for t in br {
            match merged.last() {
                Some(&last) if t - last <= min_gap => {}
                _ => merged.push(t),
            }
        }
        // the domain end must survive deduplication
        *merged.last_mut().unwrap() = hi;
        let panels = merged.len() - 1;
        let per_panel = total.div_ceil(panels).max(2);
        Ok(Self::composite(&merged, per_panel))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

/// E[(d/dθ ln p(θ))²] over the integration domain.
pub fn prior_fisher_theta(prior: &GmmAnglePrior, grid: &QuadratureGrid) -> Result<f64> {
    let mut acc = 0.0;
    for (&t, &w) in grid.nodes.iter().zip(&grid.weights) {
        let p = prior.density(t);
        if p == 0.0 {
            continue;
        }
        let s = prior.score(t);
        let term = w * p * s * s;
        if !term.is_finite() {
            return Err(Error::NonFinite("prior Fisher integrand".into()));
        }
        acc += term;
    }
    Ok(acc)
}

/// Steering vectors and derivatives tabulated at the quadrature nodes, with
/// the node weights already multiplied by the prior density.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    pub nodes: Vec<f64>,
    pub mass: Vec<f64>,
    pub a: Vec<CVec>,
    pub da: Vec<CVec>,
    pub b: Vec<CVec>,
    pub db: Vec<CVec>,
    pub n_tx: usize,
    pub n_rx: usize,
}

impl SteeringTable {
    pub fn new(arrays: &ArrayConfig, prior: &GmmAnglePrior, grid: &QuadratureGrid) -> Self {
        let mut nodes = Vec::new();
        let mut mass = Vec::new();
        for (&t, &w) in grid.nodes.iter().zip(&grid.weights) {
            let m = w * prior.density(t);
            // nodes whose weight underflows contribute nothing
            if m > 0.0 {
                nodes.push(t);
                mass.push(m);
            }
        }
        Self::from_points(arrays, &nodes, &mass)
    }

    /// Table for an explicit set of (angle, weight) pairs.
    pub fn from_points(arrays: &ArrayConfig, nodes: &[f64], mass: &[f64]) -> Self {
        let (nt, nr) = (arrays.n_tx, arrays.n_rx);
        SteeringTable {
            nodes: nodes.to_vec(),
            mass: mass.to_vec(),
            a: nodes.iter().map(|&t| steering_unchecked(nt, t)).collect(),
            da: nodes.iter().map(|&t| steering_derivative_unchecked(nt, t)).collect(),
            b: nodes.iter().map(|&t| steering_unchecked(nr, t)).collect(),
            db: nodes.iter().map(|&t| steering_derivative_unchecked(nr, t)).collect(),
            n_tx: nt,
            n_rx: nr,
        }
    }

    /// A1 = ∫ Ṁ^H W W^H Ṁ p dθ and A2 = ∫ M^H W W^H M p dθ.
    pub fn a_matrices(&self, w: &CMat) -> Result<(CMat, CMat)> {
        if w.nrows() != self.n_rx {
            return Err(Error::Dimension(format!(
                "combiner has {} rows, receive array has {}",
                w.nrows(),
                self.n_rx
            )));
        }
        let wh = w.adjoint();
        let n = self.n_tx;
        let mut a1 = CMat::zeros(n, n);
        let mut a2 = CMat::zeros(n, n);
        for k in 0..self.mass.len() {
            let u1 = &wh * &self.db[k];
            let u2 = &wh * &self.b[k];
            let m = self.mass[k];
            let c11 = u1.norm_squared() * m;
            let c12 = u1.dotc(&u2) * m; // u1^H u2
            let c22 = u2.norm_squared() * m;
            accumulate_pair(&mut a1, &self.a[k], &self.da[k], c11, c12, c22);
            rank1_update(&mut a2, &self.a[k], c22);
        }
        Ok((hermitize(&a1), hermitize(&a2)))
    }

    /// B̃ = ∫ Ṁ X Ṁ^H p dθ for a transmit covariance X (N_T × N_T).
    pub fn b_matrix(&self, x: &CMat) -> Result<CMat> {
        if x.shape() != (self.n_tx, self.n_tx) {
            return Err(Error::Dimension("transmit covariance size".into()));
        }
        let n = self.n_rx;
        let mut out = CMat::zeros(n, n);
        for k in 0..self.mass.len() {
            let xa = x * &self.a[k];
            let xda = x * &self.da[k];
            let m = self.mass[k];
            let s11 = self.a[k].dotc(&xa).re * m; // a^H X a
            let s12 = self.a[k].dotc(&xda) * m; // a^H X ȧ
            let s22 = self.da[k].dotc(&xda).re * m; // ȧ^H X ȧ
            accumulate_pair(&mut out, &self.db[k], &self.b[k], s11, s12, s22);
        }
        Ok(hermitize(&out))
    }
}

/// out += c11 x x^H + c12 x y^H + conj(c12) y x^H + c22 y y^H
fn accumulate_pair(out: &mut CMat, x: &CVec, y: &CVec, c11: f64, c12: C64, c22: f64) {
    let n = x.len();
    for j in 0..n {
        let xj = x[j].conj();
        let yj = y[j].conj();
        // column j: x (c11 x̄_j + c12 ȳ_j) + y (c̄12 x̄_j + c22 ȳ_j)
        let px = C64::from(c11) * xj + c12 * yj;
        let py = c12.conj() * xj + C64::from(c22) * yj;
        let mut col = out.column_mut(j);
        for i in 0..n {
            col[i] += x[i] * px + y[i] * py;
        }
    }
}

fn rank1_update(out: &mut CMat, x: &CVec, c: f64) {
    let n = x.len();
    for j in 0..n {
        let s = x[j].conj() * c;
        let mut col = out.column_mut(j);
        for i in 0..n {
            col[i] += x[i] * s;
        }
    }
}

/// Convenience wrapper returning (A1, A2) for a receive combiner descriptor.
pub fn compute_a_matrices(
    arrays: &ArrayConfig,
    prior: &GmmAnglePrior,
    rx: &RxCombiner,
    grid: &QuadratureGrid,
) -> Result<(CMat, CMat)> {
    let table = SteeringTable::new(arrays, prior, grid);
    table.a_matrices(&rx.matrix())
}

/// B̃ (single covariance) or B̄ (sum over a list of subcarrier covariances).
pub fn compute_b_matrix(
    arrays: &ArrayConfig,
    prior: &GmmAnglePrior,
    v_rf: &CMat,
    r_bb: &[CMat],
    grid: &QuadratureGrid,
) -> Result<CMat> {
    let mut x = CMat::zeros(arrays.n_tx, arrays.n_tx);
    for r in r_bb {
        if r.nrows() != v_rf.ncols() {
            return Err(Error::Dimension("digital covariance vs analog columns".into()));
        }
        x += v_rf * r * v_rf.adjoint();
    }
    SteeringTable::new(arrays, prior, grid).b_matrix(&x)
}
