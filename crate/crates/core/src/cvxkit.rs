//! Eigen-solvers, a log-barrier QCQP solver and the rate-constrained
//! trace-maximization used for digital beamforming.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{herm_eig, hermitize, log_det_hpd, max_abs, trace_prod_re, CMat, CVec, C64};

// ---------------------------------------------------------------------------
// eigen problems

/// Largest generalized eigenpair of A x = λ B x with x^H B x = 1.
pub fn top_generalized_eig(a: &CMat, b: &CMat) -> Result<(f64, CVec)> {
    let n = a.nrows();
    if a.shape() != (n, n) || b.shape() != (n, n) || n == 0 {
        return Err(Error::Dimension("generalized eigenproblem needs square matrices of equal size".into()));
    }
    let eb = herm_eig(b);
    let scale = eb.values[0].abs().max(f64::MIN_POSITIVE);
    if eb.values[n - 1] <= 1e-12 * scale.max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "B has smallest eigenvalue {:e}",
            eb.values[n - 1]
        )));
    }
    let chol = hermitize(b)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("B".into()))?;
    let l = chol.l();
    // C = L^{-1} A L^{-H}
    let linv_a = l
        .solve_lower_triangular(&hermitize(a))
        .ok_or_else(|| Error::NotPositiveDefinite("B".into()))?;
    let cmat = l
        .solve_lower_triangular(&linv_a.adjoint())
        .ok_or_else(|| Error::NotPositiveDefinite("B".into()))?;
    let ec = herm_eig(&hermitize(&cmat.adjoint()));
    let y = ec.vectors.column(0).into_owned();
    let x = l
        .adjoint()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::NotPositiveDefinite("B".into()))?;
    let mut x = x;
    crate::linalg::normalize_phase(&mut x);
    let norm = x.dotc(&(b * &x)).re.sqrt();
    Ok((ec.values[0], x / C64::from(norm)))
}

// ---------------------------------------------------------------------------
// convex QCQP

/// Quadratic part x^T P x of a constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadForm {
    Zero,
    /// Dense PSD block acting on coordinates `start .. start + mat.nrows()`.
    Dense { start: usize, mat: DMatrix<f64> },
    /// Diagonal PSD entries (index, coefficient ≥ 0).
    Diagonal(Vec<(usize, f64)>),
}

/// Constraint x^T P x + q^T x + r ≤ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub quad: QuadForm,
    /// Sparse linear part (index, coefficient).
    pub linear: Vec<(usize, f64)>,
    pub offset: f64,
}

impl QuadConstraint {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.offset;
        for &(i, q) in &self.linear {
            v += q * x[i];
        }
        match &self.quad {
            QuadForm::Zero => {}
            QuadForm::Dense { start, mat } => {
                let k = mat.nrows();
                let xs = x.rows(*start, k);
                v += xs.dot(&(mat * xs));
            }
            QuadForm::Diagonal(d) => {
                for &(i, p) in d {
                    v += p * x[i] * x[i];
                }
            }
        }
        v
    }

    /// Gradient as sparse (index, value) pairs; duplicates are summed by the caller.
    fn gradient(&self, x: &DVector<f64>, out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.extend(self.linear.iter().copied());
        match &self.quad {
            QuadForm::Zero => {}
            QuadForm::Dense { start, mat } => {
                let k = mat.nrows();
                let px = mat * x.rows(*start, k);
                for i in 0..k {
                    out.push((start + i, 2.0 * px[i]));
                }
            }
            QuadForm::Diagonal(d) => {
                for &(i, p) in d {
                    out.push((i, 2.0 * p * x[i]));
                }
            }
        }
        out.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
        for &(i, g) in out.iter() {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += g,
                _ => merged.push((i, g)),
            }
        }
        *out = merged;
    }

    fn add_hessian(&self, h: &mut DMatrix<f64>, weight: f64) {
        match &self.quad {
            QuadForm::Zero => {}
            QuadForm::Dense { start, mat } => {
                let k = mat.nrows();
                let mut view = h.view_mut((*start, *start), (k, k));
                view += mat * (2.0 * weight);
            }
            QuadForm::Diagonal(d) => {
                for &(i, p) in d {
                    h[(i, i)] += 2.0 * p * weight;
                }
            }
        }
    }

    fn shift_indices(&self, map: impl Fn(usize) -> usize) -> QuadConstraint {
        let quad = match &self.quad {
            QuadForm::Zero => QuadForm::Zero,
            QuadForm::Dense { start, mat } => {
                // dense blocks must stay contiguous under the map
                QuadForm::Dense { start: map(*start), mat: mat.clone() }
            }
            QuadForm::Diagonal(d) => QuadForm::Diagonal(d.iter().map(|&(i, p)| (map(i), p)).collect()),
        };
        QuadConstraint {
            quad,
            linear: self.linear.iter().map(|&(i, q)| (map(i), q)).collect(),
            offset: self.offset,
        }
    }
}

/// minimize c^T x subject to convex quadratic constraints and optional x_j ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexQcqp {
    pub dim: usize,
    pub objective: DVector<f64>,
    pub constraints: Vec<QuadConstraint>,
    /// Coordinates constrained to be nonnegative.
    pub nonneg: Vec<usize>,
    /// Coordinates `head_dim..dim` may be eliminated by a Schur complement when
    /// the Hessian restricted to them is diagonal.
    pub head_dim: usize,
    pub start: Option<DVector<f64>>,
}

impl ConvexQcqp {
    pub fn new(objective: DVector<f64>) -> Self {
        let dim = objective.len();
        ConvexQcqp {
            dim,
            objective,
            constraints: vec![],
            nonneg: vec![],
            head_dim: dim,
            start: None,
        }
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut v = 0.0f64;
        for c in &self.constraints {
            v = v.max(c.value(x));
        }
        for &j in &self.nonneg {
            v = v.max(-x[j]);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    IterationLimit,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub x: DVector<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolverStatus,
}

impl SolverReport {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }
}

const MAX_NEWTON: usize = 2000;
const BARRIER_GROWTH: f64 = 30.0;

struct Barrier<'a> {
    p: &'a ConvexQcqp,
    grad_buf: Vec<(usize, f64)>,
}

impl<'a> Barrier<'a> {
    /// t c^T x − Σ log(−g_i) − Σ log x_j, or None outside the domain.
    fn value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let mut v = t * self.p.objective.dot(x);
        for c in &self.p.constraints {
            let g = c.value(x);
            if !(g < 0.0) {
                return None;
            }
            v -= (-g).ln();
        }
        for &j in &self.p.nonneg {
            if !(x[j] > 0.0) {
                return None;
            }
            v -= x[j].ln();
        }
        Some(v)
    }

    fn grad_hess(&mut self, x: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.p.dim;
        let mut grad = &self.p.objective * t;
        let mut hess = DMatrix::zeros(n, n);
        for c in &self.p.constraints {
            let g = c.value(x);
            let inv = 1.0 / (-g);
            c.gradient(x, &mut self.grad_buf);
            for &(i, gi) in &self.grad_buf {
                grad[i] += gi * inv;
            }
            let inv2 = inv * inv;
            for &(i, gi) in &self.grad_buf {
                for &(j, gj) in &self.grad_buf {
                    hess[(i, j)] += gi * gj * inv2;
                }
            }
            c.add_hessian(&mut hess, inv);
        }
        for &j in &self.p.nonneg {
            grad[j] -= 1.0 / x[j];
            hess[(j, j)] += 1.0 / (x[j] * x[j]);
        }
        (grad, hess)
    }
}

/// Solve H d = −g, eliminating the trailing block when it is diagonal.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, head: usize) -> Option<DVector<f64>> {
    let n = h.nrows();
    let tail_diag = head < n
        && (head..n).all(|i| (head..n).all(|j| i == j || h[(i, j)] == 0.0))
        && (head..n).all(|i| h[(i, i)] > 0.0);
    if !tail_diag {
        return dense_solve(h.clone(), -g);
    }
    let mut s = h.view((0, 0), (head, head)).into_owned();
    let mut rhs = -g.rows(0, head).into_owned();
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n - head);
    for t in head..n {
        let d = h[(t, t)];
        let nz: Vec<(usize, f64)> = (0..head).filter(|&i| h[(i, t)] != 0.0).map(|i| (i, h[(i, t)])).collect();
        for &(i, hi) in &nz {
            rhs[i] += hi * g[t] / d;
            for &(j, hj) in &nz {
                s[(i, j)] -= hi * hj / d;
            }
        }
        cols.push(nz);
    }
    let dh = dense_solve(s, rhs)?;
    let mut out = DVector::zeros(n);
    out.rows_mut(0, head).copy_from(&dh);
    for (k, t) in (head..n).enumerate() {
        let mut acc = -g[t];
        for &(i, hi) in &cols[k] {
            acc -= hi * dh[i];
        }
        out[t] = acc / h[(t, t)];
    }
    Some(out)
}

fn dense_solve(mut h: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    for attempt in 0..6 {
        if let Some(ch) = h.clone().cholesky() {
            return Some(ch.solve(&rhs));
        }
        let reg = scale * 1e-14 * 100f64.powi(attempt);
        for i in 0..n {
            h[(i, i)] += reg;
        }
    }
    None
}

struct BarrierRun {
    x: DVector<f64>,
    t: f64,
    iterations: usize,
    status: SolverStatus,
}

enum Centering {
    Done,
    Early,
    Stop(SolverStatus),
}

/// Damped Newton on the barrier at fixed t until the decrement drops below `thresh`.
fn center(
    b: &mut Barrier<'_>,
    x: &mut DVector<f64>,
    t: f64,
    thresh: f64,
    max_steps: usize,
    iters: &mut usize,
    stop_early: &dyn Fn(&DVector<f64>) -> bool,
) -> Centering {
    for _ in 0..max_steps {
        if *iters >= MAX_NEWTON {
            return Centering::Stop(SolverStatus::IterationLimit);
        }
        *iters += 1;
        let (g, h) = b.grad_hess(x, t);
        let Some(dx) = newton_direction(&h, &g, b.p.head_dim) else {
            return Centering::Stop(SolverStatus::NumericalFailure);
        };
        let dec = -g.dot(&dx);
        if !dec.is_finite() {
            return Centering::Stop(SolverStatus::NumericalFailure);
        }
        let f0 = b.value(x, t).unwrap_or(f64::INFINITY);
        // below the rounding floor of the barrier value further steps are noise
        let floor = 1e-13 * (1.0 + f0.abs());
        if dec / 2.0 <= thresh.max(floor) {
            return Centering::Done;
        }
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let xn = &*x + &dx * s;
            if let Some(fv) = b.value(&xn, t) {
                if fv <= f0 - 0.25 * s * dec {
                    *x = xn;
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !moved {
            return Centering::Done;
        }
        if stop_early(x) {
            return Centering::Early;
        }
    }
    Centering::Done
}

/// Barrier path following from a strictly feasible start.
fn barrier_solve(
    p: &ConvexQcqp,
    x0: DVector<f64>,
    tol: f64,
    stop_early: &dyn Fn(&DVector<f64>) -> bool,
) -> BarrierRun {
    let m = (p.constraints.len() + p.nonneg.len()).max(1) as f64;
    let mut b = Barrier { p, grad_buf: Vec::new() };
    let mut x = x0;
    let obj0 = p.objective.dot(&x).abs();
    let mut t = (m / (1.0 + obj0)).max(1e-10);
    let mut iters = 0;
    loop {
        match center(&mut b, &mut x, t, 1e-11, 200, &mut iters, stop_early) {
            Centering::Done => {}
            Centering::Early => {
                return BarrierRun { x, t, iterations: iters, status: SolverStatus::Converged }
            }
            Centering::Stop(status) => return BarrierRun { x, t, iterations: iters, status },
        }
        let obj = p.objective.dot(&x);
        if m / t <= tol * obj.abs().max(1.0) {
            // polish the last centering so the implied multipliers are accurate
            if let Centering::Stop(status) = center(&mut b, &mut x, t, 1e-24, 30, &mut iters, &|_| false) {
                if status != SolverStatus::IterationLimit {
                    return BarrierRun { x, t, iterations: iters, status };
                }
            }
            return BarrierRun { x, t, iterations: iters, status: SolverStatus::Converged };
        }
        t *= BARRIER_GROWTH;
    }
}

fn strictly_feasible(p: &ConvexQcqp, x: &DVector<f64>) -> bool {
    p.constraints.iter().all(|c| c.value(x) < 0.0) && p.nonneg.iter().all(|&j| x[j] > 0.0)
}

/// Find a strictly feasible point by minimizing a shared constraint offset s.
fn phase_one(p: &ConvexQcqp, x0: &DVector<f64>, tol: f64) -> Option<(DVector<f64>, usize)> {
    let n = p.dim;
    let hd = p.head_dim;
    // s sits right after the head block so the tail stays separable
    let map = |i: usize| if i < hd { i } else { i + 1 };
    let mut x = x0.clone();
    for &j in &p.nonneg {
        if !(x[j] > 0.0) {
            x[j] = 1.0;
        }
    }
    let gmax = p.constraints.iter().map(|c| c.value(&x)).fold(f64::NEG_INFINITY, f64::max);
    let scale = p.constraints.iter().map(|c| c.offset.abs()).fold(1.0, f64::max);
    let s0 = gmax.max(0.0) + 1e-3 * scale + 1.0;
    let mut obj = DVector::zeros(n + 1);
    obj[hd] = 1.0;
    let mut aug = ConvexQcqp::new(obj);
    aug.head_dim = hd + 1;
    for c in &p.constraints {
        let mut cc = c.shift_indices(map);
        cc.linear.push((hd, -1.0));
        aug.constraints.push(cc);
    }
    // keep s bounded below so the auxiliary problem has a minimizer
    aug.constraints.push(QuadConstraint {
        quad: QuadForm::Zero,
        linear: vec![(hd, -1.0)],
        offset: -scale,
    });
    aug.nonneg = p.nonneg.iter().map(|&j| map(j)).collect();
    let mut xa = DVector::zeros(n + 1);
    for i in 0..n {
        xa[map(i)] = x[i];
    }
    xa[hd] = s0;
    let target = -1e-9 * scale;
    let run = barrier_solve(&aug, xa, tol.min(1e-10), &|z: &DVector<f64>| z[hd] < target);
    let xs = run.x;
    if xs[hd] >= target {
        return None;
    }
    let mut out = DVector::zeros(n);
    for i in 0..n {
        out[i] = xs[map(i)];
    }
    if strictly_feasible(p, &out) {
        Some((out, run.iterations))
    } else {
        None
    }
}

/// Stationarity residual ‖c + Σ λ_i ∇g_i − Σ ν_j e_j‖∞ and complementarity Σ λ_i |g_i|.
///
/// Multipliers start from the central-path estimates and are re-fitted by least
/// squares on the active set, since −g_i near the boundary carries cancellation error.
fn kkt_terms(p: &ConvexQcqp, x: &DVector<f64>, t: f64) -> (f64, f64) {
    let n = p.dim;
    let mut grads: Vec<DVector<f64>> = Vec::new();
    let mut slack: Vec<f64> = Vec::new();
    let mut lam0: Vec<f64> = Vec::new();
    let mut buf = Vec::new();
    for c in &p.constraints {
        let g = c.value(x);
        c.gradient(x, &mut buf);
        let mut v = DVector::zeros(n);
        for &(i, gi) in &buf {
            v[i] += gi;
        }
        grads.push(v);
        slack.push((-g).max(0.0));
        lam0.push(1.0 / (t * (-g).max(f64::MIN_POSITIVE)));
    }
    for &j in &p.nonneg {
        let mut v = DVector::zeros(n);
        v[j] = -1.0;
        grads.push(v);
        slack.push(x[j].max(0.0));
        lam0.push(1.0 / (t * x[j].max(f64::MIN_POSITIVE)));
    }
    let residual = |lam: &[f64]| -> (f64, f64) {
        let mut r = p.objective.clone();
        let mut gap = 0.0;
        for ((g, l), s) in grads.iter().zip(lam).zip(&slack) {
            r += g * *l;
            gap += l * s;
        }
        (r.amax(), gap)
    };
    let base = residual(&lam0);
    let lmax = lam0.iter().copied().fold(0.0, f64::max);
    let active: Vec<usize> = (0..lam0.len()).filter(|&i| lam0[i] > 1e-8 * lmax).collect();
    if active.is_empty() || active.len() > n {
        return base;
    }
    let mut a = DMatrix::zeros(n, active.len());
    for (col, &i) in active.iter().enumerate() {
        a.set_column(col, &grads[i]);
    }
    let svd = a.svd(true, true);
    let Ok(sol) = svd.solve(&(-&p.objective), 1e-14) else {
        return base;
    };
    let mut lam = lam0.clone();
    for (col, &i) in active.iter().enumerate() {
        lam[i] = sol[col].max(0.0);
    }
    let refit = residual(&lam);
    if refit.0 < base.0 { refit } else { base }
}

/// Log-barrier interior-point solve. Violation and KKT residual in the report are
/// recomputed at the returned point.
pub fn solve_convex_qcqp(problem: &ConvexQcqp, tol: f64) -> SolverReport {
    let p = problem;
    let x_start = p.start.clone().unwrap_or_else(|| DVector::zeros(p.dim));
    let fail = |x: DVector<f64>, status, iterations| SolverReport {
        objective: p.objective.dot(&x),
        max_violation: p.max_violation(&x),
        kkt_residual: f64::INFINITY,
        x,
        iterations,
        status,
    };
    let (x0, pre_iters) = if strictly_feasible(p, &x_start) {
        (x_start, 0)
    } else {
        match phase_one(p, &x_start, tol) {
            Some(v) => v,
            None => return fail(x_start, SolverStatus::Infeasible, 0),
        }
    };
    let run = barrier_solve(p, x0, tol, &|_| false);
    let x = run.x;
    let t = run.t;
    let (stat, gap) = kkt_terms(p, &x, t);
    let obj = p.objective.dot(&x);
    let cscale = p.objective.amax().max(1.0);
    let kkt = (stat / cscale).max(gap / obj.abs().max(1.0));
    SolverReport {
        objective: obj,
        max_violation: p.max_violation(&x).max(0.0),
        kkt_residual: kkt,
        x,
        iterations: run.iterations + pre_iters,
        status: run.status,
    }
}

// ---------------------------------------------------------------------------
// scalar root finding

/// Brent's method on [a, b] with f(a), f(b) of opposite sign.
pub(crate) fn brent(
    f: &mut dyn FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
    max_iter: usize,
) -> (f64, f64, f64, f64) {
    // returns the final bracket (a, fa, b, fb) with b the best estimate
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb == 0.0 {
            break;
        }
        if fa.signum() == fb.signum() {
            a = c;
            fa = fc;
            d = b - a;
            e = d;
        }
        if fa.abs() < fb.abs() {
            c = b;
            b = a;
            a = c;
            fc = fb;
            fb = fa;
            fa = fc;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (a - b);
        if m.abs() <= tol {
            break;
        }
        if e.abs() >= tol && fc.abs() > fb.abs() {
            let s = fb / fc;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fc / fa;
                let r = fb / fa;
                p = s * (2.0 * m * qq * (qq - r) - (b - c) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        c = b;
        fc = fb;
        b += if d.abs() > tol { d } else { tol * m.signum() };
        fb = f(b);
    }
    (a, fa, b, fb)
}

// ---------------------------------------------------------------------------
// water-filling and the digital beamforming problem

/// Powers p_i = (ν − 1/g_i)^+ with Σ p_i = P for channel gains g_i ≥ 0.
pub fn water_fill(gains: &[f64], power: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    idx.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; gains.len()];
    if idx.is_empty() || power <= 0.0 {
        return out;
    }
    let mut active = idx.len();
    let mut nu = 0.0;
    while active > 0 {
        let inv_sum: f64 = idx[..active].iter().map(|&i| 1.0 / gains[i]).sum();
        nu = (power + inv_sum) / active as f64;
        if nu > 1.0 / gains[idx[active - 1]] {
            break;
        }
        active -= 1;
    }
    for &i in &idx[..active] {
        out[i] = (nu - 1.0 / gains[i]).max(0.0);
    }
    out
}

/// Average rate (nats) (1/K) Σ_k log det(I + H_k R_k H_k^H / σ²).
pub fn average_rate(h: &[CMat], r: &[CMat], noise: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (hk, rk) in h.iter().zip(r) {
        let n = hk.nrows();
        let m = CMat::identity(n, n) + hk * rk * hk.adjoint() / C64::from(noise);
        acc += log_det_hpd(&m)?;
    }
    Ok(acc / h.len() as f64)
}

/// Fully-digital capacity (nats, averaged over subcarriers) under a total
/// power budget, by water-filling over every channel eigenmode.
pub fn fully_digital_capacity(h: &[CMat], power: f64, noise: f64) -> f64 {
    let mut gains = Vec::new();
    for hk in h {
        let e = herm_eig(&hermitize(&(hk.adjoint() * hk)));
        gains.extend(e.values.iter().map(|v| v.max(0.0) / noise));
    }
    let p = water_fill(&gains, power);
    gains.iter().zip(&p).map(|(g, pi)| (1.0 + g * pi).ln()).sum::<f64>() / h.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DigitalBranch {
    /// Rate target met by the sensing-optimal covariance.
    SensingOptimal,
    /// Both constraints active; solved by the two-multiplier dual.
    Dual,
    /// Capacity-achieving covariance (sensing term absent or target at capacity).
    Capacity,
}

/// Solution of the rate-constrained trace maximization.
#[derive(Debug, Clone)]
pub struct DigitalSolution {
    pub r_bb: Vec<CMat>,
    /// Multiplier of the rate constraint.
    pub beta: f64,
    /// Multiplier of the power constraint.
    pub mu: f64,
    pub rate: f64,
    pub power: f64,
    pub objective: f64,
    pub branch: DigitalBranch,
}

/// Problem data after whitening by the Gram matrix: R = T S T^H, tr(G R) = tr S.
struct Whitened {
    t: CMat,
    a: CMat,
    h: Vec<CMat>,
    a_vals: Vec<f64>,
    a_vecs: CMat,
}

fn whiten(a_eff: &CMat, g_eff: &CMat, h_eff: &[CMat]) -> Result<Whitened> {
    let n = g_eff.nrows();
    if g_eff.shape() != (n, n) || a_eff.shape() != (n, n) {
        return Err(Error::Dimension("A_eff and G_eff must be square and equal-sized".into()));
    }
    if h_eff.iter().any(|h| h.ncols() != n) {
        return Err(Error::Dimension("H_eff columns must match A_eff".into()));
    }
    let eg = herm_eig(g_eff);
    let gmax = eg.values[0];
    if !(gmax > 0.0) {
        return Err(Error::Invalid("Gram matrix is zero".into()));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| eg.values[i] > 1e-10 * gmax).collect();
    let mut t = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        t.set_column(j, &(eg.vectors.column(i) * C64::from(1.0 / eg.values[i].sqrt())));
    }
    let a = hermitize(&(t.adjoint() * a_eff * &t));
    let h: Vec<CMat> = h_eff.iter().map(|hk| hk * &t).collect();
    let ea = herm_eig(&a);
    Ok(Whitened {
        t,
        a,
        h,
        a_vals: ea.values,
        a_vecs: ea.vectors,
    })
}

struct DualEval {
    s: Vec<CMat>,
    trace: f64,
}

impl Whitened {
    fn r(&self) -> usize {
        self.a.nrows()
    }

    /// Per-subcarrier maximizers of tr((A − μI)S) + (β/K) log|I + H S H^H/σ²|, μ > λ_max.
    fn inner(&self, beta: f64, mu: f64, noise: f64) -> DualEval {
        let r = self.r();
        let k = self.h.len() as f64;
        // Q̃^{-1/2} = E diag(sqrt(β / (K (μ − λ_i)))) E^H
        let mut qis = CMat::zeros(r, r);
        for i in 0..r {
            let gap = (mu - self.a_vals[i]).max(f64::MIN_POSITIVE);
            let s = (beta / (k * gap)).sqrt();
            let e = self.a_vecs.column(i);
            qis += e * e.adjoint() * C64::from(s);
        }
        let mut trace = 0.0;
        let mut s_all = Vec::with_capacity(self.h.len());
        for hk in &self.h {
            let m = hk * &qis;
            let em = herm_eig(&hermitize(&(m.adjoint() * &m)));
            let mut st = CMat::zeros(r, r);
            for i in 0..r {
                let hi = em.values[i];
                if hi > noise {
                    let w = 1.0 - noise / hi;
                    let v = em.vectors.column(i);
                    st += v * v.adjoint() * C64::from(w);
                }
            }
            let s = hermitize(&(&qis * st * &qis));
            trace += crate::linalg::trace_re(&s);
            s_all.push(s);
        }
        DualEval { s: s_all, trace }
    }

    fn rate(&self, s: &[CMat], noise: f64) -> f64 {
        average_rate(&self.h, s, noise).unwrap_or(0.0)
    }

    /// Solve the power constraint for μ at fixed β; returns (μ, covariances).
    fn solve_mu(&self, beta: f64, power: f64, noise: f64) -> (f64, Vec<CMat>) {
        let lam = self.a_vals[0];
        let base = lam.abs().max(1e-300);
        let tr_at = |u: f64| self.inner(beta, lam + u.exp(), noise).trace;
        // log-gap bracket around the heuristic scale β r / (K P)
        let guess = (beta * self.r() as f64 / (self.h.len() as f64 * power)).max(base * 1e-300);
        let mut lo = guess.ln();
        let mut hi = lo;
        let mut f_lo = tr_at(lo) - power;
        let mut f_hi = f_lo;
        let mut n = 0;
        while f_lo < 0.0 && n < 200 {
            hi = lo;
            f_hi = f_lo;
            lo -= 2.0;
            f_lo = tr_at(lo) - power;
            n += 1;
        }
        if f_lo < 0.0 {
            // μ → λ_max still leaves power unused; spend it on the top eigenvector
            let mu = lam + lo.exp();
            let mut s = self.inner(beta, mu, noise).s;
            let used: f64 = s.iter().map(crate::linalg::trace_re).sum();
            let e = self.a_vecs.column(0);
            s[0] += e * e.adjoint() * C64::from(power - used);
            return (lam, s);
        }
        n = 0;
        while f_hi >= 0.0 && n < 200 {
            lo = hi;
            f_lo = f_hi;
            hi += 2.0;
            f_hi = tr_at(hi) - power;
            n += 1;
        }
        let mut f = |u: f64| tr_at(u) - power;
        let (a, fa, b, fb) = brent(&mut f, lo, hi, f_lo, f_hi, 1e-15, 200);
        // prefer the side that does not exceed the budget
        let u = if fb <= 0.0 { b } else if fa <= 0.0 { a } else { b };
        let mu = lam + u.exp();
        (mu, self.inner(beta, mu, noise).s)
    }

    fn capacity(&self, power: f64, noise: f64) -> (f64, Vec<CMat>) {
        let r = self.r();
        let mut modes = Vec::new();
        let mut gains = Vec::new();
        for (k, hk) in self.h.iter().enumerate() {
            let e = herm_eig(&hermitize(&(hk.adjoint() * hk)));
            for i in 0..r {
                modes.push((k, e.vectors.column(i).into_owned()));
                gains.push(e.values[i].max(0.0) / noise);
            }
        }
        let p = water_fill(&gains, power);
        let mut s = vec![CMat::zeros(r, r); self.h.len()];
        for ((k, v), pi) in modes.iter().zip(&p) {
            if *pi > 0.0 {
                s[*k] += v * v.adjoint() * C64::from(*pi);
            }
        }
        if p.iter().all(|&v| v == 0.0) {
            // channel carries nothing: any allocation is capacity-achieving
            let e = self.a_vecs.column(0);
            s[0] = e * e.adjoint() * C64::from(power);
        }
        let rate: f64 = gains.iter().zip(&p).map(|(g, pi)| (1.0 + g * pi).ln()).sum::<f64>() / self.h.len() as f64;
        (rate, s)
    }
}

/// Narrowband form of [`rate_constrained_trace_max_multi`].
pub fn rate_constrained_trace_max(
    a_eff: &CMat,
    g_eff: &CMat,
    h_eff: &CMat,
    power: f64,
    rate_target: f64,
    noise: f64,
) -> Result<DigitalSolution> {
    rate_constrained_trace_max_multi(a_eff, g_eff, std::slice::from_ref(h_eff), power, rate_target, noise)
}

/// maximize Σ_k tr(A R_k) s.t. (1/K) Σ_k log|I + H_k R_k H_k^H/σ²| ≥ R̄,
/// Σ_k tr(G R_k) ≤ P, R_k ⪰ 0.
pub fn rate_constrained_trace_max_multi(
    a_eff: &CMat,
    g_eff: &CMat,
    h_eff: &[CMat],
    power: f64,
    rate_target: f64,
    noise: f64,
) -> Result<DigitalSolution> {
    if h_eff.is_empty() {
        return Err(Error::Invalid("at least one channel is required".into()));
    }
    if !(power > 0.0) || !(noise > 0.0) || !(rate_target >= 0.0) {
        return Err(Error::Invalid("power and noise must be positive, rate target nonnegative".into()));
    }
    let w = whiten(a_eff, g_eff, h_eff)?;
    let kf = h_eff.len() as f64;
    let lam = w.a_vals[0];
    let finish = |s: Vec<CMat>, beta: f64, mu: f64, branch: DigitalBranch| -> Result<DigitalSolution> {
        let used: f64 = s.iter().map(crate::linalg::trace_re).sum();
        let scale = if used > 0.0 { power / used } else { 1.0 };
        let r_bb: Vec<CMat> = s
            .iter()
            .map(|sk| hermitize(&(&w.t * sk * w.t.adjoint() * C64::from(scale))))
            .collect();
        let rate = average_rate(h_eff, &r_bb, noise)?;
        let pw: f64 = r_bb.iter().map(|r| trace_prod_re(g_eff, r)).sum();
        let objective: f64 = r_bb.iter().map(|r| trace_prod_re(a_eff, r)).sum();
        Ok(DigitalSolution {
            r_bb,
            beta,
            mu,
            rate,
            power: pw,
            objective,
            branch,
        })
    };

    let sensing_degenerate = max_abs(&w.a) == 0.0;
    if !sensing_degenerate {
        // sensing-optimal candidates along the top eigenvector
        let x = w.a_vecs.column(0).into_owned();
        let xx = &x * x.adjoint();
        let gains: Vec<f64> = w.h.iter().map(|hk| (hk * &x).norm_squared() / noise).collect();
        let rate0 = (1.0 + power * gains[0]).ln() / kf;
        if rate0 >= rate_target {
            let mut s = vec![CMat::zeros(w.r(), w.r()); h_eff.len()];
            s[0] = &xx * C64::from(power);
            return finish(s, 0.0, lam, DigitalBranch::SensingOptimal);
        }
        if h_eff.len() > 1 {
            let p = water_fill(&gains, power);
            let rate_split: f64 = gains.iter().zip(&p).map(|(g, pi)| (1.0 + g * pi).ln()).sum::<f64>() / kf;
            if rate_split >= rate_target {
                let s = p.iter().map(|&pi| &xx * C64::from(pi)).collect();
                return finish(s, 0.0, lam, DigitalBranch::SensingOptimal);
            }
        }
    }
    let (cap, s_cap) = w.capacity(power, noise);
    if cap < rate_target {
        return Err(Error::Infeasible { target: rate_target, max_rate: cap });
    }
    if sensing_degenerate || cap - rate_target <= 1e-12 * cap.max(1.0) {
        return finish(s_cap, f64::INFINITY, 0.0, DigitalBranch::Capacity);
    }

    // outer search over ln β for the rate constraint
    let rate_at = |u: f64| -> (f64, f64, Vec<CMat>) {
        let (mu, s) = w.solve_mu(u.exp(), power, noise);
        (w.rate(&s, noise) - rate_target, mu, s)
    };
    let scale = (lam.abs() * power / rate_target.max(1e-3)).max(1e-300);
    let mut lo = scale.ln();
    let (mut f_lo, _, _) = rate_at(lo);
    let mut hi = lo;
    let mut f_hi = f_lo;
    let mut n = 0;
    while f_lo >= 0.0 && n < 300 {
        hi = lo;
        f_hi = f_lo;
        lo -= 2.0;
        f_lo = rate_at(lo).0;
        n += 1;
    }
    n = 0;
    while f_hi < 0.0 && n < 300 {
        lo = hi;
        f_lo = f_hi;
        hi += 2.0;
        f_hi = rate_at(hi).0;
        n += 1;
    }
    if f_hi < 0.0 {
        return finish(s_cap, f64::INFINITY, 0.0, DigitalBranch::Capacity);
    }
    let rtol = 1e-13 * rate_target.max(1.0);
    let mut f = |u: f64| {
        let v = rate_at(u).0;
        // flatten tiny residuals so the bracket stops shrinking once converged
        if v.abs() <= rtol { 0.0 } else { v }
    };
    let (a, fa, b, fb) = brent(&mut f, lo, hi, f_lo, f_hi, 1e-14, 300);
    let u = if fb >= 0.0 { b } else if fa >= 0.0 { a } else { hi };
    let (_, mu, s) = rate_at(u);
    let mut sol = finish(s, u.exp(), mu, DigitalBranch::Dual)?;
    if sol.rate < rate_target {
        // rescaling to the exact budget can leave the rate a hair short; step
        // ln β up from the root until the target holds, ending at the bracket end
        let mut step = 1e-12 * u.abs().max(1.0);
        let mut v = u;
        while sol.rate < rate_target && v < hi {
            v = (v + step).min(hi);
            step *= 4.0;
            let (_, mu_v, s_v) = rate_at(v);
            let alt = finish(s_v, v.exp(), mu_v, DigitalBranch::Dual)?;
            if alt.rate >= sol.rate {
                sol = alt;
            }
        }
    }
    Ok(sol)
}
