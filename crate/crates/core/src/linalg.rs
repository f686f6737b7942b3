//! Dense complex linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const J: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// (M + M^H) / 2
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::from(0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

/// Hermitian eigen-decomposition with a deterministic ordering and phase convention.
///
/// Eigenvalues are sorted descending (stable on ties, so the solver order decides).
/// Each eigenvector is rotated so that its first entry of (near) maximal modulus is
/// real and positive.
pub fn herm_eig(m: &CMat) -> HermEig {
    let n = m.nrows();
    if n == 0 {
        return HermEig {
            values: vec![],
            vectors: CMat::zeros(0, 0),
        };
    }
    let eig = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        normalize_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    HermEig { values, vectors }
}

/// Rotate a vector so its first entry of maximal modulus is real positive.
pub fn normalize_phase(v: &mut CVec) {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .find(|z| z.norm() >= max * (1.0 - 1e-9))
        .copied()
        .unwrap_or(C64::from(1.0));
    let rot = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= rot;
    }
}

/// Thin factor F with F F^H = M, keeping eigenvalues above `rel_tol * tr(M)`.
pub fn psd_factor(m: &CMat, rel_tol: f64) -> CMat {
    let n = m.nrows();
    let eig = herm_eig(m);
    let tr: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| eig.values[i] > rel_tol * tr && eig.values[i] > 0.0)
        .collect();
    let mut f = CMat::zeros(n, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        let s = C64::from(eig.values[i].sqrt());
        f.set_column(j, &(eig.vectors.column(i) * s));
    }
    f
}

/// Number of eigenvalues above `rel_tol * tr(M)`.
pub fn numerical_rank(m: &CMat, rel_tol: f64) -> usize {
    let eig = herm_eig(m);
    let tr: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    eig.values
        .iter()
        .filter(|&&v| v > rel_tol * tr && v > 0.0)
        .count()
}

/// Apply a scalar function to the spectrum of a Hermitian matrix.
pub fn herm_fn(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let eig = herm_eig(m);
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        let q = eig.vectors.column(i);
        let s = C64::from(f(eig.values[i]));
        out += q * q.adjoint() * s;
    }
    hermitize(&out)
}

/// log det of a Hermitian positive-definite matrix.
pub fn log_det_hpd(m: &CMat) -> Result<f64> {
    let chol = hermitize(m)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("log-det argument".into()))?;
    let l = chol.l();
    Ok((0..m.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn inv_hpd(m: &CMat) -> Result<CMat> {
    let chol = hermitize(m)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("inverse argument".into()))?;
    Ok(hermitize(&chol.inverse()))
}

/// Real part of tr(A B) without forming the product.
pub fn trace_prod_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// Kronecker product A ⊗ B.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::from(0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Column-major vectorization.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v.as_slice())
}

/// Real symmetric lifting of a Hermitian form: v^H H v = x^T L x with x = [Re v; Im v].
pub fn lift_hermitian(h: &CMat) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = 0.5 * (h[(i, j)] + h[(j, i)].conj());
            out[(i, j)] = z.re;
            out[(n + i, n + j)] = z.re;
            out[(i, n + j)] = -z.im;
            out[(n + i, j)] = z.im;
        }
    }
    out
}

/// Project every entry onto the unit circle (zero maps to 1).
pub fn unit_modulus(v: &CVec) -> CVec {
    v.map(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            C64::from(1.0)
        }
    })
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// True when M is Hermitian and its smallest eigenvalue is ≥ −tol·max(1, ‖M‖).
pub fn is_psd(m: &CMat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    if max_abs(&(m - m.adjoint())) > tol * scale {
        return false;
    }
    herm_eig(m).values.iter().all(|&v| v >= -tol * scale)
}
