//! Dense linear algebra: Householder QR, truncated SVD and regularized least squares.
//!
//! The SVD uses one-sided Jacobi rotations when the short side of the matrix is
//! at most [`JACOBI_MAX_SHORT_SIDE`], after a QR reduction of the long side.
//! Larger inputs go through randomized subspace iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

pub const JACOBI_MAX_SHORT_SIDE: usize = 512;
pub const SVD_TOLERANCE: f64 = 1e-10;
pub const SVD_MAX_SWEEPS: usize = 200;
const OVERSAMPLING: usize = 8;
const POWER_ITERATIONS: usize = 4;

/// Thin singular value decomposition `m ≈ u · diag(s) · vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.matmul_t(&self.v).expect("svd factor shapes")
    }
}

/// Householder QR of a tall matrix (`rows >= cols`).
struct Householder {
    /// Reflector vectors, one per column, stored as rows of length `rows`.
    reflectors: Vec<Vec<f64>>,
    r: Matrix,
    rows: usize,
}

impl Householder {
    fn factor(a: &Matrix) -> Self {
        let (m, n) = a.shape();
        debug_assert!(m >= n);
        // Work column-major for cache-friendly reflector application.
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
        let mut reflectors = Vec::with_capacity(n);
        for k in 0..n {
            let x = &cols[k][k..];
            let norm = dot(x, x).sqrt();
            let mut v = x.to_vec();
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vnorm = dot(&v, &v).sqrt();
            if vnorm > 0.0 && norm > 0.0 {
                v.iter_mut().for_each(|e| *e /= vnorm);
                for col in cols.iter_mut().skip(k) {
                    let tail = &mut col[k..];
                    let p = 2.0 * dot(&v, tail);
                    for (t, vi) in tail.iter_mut().zip(&v) {
                        *t -= p * vi;
                    }
                }
            } else {
                v.iter_mut().for_each(|e| *e = 0.0);
            }
            reflectors.push(v);
        }
        let r = Matrix::from_fn(n, n, |i, j| if i <= j { cols[j][i] } else { 0.0 });
        Self { reflectors, r, rows: m }
    }

    /// Thin orthonormal factor `Q` (`rows x cols`).
    fn thin_q(&self) -> Matrix {
        let n = self.reflectors.len();
        let m = self.rows;
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                e
            })
            .collect();
        for col in cols.iter_mut() {
            for k in (0..n).rev() {
                let v = &self.reflectors[k];
                let tail = &mut col[k..];
                let p = 2.0 * dot(v, tail);
                if p != 0.0 {
                    for (t, vi) in tail.iter_mut().zip(v) {
                        *t -= p * vi;
                    }
                }
            }
        }
        Matrix::from_fn(m, n, |i, j| cols[j][i])
    }

    /// Applies `Qᵀ` to every column of `b`, keeping the leading `cols` rows.
    fn apply_qt(&self, b: &Matrix) -> Matrix {
        let n = self.reflectors.len();
        let mut cols: Vec<Vec<f64>> = (0..b.cols()).map(|j| b.column(j)).collect();
        for col in cols.iter_mut() {
            for (k, v) in self.reflectors.iter().enumerate() {
                let tail = &mut col[k..];
                let p = 2.0 * dot(v, tail);
                if p != 0.0 {
                    for (t, vi) in tail.iter_mut().zip(v) {
                        *t -= p * vi;
                    }
                }
            }
        }
        Matrix::from_fn(n, b.cols(), |i, j| cols[j][i])
    }
}

/// Orthonormal basis for the column space of `a` (`rows >= cols`).
pub fn orthonormalize(a: &Matrix) -> Matrix {
    Householder::factor(a).thin_q()
}

/// Rank-`k` truncated SVD.
pub fn truncated_svd(m: &Matrix, k: usize) -> Result<Svd> {
    let short = m.rows().min(m.cols());
    if k == 0 || k > short {
        return Err(Error::RankOutOfRange { k, max: short });
    }
    if short <= JACOBI_MAX_SHORT_SIDE || k + OVERSAMPLING >= short {
        let full = jacobi_svd(m)?;
        Ok(truncate(full, k))
    } else {
        randomized_svd(m, k)
    }
}

fn truncate(svd: Svd, k: usize) -> Svd {
    Svd { u: svd.u.leading_columns(k), s: svd.s[..k].to_vec(), v: svd.v.leading_columns(k) }
}

/// Full thin SVD via QR reduction and one-sided Jacobi.
fn jacobi_svd(m: &Matrix) -> Result<Svd> {
    if m.rows() < m.cols() {
        let t = jacobi_svd(&m.transpose())?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    if m.rows() > m.cols() {
        let qr = Householder::factor(m);
        let inner = jacobi_square(&qr.r)?;
        let u = qr.thin_q().matmul(&inner.u)?;
        return Ok(Svd { u, s: inner.s, v: inner.v });
    }
    jacobi_square(m)
}

/// One-sided (Hestenes) Jacobi on a square matrix.
fn jacobi_square(a: &Matrix) -> Result<Svd> {
    let n = a.cols();
    // Column-major working copies.
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut norms: Vec<f64> = w.iter().map(|c| dot(c, c)).collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let negligible = scale * f64::EPSILON * f64::EPSILON;
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == SVD_MAX_SWEEPS {
            return Err(Error::NonConvergence("Jacobi SVD", SVD_MAX_SWEEPS));
        }
        sweeps += 1;
        converged = true;
        for i in 0..n - 1 {
            for j in i + 1..n {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&w[i], &w[j]);
                if gamma.abs() <= SVD_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = w.split_at_mut(j);
                rotate(&mut left[i], &mut right[0], c, s);
                let (left, right) = v.split_at_mut(j);
                rotate(&mut left[i], &mut right[0], c, s);
                norms[i] = dot(&w[i], &w[i]);
                norms[j] = dot(&w[j], &w[j]);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let sigma: Vec<f64> = norms.iter().map(|x| x.sqrt()).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));
    let s: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let cutoff = smax * f64::EPSILON * n as f64;
    let rows = a.rows();
    let mut u = Matrix::zeros(rows, n);
    let mut filled = 0;
    for (col, &j) in order.iter().enumerate() {
        if sigma[j] > cutoff && sigma[j] > 0.0 {
            let inv = 1.0 / sigma[j];
            let c: Vec<f64> = w[j].iter().map(|x| x * inv).collect();
            u.set_column(col, &c);
            filled += 1;
        }
    }
    let u = complete_orthonormal(u, filled);
    let vm = Matrix::from_fn(n, n, |i, col| v[order[col]][i]);
    Ok(Svd { u, s, v: vm })
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (p, q) = (*a, *b);
        *a = c * p - s * q;
        *b = s * p + c * q;
    }
}

/// Fills columns `filled..` of `u` with unit vectors orthogonal to all earlier columns.
pub(crate) fn complete_orthonormal(mut u: Matrix, filled: usize) -> Matrix {
    let (rows, cols) = u.shape();
    let mut col = filled;
    let mut candidate = 0;
    while col < cols && candidate < rows {
        let mut e = vec![0.0; rows];
        e[candidate] = 1.0;
        candidate += 1;
        // Two passes of Gram-Schmidt for stability.
        for _ in 0..2 {
            for k in 0..col {
                let uk = u.column(k);
                let p = dot(&uk, &e);
                for (x, y) in e.iter_mut().zip(&uk) {
                    *x -= p * y;
                }
            }
        }
        let norm = dot(&e, &e).sqrt();
        if norm > 1e-8 {
            e.iter_mut().for_each(|x| *x /= norm);
            u.set_column(col, &e);
            col += 1;
        }
    }
    u
}

fn randomized_svd(m: &Matrix, k: usize) -> Result<Svd> {
    let l = k + OVERSAMPLING;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_5bd);
    let omega = Matrix::from_fn(m.cols(), l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(&m.matmul(&omega)?);
    for _ in 0..POWER_ITERATIONS {
        let z = orthonormalize(&m.t_matmul(&q)?);
        q = orthonormalize(&m.matmul(&z)?);
    }
    // B = Qᵀ M is l x cols, small enough for Jacobi.
    let b = q.t_matmul(m)?;
    let inner = jacobi_svd(&b)?;
    let u = q.matmul(&inner.u)?;
    Ok(truncate(Svd { u, s: inner.s, v: inner.v }, k))
}

/// Solves `min ‖A·X − B‖_F² + ridge·‖X‖_F²`.
///
/// Uses Householder QR on `[A; √ridge·I]`. With `ridge == 0` a rank-deficient
/// `A` is reported as [`Error::Singular`].
pub fn least_squares(a: &Matrix, b: &Matrix, ridge: f64) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "least squares with {} equations but {} right-hand rows",
            a.rows(),
            b.rows()
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {ridge}")));
    }
    let n = a.cols();
    let (a_aug, b_aug) = if ridge > 0.0 {
        let root = ridge.sqrt();
        let mut ad = a.data().to_vec();
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = root;
            ad.extend(row);
        }
        let mut bd = b.data().to_vec();
        bd.extend(std::iter::repeat_n(0.0, n * b.cols()));
        (Matrix::from_raw(a.rows() + n, n, ad), Matrix::from_raw(b.rows() + n, b.cols(), bd))
    } else {
        if a.rows() < n {
            return Err(Error::Singular(format!(
                "{} equations for {n} unknowns without regularization",
                a.rows()
            )));
        }
        (a.clone(), b.clone())
    };
    let qr = Householder::factor(&a_aug);
    let rmax = (0..n).map(|i| qr.r.get(i, i).abs()).fold(0.0, f64::max);
    let threshold = rmax * f64::EPSILON * a_aug.rows().max(n) as f64;
    for i in 0..n {
        if qr.r.get(i, i).abs() <= threshold || rmax == 0.0 {
            return Err(Error::Singular(format!("rank-deficient design matrix (column {i})")));
        }
    }
    let qtb = qr.apply_qt(&b_aug);
    let mut x = Matrix::zeros(n, b.cols());
    for c in 0..b.cols() {
        for i in (0..n).rev() {
            let mut acc = qtb.get(i, c);
            for j in i + 1..n {
                acc -= qr.r.get(i, j) * x.get(j, c);
            }
            x.set(i, c, acc / qr.r.get(i, i));
        }
    }
    Ok(x)
}

/// Dominant `basis.cols()`-dimensional invariant subspace of a symmetric PSD
/// matrix, by subspace iteration warm-started from `basis`.
///
/// Each step never decreases `tr(UᵀMU)`.
pub(crate) fn dominant_subspace(m: &Matrix, basis: &Matrix, max_iters: usize, tol: f64) -> Matrix {
    let trace = |u: &Matrix| -> f64 {
        let mu = m.matmul(u).expect("shape");
        mu.data().iter().zip(u.data()).map(|(a, b)| a * b).sum()
    };
    let mut u = basis.clone();
    let mut current = trace(&u);
    for _ in 0..max_iters {
        let next_u = orthonormalize(&m.matmul(&u).expect("shape"));
        let next = trace(&next_u);
        if next < current {
            break;
        }
        let gain = next - current;
        u = next_u;
        current = next;
        if gain <= tol * current.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    u
}
