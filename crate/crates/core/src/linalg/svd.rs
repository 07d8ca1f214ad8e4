//! Compact SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The input is oriented so that it has at least as many rows as columns
//! and reduced to a triangular factor by pivoted Householder QR. Columns of
//! that factor's transpose are then rotated pairwise until every pair is
//! orthogonal to a relative tolerance. Small singular values come out with
//! high relative accuracy, which the truncation rules downstream rely on.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Sweep cap before reporting non-convergence.
pub const MAX_SWEEPS: usize = 60;
/// Relative off-diagonal tolerance `|aᵢ·aⱼ| ≤ tol·‖aᵢ‖‖aⱼ‖`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Below this a computed column norm is treated as exactly zero and its
/// left vector is completed from the orthogonal complement.
const NULL_COLUMN: f64 = 1e-150;

/// Compact factorization `A = U·diag(sigma)·Vᵀ` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `m × r`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `n × r`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank_above(&self, threshold: f64) -> usize {
        self.sigma.iter().take_while(|&&s| s >= threshold).count()
    }

    /// `U·diag(sigma)·Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                let x = us.get(i, j) * s;
                us.set(i, j, x);
            }
        }
        us.matmul_tr(&self.v)
            .expect("svd factors have consistent shapes")
    }
}

pub fn svd_compact(a: &Matrix) -> Result<SvdResult> {
    super::counter::record_factorization();
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::dim(
            "svd_compact",
            "min(rows, cols) >= 1",
            format!("{m}x{n}"),
        ));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("svd_compact"));
    }
    // Work on a copy scaled by a power of two near 1/max|a| (exact in
    // floating point) so the Jacobi dot products can neither overflow nor
    // underflow.
    let max = a.max_abs();
    if max == 0.0 {
        return svd_unit_scale(a);
    }
    let exponent = max.log2().round() as i32;
    if exponent == 0 {
        return svd_unit_scale(a);
    }
    let mut out = svd_unit_scale(&a.scaled(2f64.powi(-exponent)))?;
    let back = 2f64.powi(exponent);
    for s in &mut out.sigma {
        *s *= back;
    }
    Ok(out)
}

fn svd_unit_scale(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    if n > m {
        let t = svd_tall(&a.transpose())?;
        let mut out = SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
        fix_signs(&mut out);
        return Ok(out);
    }
    let mut out = svd_tall(a)?;
    fix_signs(&mut out);
    Ok(out)
}

/// Factorization of an `m × n` matrix with `m ≥ n`.
///
/// `A·P = Q·R` by Householder QR with column pivoting, then one-sided
/// Jacobi on `X = Rᵀ`: `X·V_x = U_x·Σ`. Hence `A = (Q·V_x)·Σ·(P·U_x)ᵀ`.
/// Pivoting makes the rows of `R` strongly graded, so the Jacobi phase
/// needs only a few sweeps on an `n × n` problem.
fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let qr = PivotedQr::new(a);

    // Column j of X is row j of R.
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            w[i * n + j] = qr.r(i, j);
        }
    }
    let mut v = Matrix::identity(n).into_vec();
    jacobi_sweeps(&mut w, &mut v, n, n)?;

    let norms: Vec<f64> = (0..n)
        .map(|j| {
            w[j * n..(j + 1) * n]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    // U_x (right side of A, before un-pivoting) and V_x (left side of R).
    let mut ux = Matrix::zeros(n, n);
    let mut vx = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut null_cols = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        let col = &w[j * n..(j + 1) * n];
        if s > NULL_COLUMN {
            for i in 0..n {
                ux.set(i, k, col[i] / s);
            }
            sigma.push(s);
        } else {
            sigma.push(0.0);
            null_cols.push(k);
        }
        for i in 0..n {
            vx.set(i, k, v[j * n + i]);
        }
    }
    if !null_cols.is_empty() {
        complete_basis(&mut ux, &null_cols);
    }
    let u = qr.q().matmul(&vx)?;
    let mut right = Matrix::zeros(n, n);
    for (k, &p) in qr.perm.iter().enumerate() {
        for j in 0..n {
            right.set(p, j, ux.get(k, j));
        }
    }
    debug_assert_eq!(u.shape(), (m, n));
    Ok(SvdResult { u, sigma, v: right })
}

/// Cyclic one-sided Jacobi on `n` contiguous columns of length `len`,
/// accumulating rotations into the `n` contiguous columns of `v`.
fn jacobi_sweeps(w: &mut [f64], v: &mut [f64], len: usize, n: usize) -> Result<()> {
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (head, tail) = w.split_at_mut(q * len);
                let wp = &mut head[p * len..(p + 1) * len];
                let wq = &mut tail[..len];
                let (alpha, beta, gamma) = dots3(wp, wq);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= OFF_DIAGONAL_TOL * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(wp, wq, c, s);
                let (vh, vt) = v.split_at_mut(q * n);
                rotate(&mut vh[p * n..(p + 1) * n], &mut vt[..n], c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::Numerical(format!(
        "one-sided Jacobi SVD did not converge within {MAX_SWEEPS} sweeps (order {n})"
    )))
}

/// Householder QR with column pivoting, columns stored contiguously.
struct PivotedQr {
    m: usize,
    n: usize,
    /// Column j holds R above the diagonal and the Householder vector
    /// from the diagonal down.
    cols: Vec<f64>,
    diag: Vec<f64>,
    betas: Vec<f64>,
    perm: Vec<usize>,
}

impl PivotedQr {
    fn new(a: &Matrix) -> Self {
        let (m, n) = a.shape();
        let mut cols = a.transpose().into_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut diag = vec![0.0; n];
        let mut betas = vec![0.0; n];
        // Remaining columns below this norm are numerically zero; stopping
        // there keeps the reflectors away from underflow.
        let negligible = f64::EPSILON * cols.iter().map(|x| x * x).sum::<f64>().sqrt();
        for k in 0..n {
            let (best, best_sq) = (k..n)
                .map(|j| {
                    (
                        j,
                        cols[j * m + k..(j + 1) * m]
                            .iter()
                            .map(|x| x * x)
                            .sum::<f64>(),
                    )
                })
                .fold(
                    (k, -1.0),
                    |acc, (j, s)| if s > acc.1 { (j, s) } else { acc },
                );
            if best_sq.sqrt() <= negligible {
                for j in k..n {
                    cols[j * m + k..(j + 1) * m].fill(0.0);
                }
                break;
            }
            if best != k {
                for i in 0..m {
                    cols.swap(k * m + i, best * m + i);
                }
                perm.swap(k, best);
            }
            let (head, tail) = cols.split_at_mut((k + 1) * m);
            let x = &mut head[k * m + k..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = if x[0] > 0.0 { -norm } else { norm };
            x[0] -= alpha;
            let vtv = x.iter().map(|v| v * v).sum::<f64>();
            let beta = 2.0 / vtv;
            diag[k] = alpha;
            betas[k] = beta;
            for j in 0..n - k - 1 {
                let y = &mut tail[j * m + k..(j + 1) * m];
                let d: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
                let f = beta * d;
                for (yi, xi) in y.iter_mut().zip(x.iter()) {
                    *yi -= f * xi;
                }
            }
        }
        PivotedQr {
            m,
            n,
            cols,
            diag,
            betas,
            perm,
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.cols[j * self.m + i],
            std::cmp::Ordering::Equal => self.diag[i],
            std::cmp::Ordering::Greater => 0.0,
        }
    }

    /// Thin `m × n` orthonormal factor.
    fn q(&self) -> Matrix {
        let (m, n) = (self.m, self.n);
        // columns of Q, contiguous
        let mut q = vec![0.0; n * m];
        for j in 0..n {
            q[j * m + j] = 1.0;
        }
        for k in (0..n).rev() {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let v = &self.cols[k * m + k..(k + 1) * m];
            for j in k..n {
                let y = &mut q[j * m + k..(j + 1) * m];
                let d: f64 = v.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
                let f = beta * d;
                for (yi, vi) in y.iter_mut().zip(v) {
                    *yi -= f * vi;
                }
            }
        }
        Matrix::from_fn(m, n, |i, j| q[j * m + i])
    }
}

#[inline]
fn dots3(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mut a, mut b, mut g) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        a += xi * xi;
        b += yi * yi;
        g += xi * yi;
    }
    (a, b, g)
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a = *xi;
        let b = *yi;
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns, by Gram–Schmidt on the standard basis.
fn complete_basis(u: &mut Matrix, fill: &[usize]) {
    let m = u.rows();
    let mut filled: Vec<bool> = (0..u.cols()).map(|j| !fill.contains(&j)).collect();
    let mut candidate = 0usize;
    for &k in fill {
        while candidate < m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of classical Gram–Schmidt
            for _ in 0..2 {
                for j in 0..u.cols() {
                    if !filled[j] {
                        continue;
                    }
                    let d: f64 = (0..m).map(|i| u.get(i, j) * e[i]).sum();
                    for (i, ei) in e.iter_mut().enumerate() {
                        *ei -= d * u.get(i, j);
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for (i, ei) in e.iter().enumerate() {
                    u.set(i, k, ei / norm);
                }
                filled[k] = true;
                break;
            }
        }
    }
}

/// Makes the first clearly nonzero entry of every left vector nonnegative.
fn fix_signs(svd: &mut SvdResult) {
    let m = svd.u.rows();
    let n = svd.v.rows();
    for k in 0..svd.sigma.len() {
        let col_max = (0..m).fold(0.0f64, |acc, i| acc.max(svd.u.get(i, k).abs()));
        let lead = (0..m)
            .map(|i| svd.u.get(i, k))
            .find(|x| x.abs() > 1e-12 * col_max);
        if matches!(lead, Some(x) if x < 0.0) {
            for i in 0..m {
                let x = svd.u.get(i, k);
                svd.u.set(i, k, -x);
            }
            for i in 0..n {
                let x = svd.v.get(i, k);
                svd.v.set(i, k, -x);
            }
        }
    }
}
