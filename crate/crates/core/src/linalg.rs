//! Small dense linear algebra kernels.
//!
//! Only what the propagators need: a regularised Hermitian solve (Cholesky), a
//! Tikhonov least-squares solve (Householder QR on the augmented system), and
//! a Jacobi eigenvalue routine for real symmetric matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use libm::{fabs, hypot, sqrt};

use crate::{Error, Result, C64};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type CMatrix = Matrix<C64>;
pub type RMatrix = Matrix<f64>;

impl<T: Copy + Default> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl CMatrix {
    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl RMatrix {
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| fabs(*x)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Solves `(G + shift I) x = b` for Hermitian positive semidefinite `G`.
///
/// Only the lower triangle of `g` is read. The factorisation overwrites `g`
/// and the solution overwrites `b`.
pub fn solve_hermitian_shifted(g: &mut CMatrix, b: &mut [C64], shift: f64) -> Result<()> {
    let condition = cholesky_shifted(g, shift)?;
    cholesky_solve(g, b, condition)
}

/// In-place Cholesky factor `L` of `G + shift I`, lower triangle only.
/// Returns a condition estimate of the factor.
pub fn cholesky_shifted(g: &mut CMatrix, shift: f64) -> Result<f64> {
    let n = g.rows;
    debug_assert_eq!(n, g.cols);

    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for j in 0..n {
        let (upper, lower) = g.data.split_at_mut((j + 1) * n);
        let row_j = &mut upper[j * n..];
        let mut d = row_j[j].re + shift;
        for z in &row_j[..j] {
            d -= z.norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Solver {
                condition: condition_estimate(dmin, dmax),
            });
        }
        let ljj = sqrt(d);
        row_j[j] = C64::new(ljj, 0.0);
        dmin = dmin.min(ljj);
        dmax = dmax.max(ljj);

        // Column j below the diagonal: L_ij = (G_ij - sum_k L_ik conj(L_jk)) / L_jj.
        let row_j = &row_j[..j];
        for row_i in lower.chunks_exact_mut(n) {
            let mut s = row_i[j];
            for (lik, ljk) in row_i[..j].iter().zip(row_j) {
                s -= lik * ljk.conj();
            }
            row_i[j] = s / ljj;
        }
    }
    Ok(condition_estimate(dmin, dmax))
}

/// Solves `L L^H x = b` with the factor from [`cholesky_shifted`]; `condition`
/// is only used for the error report.
pub fn cholesky_solve(l: &CMatrix, b: &mut [C64], condition: f64) -> Result<()> {
    let n = l.rows;
    debug_assert_eq!(n, b.len());
    // Forward: L y = b.
    for i in 0..n {
        let row = &l.data[i * n..i * n + i];
        let mut s = b[i];
        for (l, y) in row.iter().zip(&b[..i]) {
            s -= l * y;
        }
        b[i] = s / l.data[i * n + i].re;
    }
    // Backward: L^H x = y.
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l.data[k * n + i].conj() * b[k];
        }
        b[i] = s / l.data[i * n + i].re;
    }

    if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Solver { condition });
    }
    Ok(())
}

fn condition_estimate(dmin: f64, dmax: f64) -> f64 {
    if dmin > 0.0 && dmin.is_finite() {
        (dmax / dmin) * (dmax / dmin)
    } else {
        f64::INFINITY
    }
}

/// Minimises `|A x - b|^2 + eps^2 |x|^2` by Householder QR of `[A; eps I]`.
///
/// `A` may be rectangular with `rows >= cols`. Returns the minimiser and an
/// estimate of the condition number of the augmented triangular factor.
pub fn tikhonov_lstsq(a: &RMatrix, b: &[f64], eps: f64) -> Result<(Vec<f64>, f64)> {
    let (m, n) = (a.rows, a.cols);
    debug_assert_eq!(b.len(), m);
    let rows = m + n;

    // Column-major working copy of the augmented matrix.
    let mut w = vec![0.0; rows * n];
    for j in 0..n {
        for i in 0..m {
            w[j * rows + i] = a[(i, j)];
        }
        w[j * rows + m + j] = eps;
    }
    let mut rhs = vec![0.0; rows];
    rhs[..m].copy_from_slice(b);

    for k in 0..n {
        let col = &mut w[k * rows..(k + 1) * rows];
        let mut norm = 0.0;
        for x in &col[k..] {
            norm = hypot(norm, *x);
        }
        if norm == 0.0 {
            continue;
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        col[k] -= alpha;
        let vnorm2: f64 = col[k..].iter().map(|x| x * x).sum();
        let v: Vec<f64> = col[k..].to_vec();
        col[k] = alpha;
        for x in &mut col[k + 1..] {
            *x = 0.0;
        }
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k + 1..n {
            let cj = &mut w[j * rows..(j + 1) * rows];
            let dot: f64 = v.iter().zip(&cj[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (x, vi) in cj[k..].iter_mut().zip(&v) {
                *x -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[k..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (x, vi) in rhs[k..].iter_mut().zip(&v) {
            *x -= f * vi;
        }
    }

    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let rii = w[i * rows + i];
        dmin = dmin.min(fabs(rii));
        dmax = dmax.max(fabs(rii));
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= w[j * rows + i] * x[j];
        }
        x[i] = s / rii;
    }
    let condition = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver { condition });
    }
    Ok((x, condition))
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, sorted
/// ascending.
pub fn symmetric_eigenvalues(mut a: RMatrix) -> Vec<f64> {
    let n = a.rows;
    debug_assert_eq!(n, a.cols);
    let scale: f64 = a.data.iter().map(|x| x * x).sum::<f64>();
    let tol = 1e-30 * scale.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = {
                    let sgn = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sgn / (fabs(theta) + sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}
