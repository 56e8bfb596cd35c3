//! Dense real linear algebra sized for desk-scale problems.
//!
//! Everything here is a pure function of its inputs. Matrices are row-major
//! `f64`; vectors are plain slices. Products go through `matrixmultiply`,
//! which is single-threaded and uses a fixed blocking for a given shape, so
//! results are bit-reproducible run to run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds the diagonal matrix with the given entries.
    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Outer product `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut data = Vec::with_capacity(u.len() * v.len());
        for &a in u {
            data.extend(v.iter().map(|&b| a * b));
        }
        Matrix {
            rows: u.len(),
            cols: v.len(),
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; an empty-column matrix has no meaningful rows anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Stacks `self` on top of `other` (same column count).
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.cols,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    /// `M M^T` (rows × rows).
    pub fn gram_rows(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.rows);
        gemm_nt(1.0, self, self, 0.0, &mut out);
        out
    }

    /// `M^T M` (cols × cols).
    pub fn gram_cols(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.cols);
        // SAFETY: shapes checked by construction; strides describe the
        // transposed view of `self` for the left operand.
        unsafe {
            matrixmultiply::dgemm(
                self.cols,
                self.rows,
                self.cols,
                1.0,
                self.data.as_ptr(),
                1,
                self.cols as isize,
                self.data.as_ptr(),
                self.cols as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                out.cols as isize,
                1,
            );
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `c = alpha * a * b^T + beta * c`, where `a` is p×k, `b` is q×k, `c` is p×q.
pub fn gemm_nt(alpha: f64, a: &Matrix, b: &Matrix, beta: f64, c: &mut Matrix) {
    assert_eq!(a.cols, b.cols, "gemm_nt inner dimension");
    assert_eq!((c.rows, c.cols), (a.rows, b.rows), "gemm_nt output shape");
    if c.data.is_empty() {
        return;
    }
    // SAFETY: dimensions asserted above; b is read through its transpose.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.rows,
            alpha,
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            1,
            b.cols as isize,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// `c = alpha * a * b + beta * c`, where `a` is p×k, `b` is k×q, `c` is p×q.
pub fn gemm_nn(alpha: f64, a: &Matrix, b: &Matrix, beta: f64, c: &mut Matrix) {
    assert_eq!(a.cols, b.rows, "gemm_nn inner dimension");
    assert_eq!((c.rows, c.cols), (a.rows, b.cols), "gemm_nn output shape");
    if c.data.is_empty() {
        return;
    }
    // SAFETY: dimensions asserted above.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    norm2(&m.data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out but the last two estimates were still
    /// within `100 * tol` of each other.
    pub converged: bool,
}

/// Largest singular value by power iteration on the smaller Gram matrix.
///
/// The start vector is all-ones (normalized); if its Rayleigh quotient is
/// exactly zero the iteration restarts from the first canonical basis vector.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<SpectralNorm> {
    if m.is_empty() {
        return Err(Error::InvalidArgument("spectral_norm of empty matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let gram = if m.rows <= m.cols {
        m.gram_rows()
    } else {
        m.gram_cols()
    };
    let k = gram.rows;

    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut w = gram.matvec(&v);
    let mut lambda = dot(&v, &w);
    if lambda == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
        w = gram.matvec(&v);
        lambda = dot(&v, &w);
    }
    if lambda == 0.0 && norm2(&w) == 0.0 && frobenius_norm(m) == 0.0 {
        return Ok(SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let mut prev_change = f64::INFINITY;
    for it in 1..=max_iter {
        let nw = norm2(&w);
        if nw == 0.0 {
            // v landed in the null space of a nonzero Gram; fall back to a basis vector
            v.iter_mut().for_each(|x| *x = 0.0);
            v[it % k] = 1.0;
        } else {
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / nw;
            }
        }
        w = gram.matvec(&v);
        let next = dot(&v, &w);
        let change = (next - lambda).abs() / next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if change <= tol {
            return Ok(SpectralNorm {
                value: lambda.max(0.0).sqrt(),
                iterations: it,
                converged: true,
            });
        }
        prev_change = change;
    }
    if prev_change > 100.0 * tol {
        return Err(Error::NonConvergence {
            iterations: max_iter,
            estimate: lambda.max(0.0).sqrt(),
        });
    }
    Ok(SpectralNorm {
        value: lambda.max(0.0).sqrt(),
        iterations: max_iter,
        converged: false,
    })
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Fails with `SingularGram` when a pivot falls below `1e-12` times the
    /// largest diagonal entry.
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.rows;
        if a.cols != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.cols,
            });
        }
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
        let floor = 1e-12 * max_diag;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let pivot = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
            if !(pivot > floor) || pivot <= 0.0 {
                return Err(Error::SingularGram { pivot: j, value: pivot });
            }
            let ljj = pivot.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows;
        assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &z[..i]);
            z[i] = (z[i] - s) / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = 0.0;
            for k in i + 1..n {
                s += self.l[(k, i)] * z[k];
            }
            z[i] = (z[i] - s) / self.l[(i, i)];
        }
        z
    }
}

/// Solves `(X X^T) z = b` by Cholesky.
pub fn gram_solve(x: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != x.rows {
        return Err(Error::DimensionMismatch {
            expected: x.rows,
            got: b.len(),
        });
    }
    Ok(Cholesky::factor(&x.gram_rows())?.solve(b))
}

/// Nonnegative least squares `min ‖Aλ − b‖₂ s.t. λ ≥ 0` (Lawson–Hanson active set).
pub fn nnls(a: &Matrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(Error::DimensionMismatch {
            expected: a.rows,
            got: b.len(),
        });
    }
    let ata = a.gram_cols();
    let atb = a.transpose().matvec(b);
    nnls_normal(&ata, &atb, tol)
}

/// Active-set NNLS on the normal equations `AᵀA`, `Aᵀb`.
///
/// Optimality is declared when every inactive coordinate has gradient
/// component `(Aᵀb − AᵀAλ)_j ≤ tol · max(1, ‖Aᵀb‖∞)`.
pub fn nnls_normal(ata: &Matrix, atb: &[f64], tol: f64) -> Result<Vec<f64>> {
    let q = atb.len();
    if ata.rows != q || ata.cols != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: ata.rows,
        });
    }
    let scale = atb.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let thresh = tol * scale;
    let mut x = vec![0.0; q];
    let mut passive = vec![false; q];
    // columns that produced a singular passive subsystem; never re-entered
    let mut barred = vec![false; q];
    let limit = 10 * q.max(1);

    let gradient = |x: &[f64]| -> Vec<f64> {
        let ax = ata.matvec(x);
        atb.iter().zip(&ax).map(|(b, a)| b - a).collect()
    };

    let mut cycles = 0;
    loop {
        let w = gradient(&x);
        let entering = (0..q)
            .filter(|&j| !passive[j] && !barred[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(jstar) = entering.filter(|&j| w[j] > thresh) else {
            return Ok(x);
        };
        cycles += 1;
        if cycles > limit {
            return Err(Error::IterationLimit { limit });
        }
        passive[jstar] = true;

        loop {
            let idx: Vec<usize> = (0..q).filter(|&j| passive[j]).collect();
            let sub = Matrix::from_vec(
                idx.len(),
                idx.len(),
                idx.iter()
                    .flat_map(|&r| idx.iter().map(move |&c| ata[(r, c)]))
                    .collect(),
            )?;
            let rhs: Vec<f64> = idx.iter().map(|&j| atb[j]).collect();
            let s_sub = match Cholesky::factor(&sub) {
                Ok(ch) => ch.solve(&rhs),
                Err(Error::SingularGram { .. }) => {
                    passive[jstar] = false;
                    barred[jstar] = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if s_sub.iter().all(|&v| v > 0.0) {
                x.iter_mut().for_each(|v| *v = 0.0);
                for (&j, &v) in idx.iter().zip(&s_sub) {
                    x[j] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&j, &s) in idx.iter().zip(&s_sub) {
                if s <= 0.0 {
                    let denom = x[j] - s;
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = if alpha.is_finite() { alpha } else { 0.0 };
            let mut s_full = vec![0.0; q];
            for (&j, &v) in idx.iter().zip(&s_sub) {
                s_full[j] = v;
            }
            for j in 0..q {
                if passive[j] {
                    x[j] += alpha * (s_full[j] - x[j]);
                    if x[j] <= 1e-15 * scale.max(1.0) {
                        x[j] = 0.0;
                        passive[j] = false;
                    }
                }
            }
            cycles += 1;
            if cycles > limit {
                return Err(Error::IterationLimit { limit });
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted descending.
///
/// This is a slow reference solver used to cross-check the power-iteration
/// and Gershgorin paths on small matrices (n ≤ ~50).
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows;
    assert_eq!(n, a.cols, "symmetric_eigenvalues needs a square matrix");
    let mut m = a.clone();
    let total = frobenius_norm(&m).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}
