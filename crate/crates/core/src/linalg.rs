//! Small dense linear algebra: a row-major matrix, Householder least squares
//! with in-order rank detection, and a few helpers the estimators need.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch {
                what: "matrix buffer length",
                expected: nrows * ncols,
                found: data.len(),
            });
        }
        Ok(Matrix { nrows, ncols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::DimensionMismatch {
                    what: "row width",
                    expected: ncols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    /// Builds an `n × columns.len()` matrix from column vectors of length `n`.
    pub fn from_columns<C: AsRef<[f64]>>(nrows: usize, columns: &[C]) -> Result<Self> {
        let ncols = columns.len();
        let mut m = Matrix::zeros(nrows, ncols);
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != nrows {
                return Err(Error::DimensionMismatch {
                    what: "column length",
                    expected: nrows,
                    found: c.len(),
                });
            }
            for (i, &v) in c.iter().enumerate() {
                m.data[i * ncols + j] = v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.data[i * self.ncols + j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            nrows: rows.len(),
            ncols: self.ncols,
            data,
        }
    }

    /// Appends the columns of `other` to the right of `self`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.nrows != other.nrows {
            return Err(Error::DimensionMismatch {
                what: "hstack row count",
                expected: self.nrows,
                found: other.nrows,
            });
        }
        let ncols = self.ncols + other.ncols;
        let mut data = Vec::with_capacity(self.nrows * ncols);
        for i in 0..self.nrows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Matrix {
            nrows: self.nrows,
            ncols,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t.data[j * self.nrows + i] = self.data[i * self.ncols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                what: "matmul inner dimension",
                expected: self.ncols,
                found: other.nrows,
            });
        }
        let mut out = Matrix::zeros(self.nrows, other.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self.data[i * self.ncols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.ncols..(i + 1) * other.ncols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                what: "matvec length",
                expected: self.ncols,
                found: v.len(),
            });
        }
        Ok((0..self.nrows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ · v`.
    pub fn t_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                what: "transpose matvec length",
                expected: self.nrows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.ncols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column `column` lies (numerically) in the span of the earlier columns `partners`.
#[derive(Debug, Clone, PartialEq)]
pub struct Collinearity {
    pub column: usize,
    pub partners: Vec<usize>,
}

/// Householder QR factorisation of a tall design, kept for solving and
/// for the `(XᵀX)⁻¹` needed by covariance estimators.
#[derive(Debug, Clone)]
pub struct QrFactor {
    p: usize,
    /// Upper-triangular factor, row-major `p × p`.
    r: Vec<f64>,
    /// Householder vectors, column-major `n × p` (entries below the diagonal used).
    reflectors: Vec<f64>,
    betas: Vec<f64>,
    n: usize,
}

/// Relative tolerance on `|R_jj| / ‖x_j‖` below which column `j` is declared dependent.
pub const RANK_TOLERANCE: f64 = 1e-9;

impl QrFactor {
    /// Factorises `x` column by column. The first column whose residual
    /// norm after projecting out its predecessors falls under
    /// [`RANK_TOLERANCE`] is reported along with the columns it depends on.
    pub fn new(x: &Matrix) -> core::result::Result<Self, Collinearity> {
        let n = x.nrows();
        let p = x.ncols();
        let mut a = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                a[j * n + i] = x[(i, j)];
            }
        }
        let col_norms: Vec<f64> = (0..p)
            .map(|j| libm::sqrt(a[j * n..(j + 1) * n].iter().map(|v| v * v).sum()))
            .collect();
        let mut r = vec![0.0; p * p];
        let mut betas = vec![0.0; p];

        for j in 0..p {
            let rest = &mut a[j * n..];
            let col = &mut rest[..n];
            let tail_norm = if j < n {
                libm::sqrt(col[j..].iter().map(|v| v * v).sum())
            } else {
                0.0
            };
            if j >= n || tail_norm <= RANK_TOLERANCE * col_norms[j] || col_norms[j] == 0.0 {
                // Express x_j through the triangular block built so far.
                let upper: Vec<f64> = col[..j.min(n)].to_vec();
                let coef = back_substitute(&r, p, j.min(n), &upper);
                let scale = coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                let partners = coef
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| scale > 0.0 && c.abs() > 1e-6 * scale)
                    .map(|(i, _)| i)
                    .collect();
                return Err(Collinearity {
                    column: j,
                    partners,
                });
            }
            let alpha = if col[j] > 0.0 { -tail_norm } else { tail_norm };
            col[j] -= alpha;
            let beta: f64 = col[j..].iter().map(|v| v * v).sum();
            betas[j] = beta;
            r[j * p + j] = alpha;
            // Apply the reflector to the remaining columns.
            let v: Vec<f64> = col[j..].to_vec();
            for k in (j + 1)..p {
                let ck = &mut rest[(k - j) * n..(k - j + 1) * n];
                let s = 2.0 * dot(&v, &ck[j..]) / beta;
                for (c, vi) in ck[j..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
                r[j * p + k] = ck[j];
            }
        }
        Ok(QrFactor {
            p,
            r,
            reflectors: a,
            betas,
            n,
        })
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    /// Least-squares coefficients for response `y`.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "response length",
                expected: self.n,
                found: y.len(),
            });
        }
        let mut qty = y.to_vec();
        for j in 0..self.p {
            let v = &self.reflectors[j * self.n + j..(j + 1) * self.n];
            let s = 2.0 * dot(v, &qty[j..]) / self.betas[j];
            for (q, vi) in qty[j..].iter_mut().zip(v) {
                *q -= s * vi;
            }
        }
        Ok(back_substitute(&self.r, self.p, self.p, &qty[..self.p]))
    }

    /// `(XᵀX)⁻¹ = R⁻¹ R⁻ᵀ`.
    pub fn xtx_inverse(&self) -> Matrix {
        let p = self.p;
        // R⁻¹ column by column.
        let mut rinv = Matrix::zeros(p, p);
        for c in 0..p {
            let mut e = vec![0.0; p];
            e[c] = 1.0;
            let col = back_substitute(&self.r, p, p, &e);
            for i in 0..p {
                rinv[(i, c)] = col[i];
            }
        }
        let mut out = Matrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let s: f64 = (j.max(i)..p).map(|k| rinv[(i, k)] * rinv[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Solves the leading `k × k` block of the row-major upper-triangular `r` (stride `p`).
fn back_substitute(r: &[f64], p: usize, k: usize, rhs: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..k {
            s -= r[i * p + j] * x[j];
        }
        x[i] = s / r[i * p + i];
    }
    x
}

/// Ordinary least squares of `y` on the columns of `x` (no implicit intercept).
pub fn least_squares(x: &Matrix, y: &[f64]) -> core::result::Result<Vec<f64>, Collinearity> {
    let qr = QrFactor::new(x)?;
    // Length was checked by the caller's construction; a mismatch is a programming error.
    Ok(qr.solve(y).expect("response length matches design"))
}

/// Checks symmetry and positive semi-definiteness with an `LDLᵀ` sweep.
pub fn is_positive_semidefinite(m: &Matrix, tol: f64) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * (1.0 + m[(i, j)].abs()) {
                return false;
            }
        }
    }
    let mut a = m.clone();
    for k in 0..n {
        let pivot = a[(k, k)];
        if pivot < -tol {
            return false;
        }
        if pivot <= tol {
            // Zero pivot: the rest of this row must vanish too.
            if ((k + 1)..n).any(|i| a[(i, k)].abs() > libm::sqrt(tol)) {
                return false;
            }
            continue;
        }
        for i in (k + 1)..n {
            let f = a[(i, k)] / pivot;
            for j in (k + 1)..n {
                let v = a[(k, j)];
                a[(i, j)] -= f * v;
            }
        }
    }
    true
}

/// Spectral radius via Gelfand's formula on repeated squaring, `‖B^(2^k)‖^(1/2^k)`.
pub fn spectral_radius(b: &Matrix) -> f64 {
    let frob = |m: &Matrix| libm::sqrt(m.as_slice().iter().map(|v| v * v).sum());
    let mut m = b.clone();
    let mut log_scale = 0.0;
    let mut exponent = 1.0f64;
    let s = frob(&m);
    if s == 0.0 {
        return 0.0;
    }
    for v in m.data.iter_mut() {
        *v /= s;
    }
    log_scale += libm::log(s);
    for _ in 0..40 {
        m = m.matmul(&m).expect("square");
        exponent *= 2.0;
        log_scale *= 2.0;
        let s = frob(&m);
        if s == 0.0 {
            return 0.0;
        }
        for v in m.data.iter_mut() {
            *v /= s;
        }
        log_scale += libm::log(s);
    }
    libm::exp(log_scale / exponent)
}
