//! Dense numerical kernels: matrix products, Householder QR, cyclic-Jacobi
//! symmetric eigendecomposition, and seeded Gaussian matrices.
//!
//! Everything here is `f64`, row-major, and deterministic. The kernels only
//! need to be fast for the small square matrices that embedding projection
//! uses (dims well under 128), so clarity wins over blocking tricks.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng64;

static QR_CALLS: AtomicU64 = AtomicU64::new(0);
static EIG_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of (QR, eigendecomposition) kernel invocations so far.
///
/// Lets tests assert cost contracts such as "building a reduction plan runs
/// exactly one eigendecomposition".
pub fn kernel_counts() -> (u64, u64) {
    (QR_CALLS.load(Ordering::Relaxed), EIG_CALLS.load(Ordering::Relaxed))
}

/// Row-major dense matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Matrix { rows, cols, data: vec![0.0; rows * cols] })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::Dimension("matrix must have at least one row and column".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix { rows: self.cols, cols: self.rows, data: vec![0.0; self.data.len()] };
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix { rows: self.rows, cols: other.cols, data: vec![0.0; self.rows * other.cols] };
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, f: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * f).collect() }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Copy of columns `[c0, c1)`.
    pub fn columns(&self, c0: usize, c1: usize) -> Result<Matrix> {
        if c0 >= c1 || c1 > self.cols {
            return Err(Error::Dimension(format!(
                "column range {c0}..{c1} invalid for {} columns",
                self.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, c1 - c0)?;
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[c0..c1]);
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Eigendecomposition of a symmetric matrix: descending eigenvalues and the
/// matching orthonormal eigenvector columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

/// QR decomposition of a square matrix via Householder reflections.
///
/// The sign convention fixes the diagonal of `r` to be non-negative, which
/// makes decompositions reproducible. Rank-deficient input is allowed; the
/// columns of `q` are orthonormal regardless.
pub fn qr_decompose(m: &Matrix) -> Result<(Matrix, Matrix)> {
    if m.rows() != m.cols() {
        return Err(Error::Dimension(format!(
            "qr_decompose requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Numeric("qr_decompose input must be finite".into()));
    }
    QR_CALLS.fetch_add(1, Ordering::Relaxed);
    let n = m.rows();
    let mut r = m.clone();
    let mut q = Matrix::identity(n)?;
    let mut v = vec![0.0; n];

    for k in 0..n {
        let mut norm_sq = 0.0;
        for i in k..n {
            let x = r.get(i, k);
            v[i] = x;
            norm_sq += x * x;
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if v[k] >= 0.0 { -norm } else { norm };
        v[k] -= alpha;
        let vnorm_sq: f64 = (k..n).map(|i| v[i] * v[i]).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm_sq;

        // R := (I - beta v v^T) R
        for j in k..n {
            let dot: f64 = (k..n).map(|i| v[i] * r.get(i, j)).sum();
            let f = beta * dot;
            for i in k..n {
                let val = r.get(i, j) - f * v[i];
                r.set(i, j, val);
            }
        }
        // Q := Q (I - beta v v^T)
        for i in 0..n {
            let dot: f64 = (k..n).map(|j| q.get(i, j) * v[j]).sum();
            let f = beta * dot;
            for j in k..n {
                let val = q.get(i, j) - f * v[j];
                q.set(i, j, val);
            }
        }
    }

    // Clear sub-diagonal dust and fix the sign convention.
    for i in 0..n {
        for j in 0..i {
            r.set(i, j, 0.0);
        }
    }
    for i in 0..n {
        if r.get(i, i) < 0.0 {
            for j in i..n {
                let val = -r.get(i, j);
                r.set(i, j, val);
            }
            for rr in 0..n {
                let val = -q.get(rr, i);
                q.set(rr, i, val);
            }
        }
    }
    Ok((q, r))
}

/// Symmetric eigendecomposition via cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal norm drops below `1e-12` (relative to the
/// input's Frobenius norm) with a cap of 100 sweeps; plenty for the small
/// covariance matrices projection works with. Eigenvalues are returned in
/// descending order and each eigenvector's first non-zero component is made
/// positive so results are reproducible.
pub fn sym_eig(c: &Matrix) -> Result<EigenResult> {
    if c.rows() != c.cols() {
        return Err(Error::Shape(format!(
            "sym_eig requires a square matrix, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let n = c.rows();
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((c.get(i, j) - c.get(j, i)).abs());
        }
    }
    if asym > 1e-9 {
        return Err(Error::Shape(format!("input asymmetric beyond tolerance: {asym:e}")));
    }
    EIG_CALLS.fetch_add(1, Ordering::Relaxed);

    let mut a = c.clone();
    // Symmetrize so rotations stay exact under round-off in the input.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    let mut vmat = Matrix::identity(n)?;
    let tol = 1e-12 * c.frobenius_sq().sqrt().max(1.0);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let cos = 1.0 / (1.0 + t * t).sqrt();
                let sin = t * cos;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, cos * akp - sin * akq);
                    a.set(k, q, sin * akp + cos * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, cos * apk - sin * aqk);
                    a.set(q, k, sin * apk + cos * aqk);
                }
                for k in 0..n {
                    let vkp = vmat.get(k, p);
                    let vkq = vmat.get(k, q);
                    vmat.set(k, p, cos * vkp - sin * vkq);
                    vmat.set(k, q, sin * vkp + cos * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j).partial_cmp(&a.get(i, i)).unwrap_or(std::cmp::Ordering::Equal)
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut eigenvectors = Matrix::zeros(n, n)?;
    for (new_col, &old_col) in order.iter().enumerate() {
        let mut sign = 1.0;
        for k in 0..n {
            let v = vmat.get(k, old_col);
            if v.abs() > 1e-12 {
                sign = if v >= 0.0 { 1.0 } else { -1.0 };
                break;
            }
        }
        for k in 0..n {
            eigenvectors.set(k, new_col, sign * vmat.get(k, old_col));
        }
    }
    Ok(EigenResult { eigenvalues, eigenvectors })
}

/// Matrix of i.i.d. standard normals, deterministic for a fixed seed.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    let mut m = Matrix::zeros(rows, cols)?;
    let mut rng = Rng64::new(seed);
    for x in m.data_mut() {
        *x = rng.next_normal();
    }
    Ok(m)
}
