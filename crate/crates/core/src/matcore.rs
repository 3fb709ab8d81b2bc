//! Dense linear algebra: the matrix type, SVD, numerical rank, the
//! Moore–Penrose pseudoinverse and orthonormal range bases.
//!
//! The SVD is a one-sided Jacobi method applied after a Householder QR with
//! column pivoting. The QR step stops as soon as every trailing column falls
//! to rounding level, so a large matrix of low numerical rank only pays for
//! Jacobi rotations on its `r` leading rows.

use std::fmt;

use crate::error::{Error, Result};

/// Maximum number of Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 64;

/// Relative off-diagonal threshold below which a column pair counts as
/// orthogonal.
pub const JACOBI_TOL: f64 = 1e-12;

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, checking the length and that every
    /// entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on zero dimensions.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds an `m x k` matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let k = columns.len();
        let m = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::InvalidMatrix("ragged columns".into()));
        }
        let mut data = vec![0.0; m * k];
        for (j, c) in columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                data[i * k + j] = *v;
            }
        }
        Self::new(m, k, data)
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the row-major buffer. Callers are responsible for
    /// keeping the entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.rows); self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (c, v) in row.iter().enumerate() {
                out[c].push(*v);
            }
        }
        out
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Matrix {
        assert!(k >= 1 && k <= self.cols);
        let mut data = Vec::with_capacity(self.rows * k);
        for row in self.data.chunks_exact(self.cols) {
            data.extend_from_slice(&row[..k]);
        }
        Matrix {
            rows: self.rows,
            cols: k,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            &self.data,
            &other.data,
            &mut out.data,
            self.rows,
            self.cols,
            other.cols,
        );
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (m, p, q) = (self.rows, self.cols, other.cols);
        let mut out = Matrix::zeros(p, q);
        for k in 0..m {
            let a = &self.data[k * p..(k + 1) * p];
            let b = &other.data[k * q..(k + 1) * q];
            for (i, ai) in a.iter().enumerate() {
                if *ai == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * q..(i + 1) * q];
                for (d, bj) in dst.iter_mut().zip(b) {
                    *d += ai * bj;
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

/// `c += a · b` for row-major `a` (m×k), `b` (k×n), `c` (m×n).
pub(crate) fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_strided(a, (k, 1), b, (n, 1), c, m, k, n);
}

/// `c += A·B` for `m x k` and `k x n` operands given as (row, column)
/// strides, `c` row-major `m x n`.
pub(crate) fn gemm_strided(
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(a.len() >= (m - 1) * a_strides.0 + (k - 1) * a_strides.1 + 1);
    assert!(b.len() >= (k - 1) * b_strides.0 + (n - 1) * b_strides.1 + 1);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Relative cutoff used to decide which singular values count as nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTolerance {
    relative_threshold: f64,
}

impl RankTolerance {
    pub const DEFAULT: f64 = 1e-10;

    pub fn new(relative_threshold: f64) -> Result<Self> {
        if !(relative_threshold > 0.0 && relative_threshold < 1.0) {
            return Err(Error::InvalidTolerance(relative_threshold));
        }
        Ok(Self { relative_threshold })
    }

    pub fn relative_threshold(&self) -> f64 {
        self.relative_threshold
    }

    /// Absolute cutoff for a spectrum whose largest value is `s_max`.
    pub fn cutoff(&self, s_max: f64) -> f64 {
        self.relative_threshold * s_max
    }
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self {
            relative_threshold: Self::DEFAULT,
        }
    }
}

/// Thin SVD factors `a = u · diag(s) · vᵀ` with `k = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let (m, k) = self.u.shape();
        let n = self.v.rows();
        let mut us = self.u.clone();
        for r in 0..m {
            for c in 0..k {
                us.data[r * k + c] *= self.s[c];
            }
        }
        let mut out = Matrix::zeros(m, n);
        gemm(&us.data, &self.v.transpose().data, &mut out.data, m, k, n);
        out
    }

    pub fn rank(&self, tol: RankTolerance) -> usize {
        count_above(&self.s, tol)
    }
}

fn count_above(s: &[f64], tol: RankTolerance) -> usize {
    let s_max = s.first().copied().unwrap_or(0.0);
    let cut = tol.cutoff(s_max);
    s.iter().filter(|v| **v > cut).count()
}

/// Singular value decomposition by QR-preconditioned one-sided Jacobi.
///
/// Singular values come back sorted non-increasing, and each singular pair
/// is signed so that the largest-magnitude entry of its `u` column is
/// positive.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    decompose(a, true)
}

pub fn rank(a: &Matrix, tol: RankTolerance) -> Result<usize> {
    Ok(svd(a)?.rank(tol))
}

/// Moore–Penrose pseudoinverse with singular values at or below the cutoff
/// treated as zero.
pub fn pseudoinverse(a: &Matrix, tol: RankTolerance) -> Result<Matrix> {
    let f = svd(a)?;
    Ok(pinv_from_factors(&f, tol))
}

pub(crate) fn pinv_from_factors(f: &SvdFactors, tol: RankTolerance) -> Matrix {
    let (m, k) = f.u.shape();
    let n = f.v.rows();
    let r = f.rank(tol);
    let mut out = Matrix::zeros(n, m);
    // A⁺ = Σ_{i<r} v_i u_iᵀ / s_i
    for i in 0..r {
        let inv = 1.0 / f.s[i];
        for row in 0..n {
            let vr = f.v.data[row * k + i] * inv;
            if vr == 0.0 {
                continue;
            }
            let dst = &mut out.data[row * m..(row + 1) * m];
            for (col, d) in dst.iter_mut().enumerate() {
                *d += vr * f.u.data[col * k + i];
            }
        }
    }
    out
}

/// `m x r` matrix whose orthonormal columns span the column space of `a`.
pub fn orthonormal_range_basis(a: &Matrix, tol: RankTolerance) -> Result<Matrix> {
    let f = decompose(a, false)?;
    let r = f.rank(tol);
    if r == 0 {
        return Err(Error::EmptySubspace(format!(
            "{}x{} matrix has rank zero",
            a.rows(),
            a.cols()
        )));
    }
    Ok(f.u.leading_columns(r))
}

/// Shared driver. When `complete` is false the `u` columns beyond the
/// numerical rank of the QR step and all of `v` past it may be left as zero;
/// only the range basis path uses that shortcut.
fn decompose(a: &Matrix, complete: bool) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    if m >= n {
        let (u, s, v) = svd_tall(a.columns(), m, complete)?;
        let mut f = SvdFactors {
            u: Matrix::from_columns(&u)?,
            s,
            v: Matrix::from_columns(&v)?,
        };
        fix_signs(&mut f);
        Ok(f)
    } else {
        // Aᵀ = U' S V'ᵀ  ⇒  A = V' S U'ᵀ
        let rows: Vec<Vec<f64>> = (0..m).map(|r| a.row(r).to_vec()).collect();
        let (u_t, s, v_t) = svd_tall(rows, n, true)?;
        let mut f = SvdFactors {
            u: Matrix::from_columns(&v_t)?,
            s,
            v: Matrix::from_columns(&u_t)?,
        };
        fix_signs(&mut f);
        Ok(f)
    }
}

fn fix_signs(f: &mut SvdFactors) {
    let (m, k) = f.u.shape();
    let n = f.v.rows();
    for c in 0..k {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for r in 0..m {
            let v = f.u.data[r * k + c].abs();
            if v > best_abs {
                best_abs = v;
                best = r;
            }
        }
        if f.u.data[best * k + c] < 0.0 {
            for r in 0..m {
                f.u.data[r * k + c] = -f.u.data[r * k + c];
            }
            for r in 0..n {
                f.v.data[r * k + c] = -f.v.data[r * k + c];
            }
        }
    }
}

/// Householder reflector `I - 2 v vᵀ / (vᵀv)` acting on rows `offset..`.
struct Reflector {
    offset: usize,
    v: Vec<f64>,
    scale: f64,
}

impl Reflector {
    /// Builds the reflector mapping `x` onto a multiple of e₀. Returns the
    /// reflector together with the resulting leading entry.
    fn annihilate(x: &[f64], offset: usize) -> (Self, f64) {
        let norm = norm2(x);
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        let scale = if vv > 0.0 { 2.0 / vv } else { 0.0 };
        (Self { offset, v, scale }, alpha)
    }

    fn apply(&self, y: &mut [f64]) {
        if self.scale == 0.0 {
            return;
        }
        let tail = &mut y[self.offset..];
        let f = self.scale * dot(&self.v, tail);
        if f == 0.0 {
            return;
        }
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= f * v;
        }
    }
}

/// Applies `H_0 H_1 ... H_{r-1}` to `y`.
fn apply_q(reflectors: &[Reflector], y: &mut [f64]) {
    for h in reflectors.iter().rev() {
        h.apply(y);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the loop vectorizes; the order is fixed so results
    // stay bit-reproducible.
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
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
fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

type Columns = Vec<Vec<f64>>;

/// SVD of an `m x n` matrix with `m >= n`, given by its columns. Returns
/// `(u columns [n of length m], s [n], v columns [n of length n])`.
fn svd_tall(mut cols: Columns, m: usize, complete: bool) -> Result<(Columns, Vec<f64>, Columns)> {
    let n = cols.len();
    debug_assert!(m >= n);

    let col_norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let max_norm = col_norms.iter().cloned().fold(0.0, f64::max);
    // Trailing columns below this size are rounding noise.
    let stop = (m.max(n) as f64) * f64::EPSILON * max_norm;

    // Householder QR with column pivoting: A P = Q R.
    let mut perm: Vec<usize> = (0..n).collect();
    let mut trailing: Vec<f64> = col_norms.iter().map(|v| v * v).collect();
    let mut reflectors: Vec<Reflector> = Vec::new();
    if max_norm > 0.0 {
        for k in 0..n {
            let mut p = k;
            for j in k + 1..n {
                if trailing[j] > trailing[p] {
                    p = j;
                }
            }
            if trailing[p].sqrt() <= stop {
                break;
            }
            cols.swap(k, p);
            perm.swap(k, p);
            trailing.swap(k, p);
            let (h, alpha) = Reflector::annihilate(&cols[k][k..], k);
            cols[k][k] = alpha;
            for v in &mut cols[k][k + 1..] {
                *v = 0.0;
            }
            for col in cols.iter_mut().skip(k + 1) {
                h.apply(col);
            }
            reflectors.push(h);
            for j in k + 1..n {
                trailing[j] = dot(&cols[j][k + 1..], &cols[j][k + 1..]);
            }
        }
    }
    let r = reflectors.len();

    // Rows of R (r x n) become the columns of Rᵀ, which Jacobi orthogonalizes.
    let mut x: Columns = (0..r)
        .map(|i| (0..n).map(|j| if j >= i { cols[j][i] } else { 0.0 }).collect())
        .collect();
    drop(cols);
    let mut rot: Columns = (0..r)
        .map(|i| {
            let mut e = vec![0.0; r];
            e[i] = 1.0;
            e
        })
        .collect();
    jacobi(&mut x, &mut rot)?;

    // Rᵀ·V' = W  ⇒  R = V' Σ Ŵᵀ, so U_R = V' and V_R = W Σ⁻¹.
    let s_raw: Vec<f64> = x.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s_raw[b].partial_cmp(&s_raw[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u: Columns = Vec::with_capacity(n);
    let mut s = vec![0.0; n];
    let mut v: Columns = Vec::with_capacity(n);
    let mut v_missing: Vec<usize> = Vec::new();
    for (t, &i) in order.iter().enumerate() {
        s[t] = s_raw[i];
        let mut ucol = vec![0.0; m];
        ucol[..r].copy_from_slice(&rot[i]);
        apply_q(&reflectors, &mut ucol);
        u.push(ucol);
        if s_raw[i] > 0.0 {
            let inv = 1.0 / s_raw[i];
            let mut vcol = vec![0.0; n];
            for (j, xv) in x[i].iter().enumerate() {
                vcol[perm[j]] = xv * inv;
            }
            v.push(vcol);
        } else {
            v_missing.push(t);
            v.push(Vec::new());
        }
    }

    if !complete {
        u.resize(n, vec![0.0; m]);
        v.resize(n, vec![0.0; n]);
        for t in v_missing {
            v[t] = vec![0.0; n];
        }
        return Ok((u, s, v));
    }

    // Remaining u columns: Q e_t for t ≥ r, orthogonal to the leading block.
    for t in r..n {
        let mut e = vec![0.0; m];
        e[t] = 1.0;
        apply_q(&reflectors, &mut e);
        u.push(e);
    }
    // Remaining v columns: an orthonormal complement of the ones we have.
    let known: Columns = v.iter().filter(|c| !c.is_empty()).cloned().collect();
    let need = n - known.len();
    let extra = orthonormal_complement(&known, n, need);
    let mut extra = extra.into_iter();
    for t in v_missing {
        v[t] = extra.next().expect("complement size");
    }
    v.extend(extra);
    Ok((u, s, v))
}

/// Cyclic one-sided Jacobi on the columns of `x`, accumulating the
/// rotations in `rot`.
fn jacobi(x: &mut Columns, rot: &mut Columns) -> Result<()> {
    let k = x.len();
    if k < 2 {
        return Ok(());
    }
    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        let mut residual = 0.0f64;
        for i in 0..k - 1 {
            for j in i + 1..k {
                let (xi, xj) = pair_mut(x, i, j);
                let alpha = dot(xi, xi);
                let beta = dot(xj, xj);
                let gamma = dot(xi, xj);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= JACOBI_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta.abs() > 1e150 {
                    0.5 / zeta
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                rotate(xi, xj, c, sn);
                let (ri, rj) = pair_mut(rot, i, j);
                rotate(ri, rj, c, sn);
            }
        }
        if !rotated {
            return Ok(());
        }
        if sweep + 1 == MAX_SWEEPS {
            return Err(Error::NonConvergence {
                sweeps: MAX_SWEEPS,
                residual,
            });
        }
    }
    unreachable!()
}

#[inline]
fn rotate(a: &mut [f64], b: &mut [f64], c: f64, s: f64) {
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (p, q) = (*x, *y);
        *x = c * p - s * q;
        *y = s * p + c * q;
    }
}

fn pair_mut(v: &mut [Vec<f64>], i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (lo, hi) = v.split_at_mut(j);
    (&mut lo[i], &mut hi[0])
}

/// `need` orthonormal vectors in `R^n` orthogonal to the orthonormal set
/// `basis`, obtained from a Householder QR of the basis.
fn orthonormal_complement(basis: &[Vec<f64>], n: usize, need: usize) -> Columns {
    if need == 0 {
        return Vec::new();
    }
    let mut work: Columns = basis.to_vec();
    let p = work.len();
    let mut reflectors = Vec::with_capacity(p);
    for k in 0..p {
        let (h, alpha) = Reflector::annihilate(&work[k][k..], k);
        work[k][k] = alpha;
        for col in work.iter_mut().skip(k + 1) {
            h.apply(col);
        }
        reflectors.push(h);
    }
    (p..p + need)
        .map(|t| {
            let mut e = vec![0.0; n];
            e[t] = 1.0;
            apply_q(&reflectors, &mut e);
            e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_singular_values() {
        let f = svd(&Matrix::identity(2)).unwrap();
        assert_eq!(f.s, vec![1.0, 1.0]);
    }

    #[test]
    fn diagonal_needs_no_permutation() {
        let f = svd(&Matrix::diag(&[3.0, 2.0])).unwrap();
        assert_eq!(f.s, vec![3.0, 2.0]);
        assert!(max_abs_diff(&f.u, &Matrix::identity(2)) < 1e-15);
        assert!(max_abs_diff(&f.v, &Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let z = Matrix::zeros(4, 4);
        assert_eq!(rank(&z, RankTolerance::default()).unwrap(), 0);
        let f = svd(&z).unwrap();
        let utu = f.u.tr_matmul(&f.u).unwrap();
        assert!(max_abs_diff(&utu, &Matrix::identity(4)) < 1e-15);
    }

    #[test]
    fn tiny_singular_value_is_below_default_cutoff() {
        let d = Matrix::diag(&[1.0, 1e-14]);
        assert_eq!(rank(&d, RankTolerance::default()).unwrap(), 1);
        assert_eq!(rank(&d, RankTolerance::new(1e-15).unwrap()).unwrap(), 2);
    }

    #[test]
    fn proportional_columns_have_rank_one() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]).unwrap();
        assert_eq!(rank(&a, RankTolerance::default()).unwrap(), 1);
        assert_eq!(rank(&a.transpose(), RankTolerance::default()).unwrap(), 1);
    }

    #[test]
    fn pseudoinverse_examples() {
        let tol = RankTolerance::default();
        let a = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]).unwrap();
        let p = pseudoinverse(&a, tol).unwrap();
        let want = Matrix::from_rows(&[&[0.5, 0.0], &[0.0, 0.25]]).unwrap();
        assert!(max_abs_diff(&p, &want) < 1e-15);

        let z = Matrix::zeros(3, 2);
        let pz = pseudoinverse(&z, tol).unwrap();
        assert_eq!(pz.shape(), (2, 3));
        assert!(pz.is_zero());

        let b = Matrix::from_rows(&[&[1.0, 0.0], &[1.0, 0.0]]).unwrap();
        let pb = pseudoinverse(&b, tol).unwrap();
        let want = Matrix::from_rows(&[&[0.5, 0.5], &[0.0, 0.0]]).unwrap();
        assert!(max_abs_diff(&pb, &want) < 1e-15, "{pb:?}");
    }

    #[test]
    fn range_basis_examples() {
        let tol = RankTolerance::default();
        let a = Matrix::from_rows(&[&[3.0], &[4.0]]).unwrap();
        let q = orthonormal_range_basis(&a, tol).unwrap();
        assert!((q.get(0, 0).abs() - 0.6).abs() < 1e-15);
        assert!((q.get(1, 0).abs() - 0.8).abs() < 1e-15);

        let q = orthonormal_range_basis(&Matrix::identity(3), tol).unwrap();
        let qtq = q.tr_matmul(&q).unwrap();
        let qqt = q.matmul(&q.transpose()).unwrap();
        assert!(max_abs_diff(&qtq, &Matrix::identity(3)) < 1e-15);
        assert!(max_abs_diff(&qqt, &Matrix::identity(3)) < 1e-15);

        let ones = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let q = orthonormal_range_basis(&ones, tol).unwrap();
        assert_eq!(q.cols(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((q.get(0, 0).abs() - h).abs() < 1e-15);
        assert!((q.get(1, 0).abs() - h).abs() < 1e-15);

        assert!(matches!(
            orthonormal_range_basis(&Matrix::zeros(3, 3), tol),
            Err(Error::EmptySubspace(_))
        ));
    }

    #[test]
    fn wide_matrix_factors_have_expected_shapes() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.5]]).unwrap();
        let f = svd(&a).unwrap();
        assert_eq!(f.u.shape(), (2, 2));
        assert_eq!(f.v.shape(), (3, 2));
        assert!(max_abs_diff(&f.reconstruct(), &a) < 1e-13);
    }

    #[test]
    fn largest_u_entry_is_positive() {
        let a = Matrix::from_rows(&[&[-5.0, 1.0], &[-1.0, -2.0], &[0.5, 0.0]]).unwrap();
        let f = svd(&a).unwrap();
        for c in 0..2 {
            let col = f.u.column(c);
            let best = col
                .iter()
                .cloned()
                .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            assert!(best > 0.0);
        }
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0, 2.0, 3.0]),
            Err(Error::InvalidMatrix(_))
        ));
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(RankTolerance::new(0.0).is_err());
        assert!(RankTolerance::new(1.0).is_err());
    }
}
