//! SVD view of channel fusion.
//!
//! For `X ∈ R^{T×C}` split into `X_i = X[:, :n]` and `X_j = X[:, C−n:]`, the
//! fused block `a·X_i + b·X_j` equals `a·U₁Σ₁V₁ᵀ + b·U₂Σ₂V₂ᵀ` exactly, and is
//! close to `U₁(aΣ₁ + bΣ₂)V₁ᵀ` when both blocks share singular vectors.

use std::ops::{Index, IndexMut};

use crate::error::{dim, Error, Result};

pub const MAX_SWEEPS: usize = 60;
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return dim(format!("{rows}×{cols} matrix needs {} values, got {}", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return dim(format!(
                "cannot multiply {}×{} by {}×{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let v = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += v * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Matrix, b: f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return dim("combine requires equal shapes");
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Columns `start..start+len`.
    pub fn column_block(&self, start: usize, len: usize) -> Result<Matrix> {
        if start + len > self.cols {
            return dim(format!("columns {start}..{} out of {}", start + len, self.cols));
        }
        Ok(Matrix::from_fn(self.rows, len, |i, j| self[(i, start + j)]))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    /// Copies columns in the given order.
    pub fn select_columns(&self, order: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, order.len(), |i, j| self[(i, order[j])])
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Thin SVD `A = U·diag(S)·Vᵀ` with `r = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Matrix {
        let us = Matrix::from_fn(self.u.rows(), self.s.len(), |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.transpose()).expect("thin SVD factors are conformable")
    }

    /// Number of singular values above the negligible threshold (the rest are stored as exact zeros).
    pub fn rank(&self) -> usize {
        self.s.iter().filter(|&&v| v > 0.0).count()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| p * q).sum()
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Column pairs of a working copy of `A` are rotated until they are mutually
/// orthogonal; the accumulated rotations form `V`, the column norms are the
/// singular values and the normalised columns form `U`. Each `U` column is
/// signed so its first non-negligible entry is positive.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("SVD input contains non-finite entries".into()));
    }
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::Argument("SVD of an empty matrix".into()));
    }
    if a.rows < a.cols {
        let t = svd(&a.transpose())?;
        let mut f = SvdFactors { u: t.v, s: t.s, v: t.u };
        normalize_signs(&mut f);
        return Ok(f);
    }

    let (m, n) = (a.rows, a.cols);
    // column-major working storage
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 || gamma == 0.0 {
                    continue;
                }
                off += gamma * gamma / (alpha * beta);
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if off.sqrt() < OFF_DIAGONAL_TOL {
            break;
        }
    }

    let mut sigma: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let scale = sigma.iter().cloned().fold(0.0, f64::max);
    let negligible = scale * (m.max(n) as f64) * f64::EPSILON;

    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if sigma[j] > negligible && sigma[j] > 0.0 {
            let col: Vec<f64> = cols[j].iter().map(|x| x / sigma[j]).collect();
            u.set_column(k, &col);
        } else {
            sigma[j] = 0.0;
            missing.push(k);
        }
        s.push(sigma[j]);
        v.set_column(k, &vcols[j]);
    }
    complete_orthonormal(&mut u, &missing);
    let mut f = SvdFactors { u, s, v };
    normalize_signs(&mut f);
    Ok(f)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all others.
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    let m = u.rows();
    let mut basis = 0;
    for &k in missing {
        loop {
            let mut cand: Vec<f64> = (0..m).map(|i| if i == basis { 1.0 } else { 0.0 }).collect();
            basis += 1;
            // two Gram-Schmidt passes keep the result orthogonal to working precision
            for _ in 0..2 {
                for j in (0..u.cols()).filter(|&j| j != k) {
                    let col = u.column(j);
                    let proj = dot(&cand, &col);
                    for (c, x) in cand.iter_mut().zip(&col) {
                        *c -= proj * x;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 1e-3 {
                cand.iter_mut().for_each(|c| *c /= norm);
                u.set_column(k, &cand);
                break;
            }
        }
    }
}

fn normalize_signs(f: &mut SvdFactors) {
    for k in 0..f.s.len() {
        let col = f.u.column(k);
        let peak = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lead = col.iter().find(|x| x.abs() > 1e-10 * peak.max(1e-300));
        if matches!(lead, Some(&x) if x < 0.0) {
            for i in 0..f.u.rows() {
                f.u[(i, k)] = -f.u[(i, k)];
            }
            for i in 0..f.v.rows() {
                f.v[(i, k)] = -f.v[(i, k)];
            }
        }
    }
}

fn blocks(x: &Matrix, n: usize) -> Result<(Matrix, Matrix)> {
    if n == 0 || 2 * n > x.cols() {
        return Err(Error::Config(format!("group width n = {n} invalid for {} channels", x.cols())));
    }
    Ok((x.column_block(0, n)?, x.column_block(x.cols() - n, n)?))
}

/// `a·X[:, :n] + b·X[:, C−n:]`.
pub fn fuse_submatrices(x: &Matrix, n: usize, a: f64, b: f64) -> Result<Matrix> {
    let (xi, xj) = blocks(x, n)?;
    xi.combine(a, &xj, b)
}

/// Frobenius distance between `a·U₁Σ₁V₁ᵀ + b·U₂Σ₂V₂ᵀ` and the directly fused block.
pub fn linear_identity_residual(x: &Matrix, n: usize, a: f64, b: f64) -> Result<f64> {
    let (xi, xj) = blocks(x, n)?;
    let ri = svd(&xi)?.reconstruct();
    let rj = svd(&xj)?.reconstruct();
    let via_svd = ri.combine(a, &rj, b)?;
    let direct = xi.combine(a, &xj, b)?;
    Ok(via_svd.combine(1.0, &direct, -1.0)?.frobenius_norm())
}

/// Singular values of `X_j` signed to match the orientation of `X_i`'s
/// singular vector pairs: component `k` of `X_j` counts negatively when exactly
/// one of `u₂ₖ`, `v₂ₖ` points against `u₁ₖ`, `v₁ₖ`. Without this, a block
/// `X_j = c·X_i` with `c < 0` would be reported as `|c|·X_i`.
pub fn aligned_singular_values(fi: &SvdFactors, fj: &SvdFactors) -> Vec<f64> {
    (0..fj.s.len())
        .map(|k| {
            let su = dot(&fi.u.column(k), &fj.u.column(k)).signum();
            let sv = dot(&fi.v.column(k), &fj.v.column(k)).signum();
            fj.s[k] * su * sv
        })
        .collect()
}

fn shared_pattern_parts(x: &Matrix, n: usize, a: f64, b: f64) -> Result<(Matrix, Matrix, Matrix)> {
    let (xi, xj) = blocks(x, n)?;
    let fi = svd(&xi)?;
    let fj = svd(&xj)?;
    let s2 = aligned_singular_values(&fi, &fj);
    let mixed: Vec<f64> = fi.s.iter().zip(&s2).map(|(s1, s2)| a * s1 + b * s2).collect();
    let shared = SvdFactors {
        u: fi.u,
        s: mixed,
        v: fi.v,
    }
    .reconstruct();
    let fused = xi.combine(a, &xj, b)?;
    Ok((shared, fused, xj))
}

/// Relative error of the shared-pattern approximation `U₁(aΣ₁ + bΣ₂)V₁ᵀ`
/// against the fused block, normalised by `‖X_fused‖_F`.
pub fn shared_pattern_error(x: &Matrix, n: usize, a: f64, b: f64) -> Result<f64> {
    let (shared, fused, _) = shared_pattern_parts(x, n, a, b)?;
    let norm = fused.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("fused block is identically zero".into()));
    }
    Ok(shared.combine(1.0, &fused, -1.0)?.frobenius_norm() / norm)
}

/// How far `X_j` is from being expressible in `X_i`'s singular pairs:
/// `‖U₁Σ̃₂V₁ᵀ − X_j‖_F / ‖X_j‖_F`. Unlike [`shared_pattern_error`] this does not
/// depend on `a`, `b` or on positive rescaling of `X_j`.
pub fn pattern_mismatch(x: &Matrix, n: usize) -> Result<f64> {
    let (shared, _, xj) = shared_pattern_parts(x, n, 0.0, 1.0)?;
    let norm = xj.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("back block is identically zero".into()));
    }
    Ok(shared.combine(1.0, &xj, -1.0)?.frobenius_norm() / norm)
}

/// Principal angles (radians, ascending) between the column spaces of two
/// matrices with orthonormal columns.
///
/// Cosines come from the singular values of `U₁ᵀU₂` and sines from those of
/// `(I − U₁U₁ᵀ)U₂`; pairing them through `atan2` keeps small angles accurate.
pub fn principal_angles(u1: &Matrix, u2: &Matrix) -> Result<Vec<f64>> {
    if u1.rows() != u2.rows() {
        return dim(format!("bases live in R^{} and R^{}", u1.rows(), u2.rows()));
    }
    let cross = u1.transpose().matmul(u2)?;
    let mut cosines = svd(&cross)?.s;
    let residual = u2.combine(1.0, &u1.matmul(&cross)?, -1.0)?;
    let mut sines = svd(&residual)?.s;
    cosines.sort_by(|x, y| y.total_cmp(x));
    sines.sort_by(f64::total_cmp);
    let count = u1.cols().min(u2.cols());
    // (I − U₁U₁ᵀ)U₂ has as many singular values as U₂ has columns; when U₂ is
    // wider than U₁ its largest ones belong to directions with no partner.
    Ok((0..count)
        .map(|k| {
            let c = cosines.get(k).copied().unwrap_or(0.0).clamp(0.0, 1.0);
            let s = sines.get(k).copied().unwrap_or(1.0).clamp(0.0, 1.0);
            s.atan2(c)
        })
        .collect())
}

/// One row of the fusion report for a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdReportRow {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub linear_residual: f64,
    pub shared_pattern_error: f64,
    pub angles_deg: Vec<f64>,
}

impl SvdReportRow {
    pub const CSV_HEADER: &'static str =
        "n,a,b,linear_residual,shared_pattern_error,angle1_deg,angle2_deg,angle3_deg,angle4_deg,angle5_deg";

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{:.6e},{:.6},",
            self.n, self.a, self.b, self.linear_residual, self.shared_pattern_error
        );
        let angles: Vec<String> = (0..5)
            .map(|k| self.angles_deg.get(k).map(|d| format!("{d:.4}")).unwrap_or_default())
            .collect();
        s.push_str(&angles.join(","));
        s
    }
}

pub fn report_row(x: &Matrix, n: usize, a: f64, b: f64) -> Result<SvdReportRow> {
    let (xi, xj) = blocks(x, n)?;
    let angles = principal_angles(&svd(&xi)?.u, &svd(&xj)?.u)?;
    Ok(SvdReportRow {
        n,
        a,
        b,
        linear_residual: linear_identity_residual(x, n, a, b)?,
        shared_pattern_error: shared_pattern_error(x, n, a, b)?,
        angles_deg: angles.iter().take(5).map(|r| r.to_degrees()).collect(),
    })
}
