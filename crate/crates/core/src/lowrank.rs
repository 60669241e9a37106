//! Factored matrix algebra.
//!
//! A [`LowRankFactor`] stores a matrix as `left * right^T`. Addition is column
//! concatenation, scaling touches only the left factor, and [`truncate`]
//! recompresses through a thin QR of each factor followed by an SVD of the
//! small core. [`TripleBlock`] bundles the three unknowns of the saddle system
//! (`lam`, `mu`, `x`) and supplies the trace inner product used by GMRES.
//!
//! [`truncate`]: LowRankFactor::truncate

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::svd::thin_svd;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Upper bound on `rows_left * rows_right` for [`LowRankFactor::to_dense`].
pub const DENSE_LIMIT: usize = 10_000_000;

/// Rank selection for [`LowRankFactor::truncate`].
///
/// Singular values `s_i >= rel_tol * s_1` are kept, up to `max_rank` of them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    max_rank: Option<usize>,
    rel_tol: f64,
}

impl TruncationPolicy {
    pub fn new(max_rank: Option<usize>, rel_tol: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rel_tol) {
            return Err(Error::InvalidParameter(format!(
                "truncation rel_tol must lie in [0, 1), got {rel_tol}"
            )));
        }
        if max_rank == Some(0) {
            return Err(Error::InvalidParameter(
                "truncation max_rank must be at least 1".into(),
            ));
        }
        Ok(Self { max_rank, rel_tol })
    }

    /// Keeps every singular value, so the represented value is preserved.
    pub fn lossless() -> Self {
        Self {
            max_rank: None,
            rel_tol: 0.0,
        }
    }

    pub fn max_rank(&self) -> Option<usize> {
        self.max_rank
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    fn select(&self, singular_values: &[f64]) -> usize {
        let Some(&top) = singular_values.first() else {
            return 0;
        };
        if top <= 0.0 || !top.is_finite() {
            return 0;
        }
        let threshold = self.rel_tol * top;
        let kept = singular_values.iter().take_while(|&&s| s >= threshold).count();
        match self.max_rank {
            Some(r) => kept.min(r),
            None => kept,
        }
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self::lossless()
    }
}

/// A matrix held as `left * right^T`; zero columns encode the zero matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    left: Mat,
    right: Mat,
}

impl LowRankFactor {
    pub fn new(left: Mat, right: Mat) -> Result<Self> {
        check_dim("factor rank (column count)", left.ncols(), right.ncols())?;
        Ok(Self { left, right })
    }

    pub fn zeros(rows_left: usize, rows_right: usize) -> Self {
        Self {
            left: Mat::zeros(rows_left, 0),
            right: Mat::zeros(rows_right, 0),
        }
    }

    /// The outer product `w v^T`.
    pub fn rank_one(w: &Vector, v: &Vector) -> Self {
        Self {
            left: Mat::from_column_slice(w.len(), 1, w.as_slice()),
            right: Mat::from_column_slice(v.len(), 1, v.as_slice()),
        }
    }

    pub fn left(&self) -> &Mat {
        &self.left
    }

    pub fn right(&self) -> &Mat {
        &self.right
    }

    pub fn rows_left(&self) -> usize {
        self.left.nrows()
    }

    pub fn rows_right(&self) -> usize {
        self.right.nrows()
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn into_parts(self) -> (Mat, Mat) {
        (self.left, self.right)
    }

    /// Stored element count, `k * (rows_left + rows_right)`.
    pub fn storage(&self) -> usize {
        self.rank() * (self.rows_left() + self.rows_right())
    }

    /// Sum of the represented values, realised as `[a.left | b.left] [a.right | b.right]^T`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        check_dim("left rows", self.rows_left(), other.rows_left())?;
        check_dim("right rows", self.rows_right(), other.rows_right())?;
        Ok(Self {
            left: hcat(&[&self.left, &other.left]),
            right: hcat(&[&self.right, &other.right]),
        })
    }

    /// Concatenates many factors of identical shape in one allocation.
    pub fn concat_all(parts: &[LowRankFactor]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidParameter(
                "concat_all needs at least one factor".into(),
            ));
        };
        for p in &parts[1..] {
            check_dim("left rows", first.rows_left(), p.rows_left())?;
            check_dim("right rows", first.rows_right(), p.rows_right())?;
        }
        let lefts: Vec<&Mat> = parts.iter().map(|p| &p.left).collect();
        let rights: Vec<&Mat> = parts.iter().map(|p| &p.right).collect();
        Ok(Self {
            left: hcat(&lefts),
            right: hcat(&rights),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            left: &self.left * s,
            right: self.right.clone(),
        }
    }

    /// `op * value`, i.e. the left factor premultiplied by `op`.
    pub fn premul(&self, op: &Mat) -> Result<Self> {
        check_dim("operator columns vs left rows", self.rows_left(), op.ncols())?;
        Ok(Self {
            left: op * &self.left,
            right: self.right.clone(),
        })
    }

    /// Replaces the right factor by `f(right)`; `f` must keep the column count.
    pub fn map_right(&self, f: impl FnOnce(&Mat) -> Mat) -> Self {
        let right = f(&self.right);
        debug_assert_eq!(right.ncols(), self.right.ncols());
        Self {
            left: self.left.clone(),
            right,
        }
    }

    /// Best Frobenius-norm approximation under `policy`.
    ///
    /// The output has orthonormal right columns and left columns equal to
    /// orthonormal vectors scaled by the kept singular values.
    pub fn truncate(&self, policy: &TruncationPolicy) -> Self {
        let (m, n, k) = (self.rows_left(), self.rows_right(), self.rank());
        if k == 0 || m == 0 || n == 0 {
            return Self::zeros(m, n);
        }

        // A wide factor pair is cheaper to multiply out than to QR.
        let (svd, ql, qr) = if k >= m.min(n) {
            let core = &self.left * self.right.transpose();
            (thin_svd(&core), None, None)
        } else {
            let lq = self.left.clone().qr();
            let rq = self.right.clone().qr();
            let core = lq.r() * rq.r().transpose();
            (thin_svd(&core), Some(lq.q()), Some(rq.q()))
        };

        let r = policy.select(&svd.s);
        if r == 0 {
            return Self::zeros(m, n);
        }
        let mut us = svd.u.columns(0, r).into_owned();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= svd.s[j];
        }
        let v = svd.v.columns(0, r).into_owned();

        let left = match ql {
            Some(q) => q * us,
            None => us,
        };
        let right = match qr {
            Some(q) => q * v,
            None => v,
        };
        Self { left, right }
    }

    pub fn to_dense(&self) -> Result<Mat> {
        let size = self.rows_left() * self.rows_right();
        if size > DENSE_LIMIT {
            return Err(Error::SizeGuard {
                what: "to_dense",
                size,
                limit: DENSE_LIMIT,
            });
        }
        Ok(if self.rank() == 0 {
            Mat::zeros(self.rows_left(), self.rows_right())
        } else {
            &self.left * self.right.transpose()
        })
    }

    /// Compresses a dense matrix; `TruncationPolicy::lossless()` keeps it exact.
    pub fn from_dense(m: &Mat, policy: &TruncationPolicy) -> Self {
        let (rows, cols) = m.shape();
        if rows == 0 || cols == 0 {
            return Self::zeros(rows, cols);
        }
        let svd = thin_svd(m);
        let r = policy.select(&svd.s);
        if r == 0 {
            return Self::zeros(rows, cols);
        }
        let mut left = svd.u.columns(0, r).into_owned();
        for (j, mut col) in left.column_iter_mut().enumerate() {
            col *= svd.s[j];
        }
        Self {
            left,
            right: svd.v.columns(0, r).into_owned(),
        }
    }

    /// `trace(self^T other)` through the two small Gram matrices.
    pub fn frobenius_dot(&self, other: &Self) -> Result<f64> {
        check_dim("left rows", self.rows_left(), other.rows_left())?;
        check_dim("right rows", self.rows_right(), other.rows_right())?;
        if self.rank() == 0 || other.rank() == 0 {
            return Ok(0.0);
        }
        let gl = self.left.transpose() * &other.left;
        let gr = self.right.transpose() * &other.right;
        Ok(gl.component_mul(&gr).sum())
    }
}

/// Horizontal concatenation of matrices with equal row counts.
pub(crate) fn hcat(parts: &[&Mat]) -> Mat {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        debug_assert_eq!(p.nrows(), rows);
        out.columns_mut(at, p.ncols()).copy_from(*p);
        at += p.ncols();
    }
    out
}

/// The three factored unknowns `(lam, mu, x)` of the saddle system.
///
/// `lam` and `x` represent `n x (N+1)` matrices, `mu` a `p x (N+1)` matrix.
/// Stacking the column-major vectorisations gives the vector GMRES works on.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleBlock {
    pub lam: LowRankFactor,
    pub mu: LowRankFactor,
    pub x: LowRankFactor,
}

impl TripleBlock {
    pub fn new(lam: LowRankFactor, mu: LowRankFactor, x: LowRankFactor) -> Result<Self> {
        let steps = lam.rows_right();
        check_dim("mu time axis", steps, mu.rows_right())?;
        check_dim("x time axis", steps, x.rows_right())?;
        check_dim("x state rows", lam.rows_left(), x.rows_left())?;
        Ok(Self { lam, mu, x })
    }

    pub fn zeros(n: usize, p: usize, steps: usize) -> Self {
        Self {
            lam: LowRankFactor::zeros(n, steps),
            mu: LowRankFactor::zeros(p, steps),
            x: LowRankFactor::zeros(n, steps),
        }
    }

    /// `(n, p, N+1)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.lam.rows_left(),
            self.mu.rows_left(),
            self.lam.rows_right(),
        )
    }

    pub fn vec_len(&self) -> usize {
        let (n, p, s) = self.dims();
        (2 * n + p) * s
    }

    pub fn ranks(&self) -> [usize; 3] {
        [self.lam.rank(), self.mu.rank(), self.x.rank()]
    }

    pub fn storage(&self) -> usize {
        self.lam.storage() + self.mu.storage() + self.x.storage()
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            lam: self.lam.concat(&other.lam)?,
            mu: self.mu.concat(&other.mu)?,
            x: self.x.concat(&other.x)?,
        })
    }

    pub fn concat_all(parts: &[TripleBlock]) -> Result<Self> {
        let lam: Vec<_> = parts.iter().map(|t| t.lam.clone()).collect();
        let mu: Vec<_> = parts.iter().map(|t| t.mu.clone()).collect();
        let x: Vec<_> = parts.iter().map(|t| t.x.clone()).collect();
        Ok(Self {
            lam: LowRankFactor::concat_all(&lam)?,
            mu: LowRankFactor::concat_all(&mu)?,
            x: LowRankFactor::concat_all(&x)?,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            lam: self.lam.scale(s),
            mu: self.mu.scale(s),
            x: self.x.scale(s),
        }
    }

    pub fn truncate(&self, policy: &TruncationPolicy) -> Self {
        Self {
            lam: self.lam.truncate(policy),
            mu: self.mu.truncate(policy),
            x: self.x.truncate(policy),
        }
    }

    /// `self - other`, by concatenation with a negated copy.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.concat(&other.scale(-1.0))
    }

    /// Stacked column-major vectorisation `[vec(lam); vec(mu); vec(x)]`.
    pub fn to_vec(&self) -> Result<Vector> {
        let blocks = [self.lam.to_dense()?, self.mu.to_dense()?, self.x.to_dense()?];
        let len: usize = blocks.iter().map(|b| b.len()).sum();
        let mut out = Vector::zeros(len);
        let mut at = 0;
        for b in &blocks {
            out.rows_mut(at, b.len()).copy_from_slice(b.as_slice());
            at += b.len();
        }
        Ok(out)
    }

    pub fn from_vec(
        v: &Vector,
        n: usize,
        p: usize,
        steps: usize,
        policy: &TruncationPolicy,
    ) -> Result<Self> {
        check_dim("stacked vector length", (2 * n + p) * steps, v.len())?;
        let ns = n * steps;
        let ps = p * steps;
        let lam = Mat::from_column_slice(n, steps, &v.as_slice()[..ns]);
        let mu = Mat::from_column_slice(p, steps, &v.as_slice()[ns..ns + ps]);
        let x = Mat::from_column_slice(n, steps, &v.as_slice()[ns + ps..]);
        Ok(Self {
            lam: LowRankFactor::from_dense(&lam, policy),
            mu: LowRankFactor::from_dense(&mu, policy),
            x: LowRankFactor::from_dense(&x, policy),
        })
    }
}

/// The stacked inner product `<a, b> = sum over blocks of trace(a^T b)`.
///
/// Only `k_a x k_b` Gram matrices are formed, never `(N+1) x (N+1)` products.
pub fn trace_product(a: &TripleBlock, b: &TripleBlock) -> Result<f64> {
    Ok(a.lam.frobenius_dot(&b.lam)? + a.mu.frobenius_dot(&b.mu)? + a.x.frobenius_dot(&b.x)?)
}

/// `sqrt(trace_product(a, a))`, clamped at zero against rounding.
pub fn block_norm(a: &TripleBlock) -> Result<f64> {
    Ok(trace_product(a, a)?.max(0.0).sqrt())
}
