//! The weak-constraint saddle-point operator in factored and dense form.
//!
//! With `Lam`, `U`, `X` the matrix forms of `(lambda, mu, dx)`, the
//! time-invariant operator is
//!
//! ```text
//! B Lam E1 + Q Lam E2 + X + M X C^T
//! R U + H X
//! Lam + M^T Lam C + H^T U
//! ```
//!
//! where `C` has `-1` on the subdiagonal and `E1`/`E2` split off the first
//! time column. The time-varying form replaces these by sums over per-step
//! selections `F_i` and single-entry shifts `C_i`. Those structure matrices are
//! never stored; see [`structure`].

use nalgebra::linalg::Cholesky;

use crate::error::{check_dim, Error, Result};
use crate::lowrank::{LowRankFactor, Mat, TripleBlock};

/// Largest saddle dimension accepted by [`assemble_dense`].
pub const ASSEMBLE_LIMIT: usize = 5000;

/// Row operations on right factors (`(N+1) x k`) that realise the structure
/// matrices acting on the time axis.
pub mod structure {
    use crate::lowrank::Mat;

    /// `E1 V`: keeps the first row.
    pub fn e1(v: &Mat) -> Mat {
        select(v, 0)
    }

    /// `E2 V`: zeroes the first row.
    pub fn e2(v: &Mat) -> Mat {
        let mut out = v.clone();
        if out.nrows() > 0 {
            out.row_mut(0).fill(0.0);
        }
        out
    }

    /// `C V`: row `i` becomes `-V[i-1]`, row 0 becomes zero.
    pub fn shift(v: &Mat) -> Mat {
        let (rows, cols) = v.shape();
        let mut out = Mat::zeros(rows, cols);
        for i in 1..rows {
            for j in 0..cols {
                out[(i, j)] = -v[(i - 1, j)];
            }
        }
        out
    }

    /// `C^T V`: row `i` becomes `-V[i+1]`, the last row becomes zero.
    pub fn shift_t(v: &Mat) -> Mat {
        let (rows, cols) = v.shape();
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows.saturating_sub(1) {
            for j in 0..cols {
                out[(i, j)] = -v[(i + 1, j)];
            }
        }
        out
    }

    /// `F_{i+1} V`: keeps row `i` only (0-based time index).
    pub fn select(v: &Mat, i: usize) -> Mat {
        let mut out = Mat::zeros(v.nrows(), v.ncols());
        if i < v.nrows() {
            out.row_mut(i).copy_from(&v.row(i));
        }
        out
    }

    /// `C_i V` for `i = 1..=N`: row `i` becomes `-V[i-1]`, all else zero.
    pub fn step_shift(v: &Mat, i: usize) -> Mat {
        let mut out = Mat::zeros(v.nrows(), v.ncols());
        for j in 0..v.ncols() {
            out[(i, j)] = -v[(i - 1, j)];
        }
        out
    }

    /// `C_i^T V` for `i = 1..=N`: row `i-1` becomes `-V[i]`, all else zero.
    pub fn step_shift_t(v: &Mat, i: usize) -> Mat {
        let mut out = Mat::zeros(v.nrows(), v.ncols());
        for j in 0..v.ncols() {
            out[(i - 1, j)] = -v[(i, j)];
        }
        out
    }

    /// Dense `C`, for oracles.
    pub fn shift_matrix(steps: usize) -> Mat {
        shift(&Mat::identity(steps, steps))
    }
}

pub(crate) fn check_spd(name: &str, m: &Mat) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotPositiveDefinite(name.to_string()));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * (1.0 + m.amax()) {
        return Err(Error::NotPositiveDefinite(name.to_string()));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(name.to_string()))
}

fn check_square(axis: &'static str, m: &Mat, n: usize) -> Result<()> {
    check_dim(axis, n, m.nrows())?;
    check_dim(axis, n, m.ncols())
}

/// Operator data with `Q_i = Q`, `R_i = R`, `M_i = M`, `H_i = H` for all steps.
#[derive(Debug, Clone)]
pub struct TimeInvariantSystem {
    n: usize,
    window: usize,
    p: usize,
    b: Mat,
    q: Mat,
    r: Mat,
    m: Mat,
    h: Mat,
}

impl TimeInvariantSystem {
    /// `window` is `N`; the time axis has `N + 1` columns.
    pub fn new(window: usize, b: Mat, q: Mat, r: Mat, m: Mat, h: Mat) -> Result<Self> {
        let n = b.nrows();
        let p = h.nrows();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter(
                "state and observation dimensions must be positive".into(),
            ));
        }
        check_square("Q dimension", &q, n)?;
        check_square("M dimension", &m, n)?;
        check_square("R dimension", &r, p)?;
        check_dim("H columns", n, h.ncols())?;
        check_spd("B", &b)?;
        check_spd("Q", &q)?;
        check_spd("R", &r)?;
        Ok(Self {
            n,
            window,
            p,
            b,
            q,
            r,
            m,
            h,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn window(&self) -> usize {
        self.window
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn steps(&self) -> usize {
        self.window + 1
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }
    pub fn m(&self) -> &Mat {
        &self.m
    }
    pub fn h(&self) -> &Mat {
        &self.h
    }
}

/// Operator data varying per step: `Q_1..Q_N`, `R_0..R_N`, `M_1..M_N`, `H_0..H_N`.
#[derive(Debug, Clone)]
pub struct TimeVaryingSystem {
    n: usize,
    window: usize,
    p: usize,
    b: Mat,
    q: Vec<Mat>,
    r: Vec<Mat>,
    m: Vec<Mat>,
    h: Vec<Mat>,
}

impl TimeVaryingSystem {
    pub fn new(b: Mat, q: Vec<Mat>, r: Vec<Mat>, m: Vec<Mat>, h: Vec<Mat>) -> Result<Self> {
        let n = b.nrows();
        let window = m.len();
        check_dim("Q list length", window, q.len())?;
        check_dim("R list length", window + 1, r.len())?;
        check_dim("H list length", window + 1, h.len())?;
        let p = h[0].nrows();
        if n == 0 || p == 0 {
            return Err(Error::InvalidParameter(
                "state and observation dimensions must be positive".into(),
            ));
        }
        check_spd("B", &b)?;
        for (i, qi) in q.iter().enumerate() {
            check_square("Q_i dimension", qi, n)?;
            check_spd(&format!("Q_{}", i + 1), qi)?;
        }
        for mi in &m {
            check_square("M_i dimension", mi, n)?;
        }
        for (i, (ri, hi)) in r.iter().zip(&h).enumerate() {
            check_square("R_i dimension", ri, p)?;
            check_dim("H_i rows", p, hi.nrows())?;
            check_dim("H_i columns", n, hi.ncols())?;
            check_spd(&format!("R_{i}"), ri)?;
        }
        Ok(Self {
            n,
            window,
            p,
            b,
            q,
            r,
            m,
            h,
        })
    }

    /// Expands a time-invariant system into per-step lists.
    pub fn from_invariant(sys: &TimeInvariantSystem) -> Self {
        let w = sys.window;
        Self {
            n: sys.n,
            window: w,
            p: sys.p,
            b: sys.b.clone(),
            q: vec![sys.q.clone(); w],
            r: vec![sys.r.clone(); w + 1],
            m: vec![sys.m.clone(); w],
            h: vec![sys.h.clone(); w + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn window(&self) -> usize {
        self.window
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn steps(&self) -> usize {
        self.window + 1
    }
}

/// Either flavour of saddle operator, with per-step accessors.
#[derive(Debug, Clone)]
pub enum SaddleSystem {
    TimeInvariant(TimeInvariantSystem),
    TimeVarying(TimeVaryingSystem),
}

impl SaddleSystem {
    pub fn n(&self) -> usize {
        match self {
            Self::TimeInvariant(s) => s.n,
            Self::TimeVarying(s) => s.n,
        }
    }

    pub fn window(&self) -> usize {
        match self {
            Self::TimeInvariant(s) => s.window,
            Self::TimeVarying(s) => s.window,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            Self::TimeInvariant(s) => s.p,
            Self::TimeVarying(s) => s.p,
        }
    }

    pub fn steps(&self) -> usize {
        self.window() + 1
    }

    /// `(N+1)(2n+p)`.
    pub fn dim(&self) -> usize {
        self.steps() * (2 * self.n() + self.p())
    }

    pub fn b(&self) -> &Mat {
        match self {
            Self::TimeInvariant(s) => &s.b,
            Self::TimeVarying(s) => &s.b,
        }
    }

    /// `Q_i`, `i = 1..=N`.
    pub fn q(&self, i: usize) -> &Mat {
        match self {
            Self::TimeInvariant(s) => &s.q,
            Self::TimeVarying(s) => &s.q[i - 1],
        }
    }

    /// `R_i`, `i = 0..=N`.
    pub fn r(&self, i: usize) -> &Mat {
        match self {
            Self::TimeInvariant(s) => &s.r,
            Self::TimeVarying(s) => &s.r[i],
        }
    }

    /// `M_i`, `i = 1..=N`.
    pub fn m(&self, i: usize) -> &Mat {
        match self {
            Self::TimeInvariant(s) => &s.m,
            Self::TimeVarying(s) => &s.m[i - 1],
        }
    }

    /// `H_i`, `i = 0..=N`.
    pub fn h(&self, i: usize) -> &Mat {
        match self {
            Self::TimeInvariant(s) => &s.h,
            Self::TimeVarying(s) => &s.h[i],
        }
    }

    /// Covariance block `D_i`: `B` at `i = 0`, `Q_i` afterwards.
    pub fn d(&self, i: usize) -> &Mat {
        if i == 0 {
            self.b()
        } else {
            self.q(i)
        }
    }

    /// Applies the operator, dispatching to [`amult`] or [`amult_td`].
    pub fn apply(&self, v: &TripleBlock) -> Result<TripleBlock> {
        match self {
            Self::TimeInvariant(s) => amult(s, v),
            Self::TimeVarying(s) => amult_td(s, v),
        }
    }
}

fn check_block(v: &TripleBlock, n: usize, p: usize, steps: usize) -> Result<()> {
    let (vn, vp, vs) = v.dims();
    check_dim("state rows", n, vn)?;
    check_dim("observation rows", p, vp)?;
    check_dim("time axis", steps, vs)?;
    check_dim("x state rows", n, v.x.rows_left())
}

fn pair(left: Mat, right: Mat) -> LowRankFactor {
    LowRankFactor::new(left, right).expect("column counts agree by construction")
}

pub(crate) fn cat(parts: Vec<(Mat, Mat)>) -> LowRankFactor {
    let (lefts, rights): (Vec<Mat>, Vec<Mat>) = parts.into_iter().unzip();
    let l: Vec<&Mat> = lefts.iter().collect();
    let r: Vec<&Mat> = rights.iter().collect();
    pair(crate::lowrank::hcat(&l), crate::lowrank::hcat(&r))
}

/// Time-invariant operator applied in factored form, without truncation.
///
/// Output ranks: `lam` gets `2 k_lam + 2 k_x`, `mu` gets `k_mu + k_x`,
/// `x` gets `2 k_lam + k_mu`.
pub fn amult(sys: &TimeInvariantSystem, v: &TripleBlock) -> Result<TripleBlock> {
    use structure::*;
    check_block(v, sys.n, sys.p, sys.steps())?;
    let (w11, w12) = (v.lam.left(), v.lam.right());
    let (w21, w22) = (v.mu.left(), v.mu.right());
    let (w31, w32) = (v.x.left(), v.x.right());

    let lam = cat(vec![
        (&sys.b * w11, e1(w12)),
        (&sys.q * w11, e2(w12)),
        (w31.clone(), w32.clone()),
        (&sys.m * w31, shift(w32)),
    ]);
    let mu = cat(vec![(&sys.r * w21, w22.clone()), (&sys.h * w31, w32.clone())]);
    let x = cat(vec![
        (w11.clone(), w12.clone()),
        (sys.m.tr_mul(w11), shift_t(w12)),
        (sys.h.tr_mul(w21), w22.clone()),
    ]);
    Ok(TripleBlock { lam, mu, x })
}

/// Time-varying operator applied in factored form, without truncation.
///
/// Ranks grow by a factor of order `N`; callers truncate.
pub fn amult_td(sys: &TimeVaryingSystem, v: &TripleBlock) -> Result<TripleBlock> {
    use structure::*;
    check_block(v, sys.n, sys.p, sys.steps())?;
    let steps = sys.steps();
    let (w11, w12) = (v.lam.left(), v.lam.right());
    let (w21, w22) = (v.mu.left(), v.mu.right());
    let (w31, w32) = (v.x.left(), v.x.right());

    let mut lam = Vec::with_capacity(2 * steps);
    lam.push((&sys.b * w11, select(w12, 0)));
    for i in 1..steps {
        lam.push((&sys.q[i - 1] * w11, select(w12, i)));
    }
    lam.push((w31.clone(), w32.clone()));
    for i in 1..steps {
        lam.push((&sys.m[i - 1] * w31, step_shift(w32, i)));
    }

    let mut mu = Vec::with_capacity(2 * steps);
    for i in 0..steps {
        mu.push((&sys.r[i] * w21, select(w22, i)));
    }
    for i in 0..steps {
        mu.push((&sys.h[i] * w31, select(w32, i)));
    }

    let mut x = Vec::with_capacity(2 * steps);
    x.push((w11.clone(), w12.clone()));
    for i in 1..steps {
        x.push((sys.m[i - 1].tr_mul(w11), step_shift_t(w12, i)));
    }
    for i in 0..steps {
        x.push((sys.h[i].tr_mul(w21), select(w22, i)));
    }

    Ok(TripleBlock {
        lam: cat(lam),
        mu: cat(mu),
        x: cat(x),
    })
}

/// Dense saddle matrix `[D 0 L; 0 R H; L^T H^T 0]`, time-major within each field.
pub fn assemble_dense(sys: &SaddleSystem) -> Result<Mat> {
    let dim = sys.dim();
    if dim > ASSEMBLE_LIMIT {
        return Err(Error::SizeGuard {
            what: "assemble_dense",
            size: dim,
            limit: ASSEMBLE_LIMIT,
        });
    }
    let (n, p, steps) = (sys.n(), sys.p(), sys.steps());
    let mu0 = n * steps;
    let x0 = mu0 + p * steps;
    let mut a = Mat::zeros(dim, dim);

    for k in 0..steps {
        a.view_mut((k * n, k * n), (n, n)).copy_from(sys.d(k));
        a.view_mut((mu0 + k * p, mu0 + k * p), (p, p))
            .copy_from(sys.r(k));
        // L and H blocks together with their transposes.
        for i in 0..n {
            a[(k * n + i, x0 + k * n + i)] = 1.0;
            a[(x0 + k * n + i, k * n + i)] = 1.0;
        }
        if k > 0 {
            let m = -sys.m(k);
            a.view_mut((k * n, x0 + (k - 1) * n), (n, n)).copy_from(&m);
            a.view_mut((x0 + (k - 1) * n, k * n), (n, n))
                .copy_from(&m.transpose());
        }
        let h = sys.h(k);
        a.view_mut((mu0 + k * p, x0 + k * n), (p, n)).copy_from(h);
        a.view_mut((x0 + k * n, mu0 + k * p), (n, p))
            .copy_from(&h.transpose());
    }
    Ok(a)
}

/// Largest deviation between `(B^T kron A) vec(C)` and `vec(A C B)`.
pub fn kron_vec_identity_check(b: &Mat, a: &Mat, c: &Mat) -> Result<f64> {
    check_dim("A columns vs C rows", a.ncols(), c.nrows())?;
    check_dim("C columns vs B rows", c.ncols(), b.nrows())?;
    let lhs = b.transpose().kronecker(a) * nalgebra::DVector::from_column_slice(c.as_slice());
    let rhs = a * c * b;
    Ok(lhs
        .iter()
        .zip(rhs.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::{trace_product, TruncationPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rand_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let a = rand_mat(rng, n, n);
        &a * a.transpose() + Mat::identity(n, n) * 0.5
    }

    fn rand_system(rng: &mut ChaCha8Rng, n: usize, w: usize, p: usize) -> TimeInvariantSystem {
        TimeInvariantSystem::new(
            w,
            rand_spd(rng, n),
            rand_spd(rng, n),
            rand_spd(rng, p),
            rand_mat(rng, n, n),
            rand_mat(rng, p, n),
        )
        .unwrap()
    }

    fn rand_triple(rng: &mut ChaCha8Rng, n: usize, p: usize, s: usize, k: usize) -> TripleBlock {
        let f = |rng: &mut ChaCha8Rng, m: usize| {
            LowRankFactor::new(rand_mat(rng, m, k), rand_mat(rng, s, k)).unwrap()
        };
        TripleBlock::new(f(rng, n), f(rng, p), f(rng, n)).unwrap()
    }

    #[test]
    fn structure_ops_match_dense_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let steps = 5;
        let v = rand_mat(&mut rng, steps, 3);
        let c = structure::shift_matrix(steps);
        assert_eq!(structure::shift(&v), &c * &v);
        assert_eq!(structure::shift_t(&v), c.transpose() * &v);
        let mut e1 = Mat::zeros(steps, steps);
        e1[(0, 0)] = 1.0;
        assert_eq!(structure::e1(&v), &e1 * &v);
        assert_eq!(structure::e2(&v), (Mat::identity(steps, steps) - e1) * &v);
        let mut csum = Mat::zeros(steps, 3);
        let mut ctsum = Mat::zeros(steps, 3);
        for i in 1..steps {
            csum += structure::step_shift(&v, i);
            ctsum += structure::step_shift_t(&v, i);
        }
        assert_eq!(csum, &c * &v);
        assert_eq!(ctsum, c.transpose() * &v);
    }

    #[test]
    fn amult_zero_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sys = rand_system(&mut rng, 3, 2, 2);
        let out = amult(&sys, &TripleBlock::zeros(3, 2, 3)).unwrap();
        assert_eq!(out.to_vec().unwrap().amax(), 0.0);
    }

    #[test]
    fn amult_matches_dense_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sys = rand_system(&mut rng, 3, 2, 2);
        let v = rand_triple(&mut rng, 3, 2, 3, 1);
        let dense = assemble_dense(&SaddleSystem::TimeInvariant(sys.clone())).unwrap();
        let want = &dense * v.to_vec().unwrap();
        let got = amult(&sys, &v).unwrap().to_vec().unwrap();
        assert!((&got - &want).norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn amult_identity_blocks_case() {
        let n = 3;
        let sys = TimeInvariantSystem::new(
            2,
            Mat::identity(n, n),
            Mat::identity(n, n),
            Mat::identity(2, 2),
            Mat::zeros(n, n),
            Mat::zeros(2, n),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let v = rand_triple(&mut rng, n, 2, 3, 2);
        let out = amult(&sys, &v).unwrap();
        let want = v.lam.to_dense().unwrap() + v.x.to_dense().unwrap();
        assert!((out.lam.to_dense().unwrap() - want).amax() <= 1e-14);
    }

    #[test]
    fn amult_rank_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let sys = rand_system(&mut rng, 4, 3, 2);
        let v = TripleBlock::new(
            LowRankFactor::new(rand_mat(&mut rng, 4, 2), rand_mat(&mut rng, 4, 2)).unwrap(),
            LowRankFactor::new(rand_mat(&mut rng, 2, 3), rand_mat(&mut rng, 4, 3)).unwrap(),
            LowRankFactor::new(rand_mat(&mut rng, 4, 1), rand_mat(&mut rng, 4, 1)).unwrap(),
        )
        .unwrap();
        let out = amult(&sys, &v).unwrap();
        assert_eq!(out.ranks(), [2 * 2 + 2 * 1, 3 + 1, 2 * 2 + 3]);
    }

    #[test]
    fn amult_is_self_adjoint_in_trace_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let sys = rand_system(&mut rng, 4, 3, 2);
        let u = rand_triple(&mut rng, 4, 2, 4, 2);
        let v = rand_triple(&mut rng, 4, 2, 4, 1);
        let a = trace_product(&amult(&sys, &u).unwrap(), &v).unwrap();
        let b = trace_product(&u, &amult(&sys, &v).unwrap()).unwrap();
        assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()));
    }

    #[test]
    fn amult_td_reduces_to_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let sys = rand_system(&mut rng, 3, 3, 2);
        let tv = TimeVaryingSystem::from_invariant(&sys);
        let v = rand_triple(&mut rng, 3, 2, 4, 2);
        let a = amult(&sys, &v).unwrap().to_vec().unwrap();
        let b = amult_td(&tv, &v).unwrap().to_vec().unwrap();
        assert!((a - b).amax() <= 1e-12);
    }

    #[test]
    fn amult_td_matches_dense_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, w, p) = (3, 2, 1);
        let tv = TimeVaryingSystem::new(
            rand_spd(&mut rng, n),
            (0..w).map(|_| rand_spd(&mut rng, n)).collect(),
            (0..=w).map(|_| rand_spd(&mut rng, p)).collect(),
            (0..w).map(|_| rand_mat(&mut rng, n, n)).collect(),
            (0..=w).map(|_| rand_mat(&mut rng, p, n)).collect(),
        )
        .unwrap();
        let v = rand_triple(&mut rng, n, p, w + 1, 1);
        let dense = assemble_dense(&SaddleSystem::TimeVarying(tv.clone())).unwrap();
        let want = &dense * v.to_vec().unwrap();
        let got = amult_td(&tv, &v).unwrap();
        assert!((got.to_vec().unwrap() - &want).norm() <= 1e-12 * want.norm());
        assert!(amult_td(&tv, &TripleBlock::zeros(n, p, w + 1))
            .unwrap()
            .to_vec()
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        // Ranks are of order N times the input ranks before truncation.
        let t = got.truncate(&TruncationPolicy::lossless());
        assert!(t.lam.rank() <= n);
    }

    #[test]
    fn assemble_small_identity_case() {
        let one = Mat::identity(1, 1);
        let sys = TimeInvariantSystem::new(
            1,
            one.clone(),
            one.clone(),
            one.clone(),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let a = assemble_dense(&SaddleSystem::TimeInvariant(sys)).unwrap();
        #[rustfmt::skip]
        let want = Mat::from_row_slice(6, 6, &[
            1., 0., 0., 0., 1., 0.,
            0., 1., 0., 0., 0., 1.,
            0., 0., 1., 0., 0., 0.,
            0., 0., 0., 1., 0., 0.,
            1., 0., 0., 0., 0., 0.,
            0., 1., 0., 0., 0., 0.,
        ]);
        assert_eq!(a, want);
    }

    #[test]
    fn assemble_is_symmetric_and_sized() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let sys = SaddleSystem::TimeInvariant(rand_system(&mut rng, 10, 19, 4));
        let a = assemble_dense(&sys).unwrap();
        // (N+1)(2n+p) = 20 * 24.
        assert_eq!(a.shape(), (480, 480));
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn assemble_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let sys = SaddleSystem::TimeInvariant(rand_system(&mut rng, 30, 99, 2));
        assert!(matches!(assemble_dense(&sys), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn construction_rejects_non_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let bad = -Mat::identity(3, 3);
        let r = TimeInvariantSystem::new(
            2,
            bad,
            rand_spd(&mut rng, 3),
            rand_spd(&mut rng, 1),
            rand_mat(&mut rng, 3, 3),
            rand_mat(&mut rng, 1, 3),
        );
        assert!(matches!(r, Err(Error::NotPositiveDefinite(name)) if name == "B"));
    }

    #[test]
    fn kron_identity_cases() {
        let i2 = Mat::identity(2, 2);
        assert_eq!(kron_vec_identity_check(&i2, &i2, &i2).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = rand_mat(&mut rng, 3, 4);
        let c = rand_mat(&mut rng, 4, 2);
        let b = rand_mat(&mut rng, 2, 5);
        assert!(kron_vec_identity_check(&b, &a, &c).unwrap() <= 1e-13);
        assert_eq!(
            kron_vec_identity_check(&b, &a, &Mat::zeros(4, 2)).unwrap(),
            0.0
        );
    }
}
