//! Right-preconditioned GMRES on factored iterates.
//!
//! Every Krylov vector is a [`TripleBlock`]; inner products are
//! [`trace_product`] and sums are concatenations followed by truncation.
//! Truncation happens after the preconditioner, after the operator and once
//! after each Gram-Schmidt chain. Truncating inside the chain would invalidate
//! the coefficients already computed against the untruncated vector.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::lowrank::{block_norm, trace_product, LowRankFactor, TripleBlock, TruncationPolicy};

/// Breakdown threshold on `h_{k+1,k}` relative to the initial residual.
const BREAKDOWN_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct GmresConfig {
    pub max_iter: usize,
    /// Relative tolerance on the rotated residual `|xi_{k+1}| / |xi_1|`.
    pub residual_tol: f64,
    pub trunc: TruncationPolicy,
    /// Restart length. Not implemented; any value makes [`solve`] fail.
    pub restart: Option<usize>,
}

impl GmresConfig {
    pub fn new(max_iter: usize, residual_tol: f64, trunc: TruncationPolicy) -> Result<Self> {
        if max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if !(residual_tol > 0.0 && residual_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "residual_tol must be positive, got {residual_tol}"
            )));
        }
        Ok(Self {
            max_iter,
            residual_tol,
            trunc,
            restart: None,
        })
    }

    /// 20 iterations, tolerance `1e-6`, truncation at `1e-8` and rank `rank`.
    pub fn with_rank(rank: usize) -> Result<Self> {
        Self::new(20, 1e-6, TruncationPolicy::new(Some(rank), 1e-8)?)
    }

    /// No truncation at all: the iteration is dense GMRES in factored form.
    pub fn untruncated(max_iter: usize, residual_tol: f64) -> Result<Self> {
        Self::new(max_iter, residual_tol, TruncationPolicy::lossless())
    }
}

/// Arnoldi and least-squares bookkeeping of one solve.
#[derive(Debug, Clone, Default)]
pub struct GmresState {
    /// Column `k` holds `h_{0..=k+1, k}` after the Givens rotations.
    pub hessenberg: Vec<Vec<f64>>,
    pub givens: Vec<(f64, f64)>,
    pub xi: Vec<f64>,
    pub basis: Vec<TripleBlock>,
    /// `|xi_1|` followed by `|xi_{k+1}|` for each iteration.
    pub residuals: Vec<f64>,
    /// Ranks of each basis block `v^(i)`.
    pub basis_ranks: Vec<[usize; 3]>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// Same layout as [`GmresState::residuals`].
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub breakdown: bool,
    pub solution_ranks: [usize; 3],
    pub wall_time: Duration,
}

impl SolveReport {
    /// Residuals divided by the initial one.
    pub fn relative_residuals(&self) -> Vec<f64> {
        match self.residuals.first() {
            Some(&r0) if r0 > 0.0 => self.residuals.iter().map(|r| r / r0).collect(),
            _ => self.residuals.clone(),
        }
    }
}

/// Solves `A x = rhs` starting from `x0`; see [`solve_with_state`].
pub fn solve<A, P>(
    apply_a: A,
    apply_p: P,
    rhs: &TripleBlock,
    x0: &TripleBlock,
    cfg: &GmresConfig,
) -> Result<(TripleBlock, SolveReport)>
where
    A: FnMut(&TripleBlock) -> Result<TripleBlock>,
    P: FnMut(&TripleBlock) -> Result<TripleBlock>,
{
    solve_with_state(apply_a, apply_p, rhs, x0, cfg).map(|(x, report, _)| (x, report))
}

/// Like [`solve`] but also returns the Arnoldi state.
pub fn solve_with_state<A, P>(
    mut apply_a: A,
    mut apply_p: P,
    rhs: &TripleBlock,
    x0: &TripleBlock,
    cfg: &GmresConfig,
) -> Result<(TripleBlock, SolveReport, GmresState)>
where
    A: FnMut(&TripleBlock) -> Result<TripleBlock>,
    P: FnMut(&TripleBlock) -> Result<TripleBlock>,
{
    if cfg.restart.is_some() {
        return Err(Error::RestartUnsupported);
    }
    let started = Instant::now();
    let policy = &cfg.trunc;
    let (n, p, steps) = rhs.dims();
    if x0.dims() != (n, p, steps) {
        return Err(Error::DimensionMismatch {
            axis: "initial guess length",
            expected: rhs.vec_len(),
            found: x0.vec_len(),
        });
    }

    let r0 = rhs.sub(&apply_a(x0)?)?.truncate(policy);
    let beta = block_norm(&r0)?;
    let mut state = GmresState {
        xi: vec![beta],
        residuals: vec![beta],
        ..Default::default()
    };

    let finish = |x: TripleBlock, state: &GmresState, converged, breakdown| {
        let report = SolveReport {
            iterations: state.hessenberg.len(),
            residuals: state.residuals.clone(),
            converged,
            breakdown,
            solution_ranks: x.ranks(),
            wall_time: started.elapsed(),
        };
        (x, report)
    };

    if beta == 0.0 {
        let (x, report) = finish(x0.clone(), &state, true, false);
        return Ok((x, report, state));
    }

    state.basis_ranks.push(r0.ranks());
    state.basis.push(r0.scale(1.0 / beta));

    let mut converged = false;
    let mut breakdown = false;
    for k in 0..cfg.max_iter {
        let z = apply_p(&state.basis[k])?.truncate(policy);
        let mut w = apply_a(&z)?.truncate(policy);

        let mut h = Vec::with_capacity(k + 2);
        for v in &state.basis {
            let hik = trace_product(&w, v)?;
            w = compact(w.concat(&v.scale(-hik))?);
            h.push(hik);
        }
        let w = w.truncate(policy);
        let h_next = block_norm(&w)?;
        h.push(h_next);

        // Earlier rotations, then the one that annihilates h_{k+1,k}.
        for (j, &(c, s)) in state.givens.iter().enumerate() {
            let (a, b) = (h[j], h[j + 1]);
            h[j] = c * a + s * b;
            h[j + 1] = -s * a + c * b;
        }
        let hyp = h[k].hypot(h[k + 1]);
        let (c, s) = if hyp == 0.0 {
            (1.0, 0.0)
        } else {
            (h[k] / hyp, h[k + 1] / hyp)
        };
        h[k] = hyp;
        h[k + 1] = 0.0;
        state.givens.push((c, s));
        let xi_k = state.xi[k];
        state.xi[k] = c * xi_k;
        state.xi.push(-s * xi_k);
        state.hessenberg.push(h);

        let res = state.xi[k + 1].abs();
        state.residuals.push(res);

        if res <= cfg.residual_tol * beta {
            converged = true;
            break;
        }
        if h_next < BREAKDOWN_RATIO * beta {
            breakdown = true;
            break;
        }
        state.basis_ranks.push(w.ranks());
        state.basis.push(w.scale(1.0 / h_next));
    }

    let y = back_substitute(&state.hessenberg, &state.xi)?;
    let parts: Vec<TripleBlock> = y
        .iter()
        .zip(&state.basis)
        .map(|(&yi, v)| v.scale(yi))
        .collect();
    let x = if parts.is_empty() {
        x0.clone()
    } else {
        let combo = TripleBlock::concat_all(&parts)?.truncate(policy);
        x0.concat(&apply_p(&combo)?)?.truncate(policy)
    };
    let (x, report) = finish(x, &state, converged, breakdown && !converged);
    Ok((x, report, state))
}

/// Exact recompression once a factor is more than twice as wide as its value
/// can be. Keeps long Gram-Schmidt chains linear in cost without changing
/// the vector beyond rounding.
fn compact(w: TripleBlock) -> TripleBlock {
    let wide = |f: &LowRankFactor| f.rank() > 2 * f.rows_left().min(f.rows_right());
    if wide(&w.lam) || wide(&w.mu) || wide(&w.x) {
        w.truncate(&TruncationPolicy::lossless())
    } else {
        w
    }
}

/// Solves the rotated upper-triangular system `H y = xi` of order `k`.
fn back_substitute(columns: &[Vec<f64>], xi: &[f64]) -> Result<Vec<f64>> {
    let k = columns.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = xi[i];
        for (j, col) in columns.iter().enumerate().skip(i + 1) {
            acc -= col[i] * y[j];
        }
        let d = columns[i][i];
        if d == 0.0 {
            return Err(Error::Singular("GMRES least-squares system"));
        }
        y[i] = acc / d;
    }
    Ok(y)
}

/// `sqrt(trace_product(r, r))` for `r = rhs - A x`, without truncation.
pub fn residual_true<A>(mut apply_a: A, rhs: &TripleBlock, x: &TripleBlock) -> Result<f64>
where
    A: FnMut(&TripleBlock) -> Result<TripleBlock>,
{
    let r = rhs.sub(&apply_a(x)?)?;
    // The QR-based recompression keeps the norm accurate under cancellation.
    block_norm(&r.truncate(&TruncationPolicy::lossless()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::Mat;
    use crate::saddle::{amult, assemble_dense, SaddleSystem, TimeInvariantSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rand_triple(rng: &mut ChaCha8Rng, n: usize, p: usize, s: usize, k: usize) -> TripleBlock {
        let f = |rng: &mut ChaCha8Rng, m: usize| {
            LowRankFactor::new(rand_mat(rng, m, k), rand_mat(rng, s, k)).unwrap()
        };
        TripleBlock::new(f(rng, n), f(rng, p), f(rng, n)).unwrap()
    }

    fn small_system(rng: &mut ChaCha8Rng) -> TimeInvariantSystem {
        let n = 3;
        let b = Mat::identity(n, n) * 0.5;
        let q = Mat::identity(n, n) * 0.2;
        let r = Mat::identity(2, 2) * 0.3;
        TimeInvariantSystem::new(2, b, q, r, rand_mat(rng, n, n) * 0.5, rand_mat(rng, 2, n))
            .unwrap()
    }

    fn ident(v: &TripleBlock) -> Result<TripleBlock> {
        Ok(v.clone())
    }

    #[test]
    fn identity_system_converges_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rhs = rand_triple(&mut rng, 3, 2, 4, 2);
        let cfg = GmresConfig::untruncated(10, 1e-10).unwrap();
        let (x, rep) = solve(ident, ident, &rhs, &TripleBlock::zeros(3, 2, 4), &cfg).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        let diff = (x.to_vec().unwrap() - rhs.to_vec().unwrap()).amax();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn zero_rhs_returns_initial_guess() {
        let cfg = GmresConfig::untruncated(5, 1e-8).unwrap();
        let zero = TripleBlock::zeros(2, 1, 3);
        let (x, rep) = solve(ident, ident, &zero, &zero, &cfg).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert_eq!(x.to_vec().unwrap().amax(), 0.0);
    }

    #[test]
    fn restart_is_rejected() {
        let mut cfg = GmresConfig::untruncated(5, 1e-8).unwrap();
        cfg.restart = Some(3);
        let zero = TripleBlock::zeros(2, 1, 3);
        assert!(matches!(
            solve(ident, ident, &zero, &zero, &cfg),
            Err(Error::RestartUnsupported)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(GmresConfig::new(0, 1e-6, TruncationPolicy::lossless()).is_err());
        assert!(GmresConfig::new(5, 0.0, TruncationPolicy::lossless()).is_err());
        let d = GmresConfig::with_rank(20).unwrap();
        assert_eq!((d.max_iter, d.residual_tol), (20, 1e-6));
        assert_eq!(d.trunc.max_rank(), Some(20));
    }

    #[test]
    fn solves_small_saddle_to_dense_direct_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sys = small_system(&mut rng);
        let rhs = rand_triple(&mut rng, 3, 2, 3, 1);
        let dense = assemble_dense(&SaddleSystem::TimeInvariant(sys.clone())).unwrap();
        let want = dense.lu().solve(&rhs.to_vec().unwrap()).unwrap();
        let cfg = GmresConfig::untruncated(40, 1e-12).unwrap();
        let (x, rep) = solve(
            |v| amult(&sys, v),
            ident,
            &rhs,
            &TripleBlock::zeros(3, 2, 3),
            &cfg,
        )
        .unwrap();
        assert!(rep.converged, "{:?}", rep.residuals);
        let got = x.to_vec().unwrap();
        assert!((&got - &want).norm() <= 1e-8 * want.norm());
    }

    #[test]
    fn basis_is_orthonormal_and_residuals_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = small_system(&mut rng);
        let rhs = rand_triple(&mut rng, 3, 2, 3, 2);
        let cfg = GmresConfig::untruncated(10, 1e-14).unwrap();
        let (_, rep, state) = solve_with_state(
            |v| amult(&sys, v),
            ident,
            &rhs,
            &TripleBlock::zeros(3, 2, 3),
            &cfg,
        )
        .unwrap();
        for (i, vi) in state.basis.iter().enumerate() {
            for (j, vj) in state.basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((trace_product(vi, vj).unwrap() - want).abs() <= 1e-8);
            }
        }
        for pair in rep.residuals.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rotated_residual_matches_true_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = small_system(&mut rng);
        let rhs = rand_triple(&mut rng, 3, 2, 3, 1);
        let cfg = GmresConfig::untruncated(5, 1e-30).unwrap();
        let (x, rep) = solve(
            |v| amult(&sys, v),
            ident,
            &rhs,
            &TripleBlock::zeros(3, 2, 3),
            &cfg,
        )
        .unwrap();
        assert_eq!(rep.iterations, 5);
        let r = residual_true(|v| amult(&sys, v), &rhs, &x).unwrap();
        let rot = *rep.residuals.last().unwrap();
        assert!((r - rot).abs() <= 1e-8 * rot.max(1e-300));
    }

    #[test]
    fn residual_true_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rhs = rand_triple(&mut rng, 3, 2, 4, 2);
        assert!(residual_true(ident, &rhs, &rhs).unwrap() <= 1e-14);
        let zero = TripleBlock::zeros(3, 2, 4);
        let r = residual_true(ident, &rhs, &zero).unwrap();
        assert!((r - block_norm(&rhs).unwrap()).abs() <= 1e-12 * r);
    }

    #[test]
    fn right_preconditioning_with_exact_inverse_converges_at_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = small_system(&mut rng);
        let (n, p, s) = (3, 2, 3);
        let dense = assemble_dense(&SaddleSystem::TimeInvariant(sys.clone())).unwrap();
        let inv = dense.clone().try_inverse().unwrap();
        let lossless = TruncationPolicy::lossless();
        let pinv = |v: &TripleBlock| {
            TripleBlock::from_vec(&(&inv * v.to_vec()?), n, p, s, &lossless)
        };
        let rhs = rand_triple(&mut rng, n, p, s, 1);
        let cfg = GmresConfig::untruncated(5, 1e-10).unwrap();
        let (x, rep) =
            solve(|v| amult(&sys, v), pinv, &rhs, &TripleBlock::zeros(n, p, s), &cfg).unwrap();
        assert_eq!(rep.iterations, 1);
        let want = &inv * rhs.to_vec().unwrap();
        assert!((x.to_vec().unwrap() - &want).norm() <= 1e-9 * want.norm());
    }
}
