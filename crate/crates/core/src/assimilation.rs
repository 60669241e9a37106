//! Incremental weak-constraint 4D-Var: right-hand sides, linearisation, the
//! two inner solvers and the Gauss-Newton outer loop.
//!
//! Trajectories are `n x (N+1)` matrices with one column per time level.

use std::time::Duration;

use nalgebra::linalg::Cholesky;
use nalgebra::Dyn;

use crate::error::{check_dim, Error, Result};
use crate::gmres::{self, GmresConfig, SolveReport};
use crate::lowrank::{LowRankFactor, Mat, TripleBlock, TruncationPolicy, Vector};
use crate::models::{
    AdvectionDiffusionModel, CovarianceModel, Lorenz95Model, Model, ObservationOperator,
};
use crate::precond::{Preconditioner, PreconditionerSpec};
use crate::saddle::{
    assemble_dense, check_spd, SaddleSystem, TimeInvariantSystem, TimeVaryingSystem,
    ASSEMBLE_LIMIT,
};

/// The two test models behind one type.
#[derive(Debug, Clone)]
pub enum DynamicsModel {
    AdvectionDiffusion(AdvectionDiffusionModel),
    Lorenz95(Lorenz95Model),
}

impl Model for DynamicsModel {
    fn n(&self) -> usize {
        match self {
            Self::AdvectionDiffusion(m) => m.n(),
            Self::Lorenz95(m) => m.n(),
        }
    }
    fn step(&self, x: &Vector) -> Vector {
        match self {
            Self::AdvectionDiffusion(m) => m.step(x),
            Self::Lorenz95(m) => m.step(x),
        }
    }
    fn tlm(&self, x: &Vector) -> Mat {
        match self {
            Self::AdvectionDiffusion(m) => m.tlm(x),
            Self::Lorenz95(m) => m.tlm(x),
        }
    }
    fn is_linear(&self) -> bool {
        match self {
            Self::AdvectionDiffusion(m) => m.is_linear(),
            Self::Lorenz95(m) => m.is_linear(),
        }
    }
}

/// Runs `count` states starting at `x0` (which is the first column).
pub fn propagate(model: &impl Model, x0: &Vector, count: usize) -> Result<Mat> {
    let mut out = Mat::zeros(x0.len(), count);
    if count == 0 {
        return Ok(out);
    }
    let mut x = x0.clone();
    for k in 0..count {
        if k > 0 {
            x = model.step(&x);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                step: k,
                stage: "model propagation",
            });
        }
        out.set_column(k, &x);
    }
    Ok(out)
}

/// A twin-experiment data set over one assimilation window.
#[derive(Debug, Clone)]
pub struct AssimilationProblem {
    pub model: DynamicsModel,
    pub obs: ObservationOperator,
    pub cov_b: CovarianceModel,
    pub cov_q: CovarianceModel,
    pub cov_r: CovarianceModel,
    /// `N`: the window holds `N+1` time levels.
    pub window: usize,
    pub background: Vector,
    /// `y_0..y_N` as columns of a `p x (N+1)` matrix.
    pub observations: Mat,
    /// Window plus forecast. Only metrics read it.
    pub truth: Mat,
}

impl AssimilationProblem {
    pub fn new(
        model: DynamicsModel,
        obs: ObservationOperator,
        cov_b: CovarianceModel,
        cov_q: CovarianceModel,
        cov_r: CovarianceModel,
        background: Vector,
        observations: Mat,
        truth: Mat,
    ) -> Result<Self> {
        let n = model.n();
        let steps = observations.ncols();
        if steps < 2 {
            return Err(Error::InvalidParameter(
                "the window needs at least two time levels".into(),
            ));
        }
        check_dim("observation operator state size", n, obs.n())?;
        check_dim("B dimension", n, cov_b.dim())?;
        check_dim("Q dimension", n, cov_q.dim())?;
        check_dim("R dimension", obs.p(), cov_r.dim())?;
        check_dim("background length", n, background.len())?;
        check_dim("observation rows", obs.p(), observations.nrows())?;
        check_dim("truth rows", n, truth.nrows())?;
        if truth.ncols() < steps {
            return Err(Error::DimensionMismatch {
                axis: "truth length",
                expected: steps,
                found: truth.ncols(),
            });
        }
        Ok(Self {
            model,
            obs,
            cov_b,
            cov_q,
            cov_r,
            window: steps - 1,
            background,
            observations,
            truth,
        })
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }
    pub fn p(&self) -> usize {
        self.obs.p()
    }
    pub fn steps(&self) -> usize {
        self.window + 1
    }
    /// Forecast length available in the truth beyond the window.
    pub fn forecast_len(&self) -> usize {
        self.truth.ncols() - self.steps()
    }

    /// The first guess: `x^b` pushed through the nonlinear model.
    pub fn first_guess(&self) -> Result<Mat> {
        propagate(&self.model, &self.background, self.steps())
    }

    fn check_trajectory(&self, traj: &Mat) -> Result<()> {
        check_dim("trajectory rows", self.n(), traj.nrows())?;
        check_dim("trajectory length", self.steps(), traj.ncols())
    }
}

/// Dense `b = [x^b - x_0, M(x_0) - x_1, ...]` and `d = [y_k - H x_k]`.
pub fn rhs_dense(problem: &AssimilationProblem, traj: &Mat) -> Result<(Mat, Mat)> {
    problem.check_trajectory(traj)?;
    let n = problem.n();
    let steps = problem.steps();
    let mut b = Mat::zeros(n, steps);
    b.set_column(0, &(&problem.background - traj.column(0)));
    for k in 1..steps {
        let forecast = problem.model.step(&traj.column(k - 1).into_owned());
        b.set_column(k, &(forecast - traj.column(k)));
    }
    let mut d = Mat::zeros(problem.p(), steps);
    for k in 0..steps {
        let hx = problem.obs.apply(&traj.column(k).into_owned())?;
        d.set_column(k, &(problem.observations.column(k) - hx));
    }
    Ok((b, d))
}

/// [`rhs_dense`] compressed under `policy`.
pub fn build_rhs(
    problem: &AssimilationProblem,
    traj: &Mat,
    policy: &TruncationPolicy,
) -> Result<(LowRankFactor, LowRankFactor)> {
    let (b, d) = rhs_dense(problem, traj)?;
    Ok((
        LowRankFactor::from_dense(&b, policy),
        LowRankFactor::from_dense(&d, policy),
    ))
}

/// Saddle operator about `traj`: time-invariant for linear models, otherwise
/// one tangent-linear matrix per step.
pub fn linearise(problem: &AssimilationProblem, traj: &Mat) -> Result<SaddleSystem> {
    problem.check_trajectory(traj)?;
    let b = problem.cov_b.matrix().clone();
    let q = problem.cov_q.matrix().clone();
    let r = problem.cov_r.matrix().clone();
    let h = problem.obs.matrix();
    let window = problem.window;
    if problem.model.is_linear() {
        let m = problem.model.tlm(&traj.column(0).into_owned());
        return Ok(SaddleSystem::TimeInvariant(TimeInvariantSystem::new(
            window, b, q, r, m, h,
        )?));
    }
    let m = (1..=window)
        .map(|k| problem.model.tlm(&traj.column(k - 1).into_owned()))
        .collect();
    Ok(SaddleSystem::TimeVarying(TimeVaryingSystem::new(
        b,
        vec![q; window],
        vec![r; window + 1],
        m,
        vec![h; window + 1],
    )?))
}

/// All three unknowns of the saddle system as dense matrices.
#[derive(Debug, Clone)]
pub struct FullRankSolution {
    pub lam: Mat,
    pub mu: Mat,
    pub x: Mat,
}

impl FullRankSolution {
    pub fn to_vec(&self) -> Vector {
        let parts = [&self.lam, &self.mu, &self.x];
        let len = parts.iter().map(|m| m.len()).sum();
        Vector::from_iterator(len, parts.iter().flat_map(|m| m.iter().copied()))
    }
}

fn spd_inverse(name: &str, m: &Mat) -> Result<Mat> {
    Ok(check_spd(name, m)?.inverse())
}

/// Direct solve that never forms the saddle matrix.
///
/// Eliminating `lam` and `mu` leaves `(L^T D^{-1} L + H^T R^{-1} H) dx =
/// L^T D^{-1} b + H^T R^{-1} d`, which is SPD and block tridiagonal in time;
/// it is solved by block elimination with a Cholesky factor per step.
pub fn full_rank_solve(sys: &SaddleSystem, b: &Mat, d: &Mat) -> Result<FullRankSolution> {
    let (n, p, steps) = (sys.n(), sys.p(), sys.steps());
    check_dim("b rows", n, b.nrows())?;
    check_dim("b columns", steps, b.ncols())?;
    check_dim("d rows", p, d.nrows())?;
    check_dim("d columns", steps, d.ncols())?;
    let last = steps - 1;

    let d_inv: Vec<Mat> = match sys {
        SaddleSystem::TimeInvariant(_) => {
            let b_inv = spd_inverse("B", sys.b())?;
            let q_inv = spd_inverse("Q", sys.q(1))?;
            (0..steps)
                .map(|k| if k == 0 { b_inv.clone() } else { q_inv.clone() })
                .collect()
        }
        SaddleSystem::TimeVarying(_) => (0..steps)
            .map(|k| spd_inverse("D_k", sys.d(k)))
            .collect::<Result<_>>()?,
    };
    let r_inv: Vec<Mat> = match sys {
        SaddleSystem::TimeInvariant(_) => vec![spd_inverse("R", sys.r(0))?; steps],
        SaddleSystem::TimeVarying(_) => (0..steps)
            .map(|k| spd_inverse("R_k", sys.r(k)))
            .collect::<Result<_>>()?,
    };

    // lower[k] = A_{k+1,k} = -Q_{k+1}^{-1} M_{k+1}; A_{k,k+1} is its transpose.
    let lower: Vec<Mat> = (0..last).map(|k| -(&d_inv[k + 1] * sys.m(k + 1))).collect();
    let u: Vec<Vector> = (0..steps).map(|k| &d_inv[k] * b.column(k)).collect();

    let mut factors: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(steps);
    let mut reduced: Vec<Vector> = Vec::with_capacity(steps);
    for k in 0..steps {
        let h = sys.h(k);
        let hr = h.transpose() * &r_inv[k];
        let mut diag = &d_inv[k] + &hr * h;
        let mut g = &u[k] + &hr * d.column(k);
        if k < last {
            let m = sys.m(k + 1);
            diag += m.transpose() * &d_inv[k + 1] * m;
            g -= m.transpose() * &u[k + 1];
        }
        if k > 0 {
            let prev = &factors[k - 1];
            let a = &lower[k - 1];
            diag -= a * prev.solve(&a.transpose());
            g -= a * prev.solve(&reduced[k - 1]);
        }
        let chol = Cholesky::new(diag).ok_or(Error::Singular("reduced normal equations"))?;
        factors.push(chol);
        reduced.push(g);
    }

    let mut x = Mat::zeros(n, steps);
    for k in (0..steps).rev() {
        let mut rhs = reduced[k].clone();
        if k < last {
            rhs -= lower[k].transpose() * x.column(k + 1);
        }
        x.set_column(k, &factors[k].solve(&rhs));
    }

    let mut lam = Mat::zeros(n, steps);
    let mut mu = Mat::zeros(p, steps);
    for k in 0..steps {
        let mut lx = x.column(k).into_owned();
        if k > 0 {
            lx -= sys.m(k) * x.column(k - 1);
        }
        lam.set_column(k, &(&d_inv[k] * (b.column(k) - lx)));
        let hx = sys.h(k) * x.column(k);
        mu.set_column(k, &(&r_inv[k] * (d.column(k) - hx)));
    }
    Ok(FullRankSolution { lam, mu, x })
}

/// Assembles the saddle matrix and solves it by LU; the oracle for
/// [`full_rank_solve`] on small systems.
pub fn full_rank_solve_dense(sys: &SaddleSystem, b: &Mat, d: &Mat) -> Result<FullRankSolution> {
    let (n, p, steps) = (sys.n(), sys.p(), sys.steps());
    if sys.dim() > ASSEMBLE_LIMIT {
        return Err(Error::SizeGuard {
            what: "dense saddle solve",
            size: sys.dim(),
            limit: ASSEMBLE_LIMIT,
        });
    }
    check_dim("b length", n * steps, b.len())?;
    check_dim("d length", p * steps, d.len())?;
    let a = assemble_dense(sys)?;
    let mut rhs = Vector::zeros(sys.dim());
    rhs.rows_mut(0, b.len()).copy_from_slice(b.as_slice());
    rhs.rows_mut(b.len(), d.len()).copy_from_slice(d.as_slice());
    let sol = a.lu().solve(&rhs).ok_or(Error::Singular("saddle matrix"))?;
    let (ns, ps) = (n * steps, p * steps);
    Ok(FullRankSolution {
        lam: Mat::from_column_slice(n, steps, &sol.as_slice()[..ns]),
        mu: Mat::from_column_slice(p, steps, &sol.as_slice()[ns..ns + ps]),
        x: Mat::from_column_slice(n, steps, &sol.as_slice()[ns + ps..]),
    })
}

/// LR-GMRES on `A z = (b, d, 0)` from a zero initial guess.
pub fn low_rank_solve(
    sys: &SaddleSystem,
    b: LowRankFactor,
    d: LowRankFactor,
    spec: PreconditionerSpec,
    cfg: &GmresConfig,
) -> Result<(TripleBlock, SolveReport)> {
    let (n, p, steps) = (sys.n(), sys.p(), sys.steps());
    let rhs = TripleBlock::new(b, d, LowRankFactor::zeros(n, steps))?;
    let pre = Preconditioner::new(spec, sys)?;
    gmres::solve(
        |v| sys.apply(v),
        |v| pre.apply(v, &cfg.trunc),
        &rhs,
        &TripleBlock::zeros(n, p, steps),
        cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    LowRank,
    FullRank,
}

#[derive(Debug, Clone)]
pub struct OuterLoopConfig {
    pub n_outer: usize,
    pub gmres: GmresConfig,
    pub precond: PreconditionerSpec,
    pub mode: SolverMode,
}

impl OuterLoopConfig {
    pub fn new(
        n_outer: usize,
        gmres: GmresConfig,
        precond: PreconditionerSpec,
        mode: SolverMode,
    ) -> Result<Self> {
        if n_outer == 0 {
            return Err(Error::InvalidParameter("n_outer must be at least 1".into()));
        }
        Ok(Self {
            n_outer,
            gmres,
            precond,
            mode,
        })
    }
}

/// `J = J_b + J_o + J_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub total: f64,
    pub background: f64,
    pub observation: f64,
    pub model: f64,
}

pub fn evaluate_cost(problem: &AssimilationProblem, traj: &Mat) -> Result<Cost> {
    let (b, d) = rhs_dense(problem, traj)?;
    let quad = |cov: &CovarianceModel, v: Vector| -> Result<f64> {
        Ok(0.5 * v.dot(&cov.apply_inverse(&v)?))
    };
    let background = quad(&problem.cov_b, b.column(0).into_owned())?;
    let mut observation = 0.0;
    for k in 0..problem.steps() {
        observation += quad(&problem.cov_r, d.column(k).into_owned())?;
    }
    let mut model = 0.0;
    for k in 1..problem.steps() {
        model += quad(&problem.cov_q, b.column(k).into_owned())?;
    }
    Ok(Cost {
        total: background + observation + model,
        background,
        observation,
        model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageReport {
    pub n: usize,
    pub window: usize,
    pub p: usize,
    pub rank: usize,
    pub full_elems: usize,
    pub low_elems: usize,
    pub reduction: f64,
}

pub fn storage_report(n: usize, window: usize, p: usize, rank: usize) -> StorageReport {
    let full_elems = n * (window + 1);
    let low_elems = rank * (n + window + 1);
    StorageReport {
        n,
        window,
        p,
        rank,
        full_elems,
        low_elems,
        reduction: 1.0 - low_elems as f64 / full_elems as f64,
    }
}

/// Per-column root mean squared difference.
pub fn rmse(a: &Mat, b: &Mat) -> Result<Vec<f64>> {
    check_dim("rmse rows", a.nrows(), b.nrows())?;
    check_dim("rmse columns", a.ncols(), b.ncols())?;
    let rows = a.nrows().max(1) as f64;
    Ok(a.column_iter()
        .zip(b.column_iter())
        .map(|(x, y)| ((x - y).norm_squared() / rows).sqrt())
        .collect())
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Final trajectory over the window.
    pub analysis: Mat,
    /// Nonlinear forecast from the last analysis state, excluding that state.
    pub forecast: Mat,
    /// Analysis then forecast against the truth, one entry per time level.
    pub rmse: Vec<f64>,
    /// Propagated background against the truth over the same levels.
    pub background_rmse: Vec<f64>,
    /// LR-GMRES reports, one per outer iteration; empty in full-rank mode.
    pub reports: Vec<SolveReport>,
    /// `J` at the first guess and after each outer iteration.
    pub costs: Vec<Cost>,
    /// Euclidean norm of each increment.
    pub increment_norms: Vec<f64>,
    /// Elements actually held by the last increment's `x` factor; the dense
    /// count in full-rank mode.
    pub stored_elems: usize,
    pub wall_time: Duration,
}

impl ExperimentResult {
    pub fn mean_window_rmse(&self, window: usize) -> f64 {
        mean(&self.rmse[..=window])
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_finite(m: &Mat, stage: &'static str) -> Result<()> {
    for (k, col) in m.column_iter().enumerate() {
        if !col.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: k, stage });
        }
    }
    Ok(())
}

/// The incremental outer loop followed by a forecast and the RMSE series.
pub fn gauss_newton(problem: &AssimilationProblem, cfg: &OuterLoopConfig) -> Result<ExperimentResult> {
    let started = std::time::Instant::now();
    let n = problem.n();
    let steps = problem.steps();
    let mut traj = problem.first_guess()?;
    let mut costs = vec![evaluate_cost(problem, &traj)?];
    let mut reports = Vec::new();
    let mut increment_norms = Vec::new();
    let mut stored_elems = n * steps;

    for _ in 0..cfg.n_outer {
        let (b, d) = rhs_dense(problem, &traj)?;
        let sys = linearise(problem, &traj)?;
        let dx = match cfg.mode {
            SolverMode::FullRank => full_rank_solve(&sys, &b, &d)?.x,
            SolverMode::LowRank => {
                let policy = &cfg.gmres.trunc;
                let bf = LowRankFactor::from_dense(&b, policy);
                let df = LowRankFactor::from_dense(&d, policy);
                let (sol, report) = low_rank_solve(&sys, bf, df, cfg.precond, &cfg.gmres)?;
                reports.push(report);
                stored_elems = sol.x.storage();
                sol.x.to_dense()?
            }
        };
        check_finite(&dx, "increment")?;
        increment_norms.push(dx.norm());
        traj += dx;
        check_finite(&traj, "outer update")?;
        costs.push(evaluate_cost(problem, &traj)?);
    }

    let horizon = problem.forecast_len();
    let last = traj.column(steps - 1).into_owned();
    let run = propagate(&problem.model, &last, horizon + 1)?;
    let forecast = run.columns(1, horizon).into_owned();

    let mut estimate = Mat::zeros(n, steps + horizon);
    estimate.columns_mut(0, steps).copy_from(&traj);
    estimate.columns_mut(steps, horizon).copy_from(&forecast);
    let background = propagate(&problem.model, &problem.background, steps + horizon)?;

    Ok(ExperimentResult {
        rmse: rmse(&estimate, &problem.truth)?,
        background_rmse: rmse(&background, &problem.truth)?,
        analysis: traj,
        forecast,
        reports,
        costs,
        increment_norms,
        stored_elems,
        wall_time: started.elapsed(),
    })
}
