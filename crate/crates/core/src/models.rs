//! Test dynamics, observation operators and covariances.

use nalgebra::linalg::Cholesky;
use nalgebra::Dyn;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::lowrank::{Mat, Vector};
use crate::saddle::check_spd;

/// A discrete-time model `x_{k+1} = M(x_k)` with its tangent-linear map.
pub trait Model {
    fn n(&self) -> usize;
    fn step(&self, x: &Vector) -> Vector;
    /// Jacobian of [`Model::step`] at `x`.
    fn tlm(&self, x: &Vector) -> Mat;
    /// Linear models have the same tangent everywhere.
    fn is_linear(&self) -> bool;
}

/// Spatial operator `c_d D2 + c_a D1` on `n` nodes of `[0, 1]`.
///
/// The two boundary rows are zero, so boundary values never change; interior
/// stencils drop the boundary columns, which is exact for zero Dirichlet data.
pub fn ad_operator(n: usize, c_d: f64, c_a: f64) -> Mat {
    let dx = 1.0 / (n as f64 - 1.0);
    let d2 = c_d / (dx * dx);
    let d1 = c_a / (2.0 * dx);
    let mut a = Mat::zeros(n, n);
    for i in 1..n - 1 {
        a[(i, i)] = -2.0 * d2;
        if i > 1 {
            a[(i, i - 1)] = d2 - d1;
        }
        if i < n - 2 {
            a[(i, i + 1)] = d2 + d1;
        }
    }
    a
}

/// Crank-Nicolson propagator `(I - dt/2 A)^{-1} (I + dt/2 A)`.
pub fn ad_build_propagator(n: usize, dt: f64, c_d: f64, c_a: f64) -> Result<Mat> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("grid size must be at least 3, got {n}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let a = ad_operator(n, c_d, c_a) * (0.5 * dt);
    let id = Mat::identity(n, n);
    let implicit = &id - &a;
    let explicit = &id + &a;
    implicit
        .lu()
        .solve(&explicit)
        .ok_or(Error::Singular("Crank-Nicolson implicit matrix"))
}

/// Linear advection-diffusion `u_t = c_d u_xx + c_a u_x` with zero boundaries.
#[derive(Debug, Clone)]
pub struct AdvectionDiffusionModel {
    n: usize,
    dt: f64,
    c_d: f64,
    c_a: f64,
    m: Mat,
}

impl AdvectionDiffusionModel {
    pub fn new(n: usize, dt: f64, c_d: f64, c_a: f64) -> Result<Self> {
        let m = ad_build_propagator(n, dt, c_d, c_a)?;
        Ok(Self { n, dt, c_d, c_a, m })
    }

    pub fn propagator(&self) -> &Mat {
        &self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn coefficients(&self) -> (f64, f64) {
        (self.c_d, self.c_a)
    }

    /// Node coordinates `i / (n - 1)`.
    pub fn grid(&self) -> Vector {
        let dx = 1.0 / (self.n as f64 - 1.0);
        Vector::from_fn(self.n, |i, _| i as f64 * dx)
    }

    /// `sin(pi x)` on the grid.
    pub fn initial_condition(&self) -> Vector {
        self.grid().map(|x| (std::f64::consts::PI * x).sin())
    }
}

impl Model for AdvectionDiffusionModel {
    fn n(&self) -> usize {
        self.n
    }
    fn step(&self, x: &Vector) -> Vector {
        &self.m * x
    }
    fn tlm(&self, _x: &Vector) -> Mat {
        self.m.clone()
    }
    fn is_linear(&self) -> bool {
        true
    }
}

/// Lorenz-95 with forcing `f`, integrated by classic RK4 with step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz95Model {
    pub n: usize,
    pub f: f64,
    pub dt: f64,
}

impl Lorenz95Model {
    pub fn new(n: usize, f: f64, dt: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidParameter(format!(
                "Lorenz-95 needs at least 4 variables, got {n}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite() && f.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive and f finite".into()));
        }
        Ok(Self { n, f, dt })
    }

    /// Jacobian of [`lorenz_rhs`] at `x`.
    pub fn rhs_jacobian(&self, x: &Vector) -> Mat {
        let n = self.n;
        let mut j = Mat::zeros(n, n);
        for i in 0..n {
            let (im2, im1, ip1) = ((i + n - 2) % n, (i + n - 1) % n, (i + 1) % n);
            j[(i, im2)] += -x[im1];
            j[(i, im1)] += x[ip1] - x[im2];
            j[(i, i)] += -1.0;
            j[(i, ip1)] += x[im1];
        }
        j
    }
}

/// `dx_i/dt = -x_{i-2} x_{i-1} + x_{i-1} x_{i+1} - x_i + f`, cyclic indices.
pub fn lorenz_rhs(model: &Lorenz95Model, x: &Vector) -> Vector {
    let n = model.n;
    Vector::from_fn(n, |i, _| {
        let (im2, im1, ip1) = ((i + n - 2) % n, (i + n - 1) % n, (i + 1) % n);
        -x[im2] * x[im1] + x[im1] * x[ip1] - x[i] + model.f
    })
}

pub fn rk4_step(model: &Lorenz95Model, x: &Vector) -> Vector {
    let h = model.dt;
    let k1 = lorenz_rhs(model, x);
    let k2 = lorenz_rhs(model, &(x + &k1 * (h / 2.0)));
    let k3 = lorenz_rhs(model, &(x + &k2 * (h / 2.0)));
    let k4 = lorenz_rhs(model, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Exact Jacobian of [`rk4_step`], by the chain rule through the stages.
pub fn lorenz_tlm(model: &Lorenz95Model, x: &Vector) -> Mat {
    let h = model.dt;
    let id = Mat::identity(model.n, model.n);
    let k1 = lorenz_rhs(model, x);
    let x2 = x + &k1 * (h / 2.0);
    let k2 = lorenz_rhs(model, &x2);
    let x3 = x + &k2 * (h / 2.0);
    let k3 = lorenz_rhs(model, &x3);
    let x4 = x + &k3 * h;

    let j1 = model.rhs_jacobian(x);
    let j2 = model.rhs_jacobian(&x2) * (&id + &j1 * (h / 2.0));
    let j3 = model.rhs_jacobian(&x3) * (&id + &j2 * (h / 2.0));
    let j4 = model.rhs_jacobian(&x4) * (&id + &j3 * h);
    id + (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (h / 6.0)
}

impl Model for Lorenz95Model {
    fn n(&self) -> usize {
        self.n
    }
    fn step(&self, x: &Vector) -> Vector {
        rk4_step(self, x)
    }
    fn tlm(&self, x: &Vector) -> Mat {
        lorenz_tlm(self, x)
    }
    fn is_linear(&self) -> bool {
        false
    }
}

/// Observes every `stride`-th component starting at `offset` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperator {
    n: usize,
    stride: usize,
    offset: usize,
    indices: Vec<usize>,
}

impl ObservationOperator {
    pub fn new(n: usize, stride: usize, offset: usize) -> Result<Self> {
        if stride == 0 || offset >= n {
            return Err(Error::InvalidParameter(format!(
                "observation stride {stride} / offset {offset} invalid for n = {n}"
            )));
        }
        let indices = (offset..n).step_by(stride).collect();
        Ok(Self {
            n,
            stride,
            offset,
            indices,
        })
    }

    /// Every component.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(n, 1, 0)
    }

    /// Components 5, 10, ... in 1-based numbering.
    pub fn every_fifth(n: usize) -> Result<Self> {
        Self::new(n, 5, 4)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.indices.len()
    }
    pub fn stride(&self) -> usize {
        self.stride
    }
    pub fn offset(&self) -> usize {
        self.offset
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Selection matrix `H` (`p x n`).
    pub fn matrix(&self) -> Mat {
        let mut h = Mat::zeros(self.p(), self.n);
        for (row, &col) in self.indices.iter().enumerate() {
            h[(row, col)] = 1.0;
        }
        h
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        check_dim("observed state length", self.n, x.len())?;
        Ok(Vector::from_iterator(
            self.p(),
            self.indices.iter().map(|&i| x[i]),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceKind {
    /// `variance * I`.
    ScaledIdentity { variance: f64 },
    /// `variance * exp(-|i - j| / length)`.
    ExpDecay { variance: f64, length: f64 },
}

/// A dense SPD covariance with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    kind: CovarianceKind,
    matrix: Mat,
    chol: Cholesky<f64, Dyn>,
}

impl CovarianceModel {
    pub fn new(kind: CovarianceKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("covariance dimension must be positive".into()));
        }
        let matrix = match kind {
            CovarianceKind::ScaledIdentity { variance } => Mat::identity(dim, dim) * variance,
            CovarianceKind::ExpDecay { variance, length } => {
                if !(length > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "decay length must be positive, got {length}"
                    )));
                }
                Mat::from_fn(dim, dim, |i, j| {
                    variance * (-(i.abs_diff(j) as f64) / length).exp()
                })
            }
        };
        let chol = check_spd("covariance", &matrix)?;
        Ok(Self { kind, matrix, chol })
    }

    pub fn scaled_identity(variance: f64, dim: usize) -> Result<Self> {
        Self::new(CovarianceKind::ScaledIdentity { variance }, dim)
    }

    pub fn exp_decay(variance: f64, length: f64, dim: usize) -> Result<Self> {
        Self::new(CovarianceKind::ExpDecay { variance, length }, dim)
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        check_dim("covariance operand", self.dim(), v.len())?;
        Ok(&self.matrix * v)
    }

    pub fn apply_inverse(&self, v: &Vector) -> Result<Vector> {
        check_dim("covariance operand", self.dim(), v.len())?;
        Ok(self.chol.solve(v))
    }

    pub fn inverse(&self) -> Mat {
        self.chol.inverse()
    }

    /// Draws `L z` with `z` standard normal and `L L^T` the covariance.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        self.chol.l() * z
    }
}
