//! Preconditioners for the saddle system, applied in factored form.
//!
//! All variants share the block layout `(lam, mu, x)` of the saddle operator.
//! The inexact-constraint family approximates `L = I + C kron M` by
//! `L~ = I + C kron M~`; its inverse is either the two-term Neumann sum
//! `I - C kron M~` or the exact finite sum (C is nilpotent). Schur-complement
//! variants use `S~ = -L~^T D^{-1} L~`, applied either through the same Neumann
//! sum, through two triangular Sylvester solves, or densely.
//!
//! Each variant also exposes its forward matrix, the matrix whose exact inverse
//! the application computes. For truncated Neumann sums that is the matrix
//! built from `L~eff = (truncated sum)^{-1}`, not from `L~` itself.

use nalgebra::linalg::Cholesky;
use nalgebra::{Complex, Dyn};

use crate::error::{Error, Result};
use crate::lowrank::{LowRankFactor, Mat, TripleBlock, TruncationPolicy, Vector};
use crate::saddle::{assemble_dense, cat, check_spd, structure, SaddleSystem, ASSEMBLE_LIMIT};
use crate::svd::thin_svd;

/// Largest saddle dimension accepted by [`spectrum_report`].
pub const SPECTRUM_LIMIT: usize = 1000;

/// Choice of `M~` in `L~ = I + C kron M~`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelApprox {
    Zero,
    Identity,
    /// The system's own `M`; needs a time-invariant system.
    Exact,
}

/// How many terms of `L~^{-1} = sum_k (-1)^k C^k kron M~^k` to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeumannTerms {
    TwoTerm,
    Exact,
}

/// Approximation of the Schur complement inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchurApprox {
    /// `-T D T^T` with `T` the (possibly truncated) Neumann sum.
    Neumann { m_tilde: ModelApprox, terms: NeumannTerms },
    /// `(-L~^T D^{-1} L~)^{-1}` through two Sylvester solves.
    Sylvester { m_tilde: ModelApprox },
    /// Dense inverse of the true `-L^T D^{-1} L - H^T R^{-1} H`.
    ExactDense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerSpec {
    Identity,
    /// `[D 0 L~; 0 R 0; L~^T 0 0]`.
    InexactConstraint { m_tilde: ModelApprox, terms: NeumannTerms },
    /// `[D 0 I; 0 R H; I H^T 0]`.
    InexactConstraintIH,
    /// `diag(D, R, S~)`.
    SchurDiag { schur: SchurApprox },
    /// `[D 0 L~; 0 R H~; 0 0 S~]` with `H~` either `H` or zero.
    BlockTriangular { m_tilde: ModelApprox, h_exact: bool, schur: SchurApprox },
}

impl PreconditionerSpec {
    /// Inexact constraint with `L~^{-1} = I`.
    pub fn ic_i() -> Self {
        Self::InexactConstraint {
            m_tilde: ModelApprox::Zero,
            terms: NeumannTerms::TwoTerm,
        }
    }

    /// Inexact constraint with `L^ = I + C kron I`, inverse cut after two terms.
    pub fn ic_lhat() -> Self {
        Self::InexactConstraint {
            m_tilde: ModelApprox::Identity,
            terms: NeumannTerms::TwoTerm,
        }
    }

    /// Inexact constraint with the exact `L`.
    pub fn ic_exact_l() -> Self {
        Self::InexactConstraint {
            m_tilde: ModelApprox::Exact,
            terms: NeumannTerms::Exact,
        }
    }

    pub fn ic_ih() -> Self {
        Self::InexactConstraintIH
    }

    pub fn sd_lhat() -> Self {
        Self::SchurDiag {
            schur: SchurApprox::Neumann {
                m_tilde: ModelApprox::Identity,
                terms: NeumannTerms::TwoTerm,
            },
        }
    }

    /// Block diagonal with the Sylvester Schur apply and `M~ = I`.
    pub fn sd_sylvester() -> Self {
        Self::SchurDiag {
            schur: SchurApprox::Sylvester {
                m_tilde: ModelApprox::Identity,
            },
        }
    }

    /// Block triangular with exact `L` and `H` and the Sylvester Schur apply.
    pub fn block_tri() -> Self {
        Self::BlockTriangular {
            m_tilde: ModelApprox::Exact,
            h_exact: true,
            schur: SchurApprox::Sylvester {
                m_tilde: ModelApprox::Exact,
            },
        }
    }

    /// Names accepted on the command line.
    pub const NAMES: [&'static str; 8] = [
        "none", "ic-i", "ic-lhat", "ic-exact", "ic-ih", "sd-lhat", "sd-sylvester", "block-tri",
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "none" | "identity" => Self::Identity,
            "ic-i" => Self::ic_i(),
            "ic-lhat" => Self::ic_lhat(),
            "ic-exact" => Self::ic_exact_l(),
            "ic-ih" => Self::ic_ih(),
            "sd-lhat" => Self::sd_lhat(),
            "sd-sylvester" => Self::sd_sylvester(),
            "block-tri" => Self::block_tri(),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preconditioner `{other}`; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    /// Short label, matching [`PreconditionerSpec::parse`] for the named variants.
    pub fn label(&self) -> String {
        for name in Self::NAMES {
            if Self::parse(name).ok().as_ref() == Some(self) {
                return name.to_string();
            }
        }
        format!("{self:?}")
    }
}

/// A `L~^{-1}` approximation as an operator on factored states.
#[derive(Debug, Clone)]
struct Neumann {
    m: Option<Mat>,
    terms: NeumannTerms,
}

impl Neumann {
    /// `T f` or `T^T f`.
    fn apply(&self, f: &LowRankFactor, transpose: bool, policy: &TruncationPolicy) -> LowRankFactor {
        let Some(m) = &self.m else {
            return f.clone();
        };
        let (w, v) = (f.left(), f.right());
        let shift = |x: &Mat| {
            if transpose {
                structure::shift_t(x)
            } else {
                structure::shift(x)
            }
        };
        let mpow = |x: &Mat| if transpose { m.tr_mul(x) } else { m * x };
        match self.terms {
            NeumannTerms::TwoTerm => cat(vec![(w.clone(), v.clone()), (-mpow(w), shift(v))]),
            NeumannTerms::Exact => {
                let steps = v.nrows();
                let mut parts = Vec::with_capacity(steps);
                let (mut wk, mut vk) = (w.clone(), v.clone());
                for k in 0..steps {
                    if k > 0 {
                        wk = -mpow(&wk);
                        vk = shift(&vk);
                    }
                    parts.push((wk.clone(), vk.clone()));
                }
                cat(parts).truncate(policy)
            }
        }
    }

    /// Dense `T`, time-major.
    fn dense(&self, n: usize, steps: usize) -> Mat {
        let id = Mat::identity(n * steps, n * steps);
        let Some(m) = &self.m else {
            return id;
        };
        let c = structure::shift_matrix(steps);
        let last = match self.terms {
            NeumannTerms::TwoTerm => 1,
            NeumannTerms::Exact => steps - 1,
        };
        let mut out = id;
        let (mut ck, mut mk) = (Mat::identity(steps, steps), Mat::identity(n, n));
        for k in 1..=last {
            ck = &ck * &c;
            mk = &mk * m;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            out += ck.kronecker(&mk) * sign;
        }
        out
    }
}

/// Covariance pieces shared by every variant.
#[derive(Debug, Clone)]
struct Covariances {
    b: Mat,
    q: Mat,
    b_chol: Cholesky<f64, Dyn>,
    q_chol: Cholesky<f64, Dyn>,
    r_chol: Cholesky<f64, Dyn>,
}

impl Covariances {
    /// `D f = [B W, Q W] [E1 V, E2 V]^T`.
    fn d(&self, f: &LowRankFactor) -> LowRankFactor {
        let (w, v) = (f.left(), f.right());
        cat(vec![
            (&self.b * w, structure::e1(v)),
            (&self.q * w, structure::e2(v)),
        ])
    }

    fn d_inv(&self, f: &LowRankFactor) -> LowRankFactor {
        let (w, v) = (f.left(), f.right());
        cat(vec![
            (self.b_chol.solve(w), structure::e1(v)),
            (self.q_chol.solve(w), structure::e2(v)),
        ])
    }

    fn r_inv(&self, f: &LowRankFactor) -> LowRankFactor {
        cat(vec![(self.r_chol.solve(f.left()), f.right().clone())])
    }
}

#[derive(Debug, Clone)]
enum SchurOp {
    Neumann(Neumann),
    Sylvester(Option<Mat>),
    Dense(Mat),
}

/// A preconditioner bound to one system, with its factorisations cached.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    spec: PreconditionerSpec,
    n: usize,
    p: usize,
    steps: usize,
    cov: Option<Covariances>,
    linv: Option<Neumann>,
    /// Forward `M~` of the block-triangular `L~`.
    m_forward: Option<Mat>,
    h: Option<Mat>,
    ih: Option<(Cholesky<f64, Dyn>, Cholesky<f64, Dyn>)>,
    schur: Option<SchurOp>,
}

fn unsupported(spec: &PreconditionerSpec, reason: &str) -> Error {
    Error::UnsupportedPreconditioner {
        name: spec.label(),
        reason: reason.to_string(),
    }
}

fn resolve_model(
    spec: &PreconditionerSpec,
    m: ModelApprox,
    sys: &SaddleSystem,
) -> Result<Option<Mat>> {
    Ok(match m {
        ModelApprox::Zero => None,
        ModelApprox::Identity => Some(Mat::identity(sys.n(), sys.n())),
        ModelApprox::Exact => match sys {
            SaddleSystem::TimeInvariant(s) => Some(s.m().clone()),
            SaddleSystem::TimeVarying(_) => {
                return Err(unsupported(spec, "M~ = M needs a time-invariant model"))
            }
        },
    })
}

fn invariant_h(spec: &PreconditionerSpec, sys: &SaddleSystem) -> Result<Mat> {
    match sys {
        SaddleSystem::TimeInvariant(s) => Ok(s.h().clone()),
        SaddleSystem::TimeVarying(_) => Err(unsupported(
            spec,
            "the exact observation operator is only used for time-invariant systems",
        )),
    }
}

fn covariances(spec: &PreconditionerSpec, sys: &SaddleSystem) -> Result<Covariances> {
    let window = sys.window();
    let b = sys.b().clone();
    let q = if window == 0 { b.clone() } else { sys.q(1).clone() };
    let r = sys.r(0).clone();
    if (1..=window).any(|i| sys.q(i) != &q) || (0..=window).any(|i| sys.r(i) != &r) {
        return Err(unsupported(spec, "Q_i and R_i must not vary in time"));
    }
    Ok(Covariances {
        b_chol: check_spd("B", &b)?,
        q_chol: check_spd("Q", &q)?,
        r_chol: check_spd("R", &r)?,
        b,
        q,
    })
}

fn dense_l(sys: &SaddleSystem) -> Mat {
    let (n, steps) = (sys.n(), sys.steps());
    let mut l = Mat::identity(n * steps, n * steps);
    for k in 1..steps {
        l.view_mut((k * n, (k - 1) * n), (n, n)).copy_from(&-sys.m(k));
    }
    l
}

fn block_diag(blocks: impl Iterator<Item = Mat>) -> Mat {
    let blocks: Vec<Mat> = blocks.collect();
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in &blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

fn dense_d(sys: &SaddleSystem) -> Mat {
    block_diag((0..sys.steps()).map(|k| sys.d(k).clone()))
}

fn dense_r(sys: &SaddleSystem) -> Mat {
    block_diag((0..sys.steps()).map(|k| sys.r(k).clone()))
}

fn dense_h(sys: &SaddleSystem) -> Mat {
    block_diag((0..sys.steps()).map(|k| sys.h(k).clone()))
}

fn invert(m: &Mat, what: &'static str) -> Result<Mat> {
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Dense `-L^T D^{-1} L - H^T R^{-1} H`.
fn dense_schur(sys: &SaddleSystem) -> Result<Mat> {
    let l = dense_l(sys);
    let h = dense_h(sys);
    let d_inv = invert(&dense_d(sys), "covariance D")?;
    let r_inv = invert(&dense_r(sys), "covariance R")?;
    Ok(-(l.transpose() * d_inv * &l) - h.transpose() * r_inv * h)
}

impl Preconditioner {
    pub fn new(spec: PreconditionerSpec, sys: &SaddleSystem) -> Result<Self> {
        let mut pre = Self {
            spec,
            n: sys.n(),
            p: sys.p(),
            steps: sys.steps(),
            cov: None,
            linv: None,
            m_forward: None,
            h: None,
            ih: None,
            schur: None,
        };
        let schur_op = |s: SchurApprox| -> Result<SchurOp> {
            Ok(match s {
                SchurApprox::Neumann { m_tilde, terms } => SchurOp::Neumann(Neumann {
                    m: resolve_model(&spec, m_tilde, sys)?,
                    terms,
                }),
                SchurApprox::Sylvester { m_tilde } => {
                    SchurOp::Sylvester(resolve_model(&spec, m_tilde, sys)?)
                }
                SchurApprox::ExactDense => {
                    let dim = sys.n() * sys.steps();
                    if dim > ASSEMBLE_LIMIT {
                        return Err(Error::SizeGuard {
                            what: "dense Schur complement",
                            size: dim,
                            limit: ASSEMBLE_LIMIT,
                        });
                    }
                    SchurOp::Dense(invert(&dense_schur(sys)?, "Schur complement")?)
                }
            })
        };

        match spec {
            PreconditionerSpec::Identity => {}
            PreconditionerSpec::InexactConstraint { m_tilde, terms } => {
                pre.cov = Some(covariances(&spec, sys)?);
                pre.linv = Some(Neumann {
                    m: resolve_model(&spec, m_tilde, sys)?,
                    terms,
                });
            }
            PreconditionerSpec::InexactConstraintIH => {
                let h = invariant_h(&spec, sys)?;
                let cov = covariances(&spec, sys)?;
                let r = sys.r(0);
                let fb = check_spd("HBH^T + R", &(&h * &cov.b * h.transpose() + r))?;
                let fq = check_spd("HQH^T + R", &(&h * &cov.q * h.transpose() + r))?;
                pre.ih = Some((fb, fq));
                pre.h = Some(h);
                pre.cov = Some(cov);
            }
            PreconditionerSpec::SchurDiag { schur } => {
                pre.cov = Some(covariances(&spec, sys)?);
                pre.schur = Some(schur_op(schur)?);
            }
            PreconditionerSpec::BlockTriangular {
                m_tilde,
                h_exact,
                schur,
            } => {
                pre.cov = Some(covariances(&spec, sys)?);
                pre.m_forward = resolve_model(&spec, m_tilde, sys)?;
                if h_exact {
                    pre.h = Some(invariant_h(&spec, sys)?);
                }
                pre.schur = Some(schur_op(schur)?);
            }
        }
        Ok(pre)
    }

    pub fn spec(&self) -> &PreconditionerSpec {
        &self.spec
    }

    fn cov(&self) -> &Covariances {
        self.cov.as_ref().expect("covariances cached for this variant")
    }

    /// Applies the preconditioner inverse; every output block is truncated.
    pub fn apply(&self, v: &TripleBlock, policy: &TruncationPolicy) -> Result<TripleBlock> {
        if v.dims() != (self.n, self.p, self.steps) {
            return Err(Error::DimensionMismatch {
                axis: "preconditioner operand length",
                expected: (2 * self.n + self.p) * self.steps,
                found: v.vec_len(),
            });
        }
        let (f, g, h) = (&v.lam, &v.mu, &v.x);
        let out = match self.spec {
            PreconditionerSpec::Identity => return Ok(v.clone()),
            PreconditionerSpec::InexactConstraint { .. } => {
                let t = self.linv.as_ref().expect("Neumann operator cached");
                let cov = self.cov();
                let lam = t.apply(h, true, policy).truncate(policy);
                let inner = f.concat(&cov.d(&lam).scale(-1.0))?.truncate(policy);
                let x = t.apply(&inner, false, policy);
                TripleBlock {
                    lam,
                    mu: cov.r_inv(g),
                    x,
                }
            }
            PreconditionerSpec::InexactConstraintIH => self.apply_ih(f, g, h, policy)?,
            PreconditionerSpec::SchurDiag { .. } => {
                let cov = self.cov();
                TripleBlock {
                    lam: cov.d_inv(f),
                    mu: cov.r_inv(g),
                    x: self.schur_inv(h, policy)?,
                }
            }
            PreconditionerSpec::BlockTriangular { .. } => {
                let cov = self.cov();
                let z = self.schur_inv(h, policy)?.truncate(policy);
                // L~ z = z + M~ Z C^T.
                let lz = match &self.m_forward {
                    Some(m) => cat(vec![
                        (z.left().clone(), z.right().clone()),
                        (m * z.left(), structure::shift(z.right())),
                    ]),
                    None => z.clone(),
                };
                let mu = match &self.h {
                    Some(hm) => {
                        let hz = z.premul(hm)?;
                        cov.r_inv(&g.concat(&hz.scale(-1.0))?)
                    }
                    None => cov.r_inv(g),
                };
                let lam = cov.d_inv(&f.concat(&lz.scale(-1.0))?);
                TripleBlock { lam, mu, x: z }
            }
        };
        Ok(out.truncate(policy))
    }

    /// `[D 0 I; 0 R H; I H^T 0]^{-1}` by block elimination:
    /// `a = H f - g - H D h`, `lam = h + H^T F a`, `mu = -F a`, `x = f - D lam`.
    fn apply_ih(
        &self,
        f: &LowRankFactor,
        g: &LowRankFactor,
        h: &LowRankFactor,
        policy: &TruncationPolicy,
    ) -> Result<TripleBlock> {
        let cov = self.cov();
        let hm = self.h.as_ref().expect("H cached");
        let (fb, fq) = self.ih.as_ref().expect("F factors cached");
        let dh = cov.d(h);
        let a = cat(vec![
            (hm * f.left(), f.right().clone()),
            (-g.left(), g.right().clone()),
            (-(hm * dh.left()), dh.right().clone()),
        ])
        .truncate(policy);
        let fa = cat(vec![
            (fb.solve(a.left()), structure::e1(a.right())),
            (fq.solve(a.left()), structure::e2(a.right())),
        ]);
        let lam = h.concat(&fa.premul(&hm.transpose())?)?.truncate(policy);
        let x = f.concat(&cov.d(&lam).scale(-1.0))?;
        Ok(TripleBlock {
            lam,
            mu: fa.scale(-1.0),
            x,
        })
    }

    /// `S~^{-1} h`.
    fn schur_inv(&self, h: &LowRankFactor, policy: &TruncationPolicy) -> Result<LowRankFactor> {
        let cov = self.cov();
        match self.schur.as_ref().expect("Schur operator cached") {
            SchurOp::Neumann(t) => {
                let th = t.apply(h, true, policy).truncate(policy);
                Ok(t.apply(&cov.d(&th), false, policy).scale(-1.0))
            }
            SchurOp::Sylvester(m) => {
                let hd = h.to_dense()?;
                let y = sylvester_backward(m.as_ref(), &hd);
                let mut g = Mat::zeros(hd.nrows(), hd.ncols());
                for j in 0..g.ncols() {
                    let cov_j = if j == 0 { &cov.b } else { &cov.q };
                    g.set_column(j, &(cov_j * y.column(j)));
                }
                let z = sylvester_forward(m.as_ref(), &g);
                Ok(LowRankFactor::from_dense(&(-z), policy))
            }
            SchurOp::Dense(s_inv) => {
                let hd = h.to_dense()?;
                let out = s_inv * Vector::from_column_slice(hd.as_slice());
                let out = Mat::from_column_slice(hd.nrows(), hd.ncols(), out.as_slice());
                Ok(LowRankFactor::from_dense(&out, policy))
            }
        }
    }

    /// The matrix whose exact inverse [`Preconditioner::apply`] computes.
    pub fn dense_forward(&self, sys: &SaddleSystem) -> Result<Mat> {
        let dim = sys.dim();
        if dim > ASSEMBLE_LIMIT {
            return Err(Error::SizeGuard {
                what: "dense preconditioner",
                size: dim,
                limit: ASSEMBLE_LIMIT,
            });
        }
        let (n, p, steps) = (self.n, self.p, self.steps);
        let (ns, ps) = (n * steps, p * steps);
        let mut out = Mat::zeros(dim, dim);
        let put = |out: &mut Mat, r: usize, c: usize, m: &Mat| {
            out.view_mut((r, c), m.shape()).copy_from(m);
        };
        let d = dense_d(sys);
        let r = dense_r(sys);
        let x0 = ns + ps;
        match self.spec {
            PreconditionerSpec::Identity => return Ok(Mat::identity(dim, dim)),
            PreconditionerSpec::InexactConstraint { .. } => {
                let t = self.linv.as_ref().expect("Neumann operator cached");
                let l_eff = invert(&t.dense(n, steps), "truncated Neumann sum")?;
                put(&mut out, 0, 0, &d);
                put(&mut out, ns, ns, &r);
                put(&mut out, 0, x0, &l_eff);
                put(&mut out, x0, 0, &l_eff.transpose());
            }
            PreconditionerSpec::InexactConstraintIH => {
                let h = dense_h(sys);
                let id = Mat::identity(ns, ns);
                put(&mut out, 0, 0, &d);
                put(&mut out, ns, ns, &r);
                put(&mut out, 0, x0, &id);
                put(&mut out, x0, 0, &id);
                put(&mut out, ns, x0, &h);
                put(&mut out, x0, ns, &h.transpose());
            }
            PreconditionerSpec::SchurDiag { .. } => {
                put(&mut out, 0, 0, &d);
                put(&mut out, ns, ns, &r);
                put(&mut out, x0, x0, &self.dense_schur_forward(sys, &d)?);
            }
            PreconditionerSpec::BlockTriangular { .. } => {
                let l = self.dense_l_forward(n, steps);
                put(&mut out, 0, 0, &d);
                put(&mut out, ns, ns, &r);
                put(&mut out, 0, x0, &l);
                if self.h.is_some() {
                    put(&mut out, ns, x0, &dense_h(sys));
                }
                put(&mut out, x0, x0, &self.dense_schur_forward(sys, &d)?);
            }
        }
        Ok(out)
    }

    fn dense_l_forward(&self, n: usize, steps: usize) -> Mat {
        let id = Mat::identity(n * steps, n * steps);
        match &self.m_forward {
            Some(m) => id + structure::shift_matrix(steps).kronecker(m),
            None => id,
        }
    }

    fn dense_schur_forward(&self, sys: &SaddleSystem, d: &Mat) -> Result<Mat> {
        let (n, steps) = (self.n, self.steps);
        let d_inv = invert(d, "covariance D")?;
        Ok(match self.schur.as_ref().expect("Schur operator cached") {
            SchurOp::Neumann(t) => {
                let l_eff = invert(&t.dense(n, steps), "truncated Neumann sum")?;
                -(l_eff.transpose() * d_inv * l_eff)
            }
            SchurOp::Sylvester(m) => {
                let l = match m {
                    Some(m) => {
                        Mat::identity(n * steps, n * steps)
                            + structure::shift_matrix(steps).kronecker(m)
                    }
                    None => Mat::identity(n * steps, n * steps),
                };
                -(l.transpose() * d_inv * l)
            }
            SchurOp::Dense(_) => dense_schur(sys)?,
        })
    }

    /// Dense matrix of [`Preconditioner::apply`] without truncation, column by column.
    pub fn dense_inverse(&self) -> Result<Mat> {
        let (n, p, steps) = (self.n, self.p, self.steps);
        let dim = (2 * n + p) * steps;
        if dim > ASSEMBLE_LIMIT {
            return Err(Error::SizeGuard {
                what: "dense preconditioner inverse",
                size: dim,
                limit: ASSEMBLE_LIMIT,
            });
        }
        let lossless = TruncationPolicy::lossless();
        let mut out = Mat::zeros(dim, dim);
        for j in 0..dim {
            let mut e = Vector::zeros(dim);
            e[j] = 1.0;
            let v = TripleBlock::from_vec(&e, n, p, steps, &lossless)?;
            out.set_column(j, &self.apply(&v, &lossless)?.to_vec()?);
        }
        Ok(out)
    }
}

/// Applies `spec` to `v` on `sys` without truncation.
pub fn apply_preconditioner(
    spec: PreconditionerSpec,
    sys: &SaddleSystem,
    v: &TripleBlock,
) -> Result<TripleBlock> {
    Preconditioner::new(spec, sys)?.apply(v, &TruncationPolicy::lossless())
}

/// Solves `Y + M^T Y C = G` with `C` the negative down-shift.
///
/// Column `j` of `Y C` is `-Y_{j+1}`, so the equation is already triangular:
/// `Y_N = G_N` and `Y_j = G_j + M^T Y_{j+1}`.
pub fn sylvester_backward(m: Option<&Mat>, g: &Mat) -> Mat {
    let mut y = g.clone();
    if let Some(m) = m {
        for j in (0..g.ncols().saturating_sub(1)).rev() {
            let next = m.tr_mul(&y.column(j + 1));
            let mut col = y.column_mut(j);
            col += next;
        }
    }
    y
}

/// Solves `Z + M Z C^T = G`: `Z_0 = G_0` and `Z_j = G_j + M Z_{j-1}`.
pub fn sylvester_forward(m: Option<&Mat>, g: &Mat) -> Mat {
    let mut z = g.clone();
    if let Some(m) = m {
        for j in 1..g.ncols() {
            let prev = m * z.column(j - 1);
            let mut col = z.column_mut(j);
            col += prev;
        }
    }
    z
}

/// Eigenvalues of the preconditioned saddle matrix and the perturbation bound.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalues within `1e-10` of one.
    pub count_near_one: usize,
    pub max_dist_from_one: f64,
    /// `||[L^T, H^T] - [L~^T, H~^T]|| / sigma_min([L~^T, H~^T])`; infinite for
    /// variants without a constraint block.
    pub bound: f64,
    /// `sqrt(lambda_max(H L^{-1} D L^{-T} H^T) / lambda_min(R))` when `L~ = L` and `H~ = 0`.
    pub imag_bound: Option<f64>,
}

impl SpectrumReport {
    pub fn max_real_deviation(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| (z.re - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Number of groups when eigenvalues closer than `tol` are merged.
    pub fn distinct_values(&self, tol: f64) -> usize {
        let mut reps: Vec<Complex<f64>> = Vec::new();
        for z in &self.eigenvalues {
            if !reps.iter().any(|r| (r - z).norm() <= tol) {
                reps.push(*z);
            }
        }
        reps.len()
    }
}

/// Eigenvalues of a real square matrix, through LAPACK `geev`.
///
/// nalgebra's Schur iteration stalls on preconditioned saddle matrices whose
/// eigenvalues all share one real part, so the dense solve goes to LAPACK.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex<f64>>> {
    use ndarray_linalg::EigVals;
    let a = ndarray::Array2::from_shape_fn(m.shape(), |(i, j)| m[(i, j)]);
    let w = a
        .eigvals()
        .map_err(|_| Error::Singular("eigenvalue iteration did not converge"))?;
    Ok(w.iter().map(|z| Complex::new(z.re, z.im)).collect())
}

fn spectral_norm(m: &Mat) -> f64 {
    thin_svd(m).s.first().copied().unwrap_or(0.0)
}

pub fn spectrum_report(spec: PreconditionerSpec, sys: &SaddleSystem) -> Result<SpectrumReport> {
    let dim = sys.dim();
    if dim > SPECTRUM_LIMIT {
        return Err(Error::SizeGuard {
            what: "spectrum_report",
            size: dim,
            limit: SPECTRUM_LIMIT,
        });
    }
    let pre = Preconditioner::new(spec, sys)?;
    let a = assemble_dense(sys)?;
    let p = pre.dense_forward(sys)?;
    let pa = p.lu().solve(&a).ok_or(Error::Singular("preconditioner"))?;
    let eigenvalues = eigenvalues(&pa)?;
    let one = Complex::new(1.0, 0.0);
    let count_near_one = eigenvalues.iter().filter(|z| (*z - one).norm() <= 1e-10).count();
    let max_dist_from_one = eigenvalues
        .iter()
        .map(|z| (z - one).norm())
        .fold(0.0, f64::max);

    let (n, steps) = (sys.n(), sys.steps());
    let ns = n * steps;
    let constraint = |l: &Mat, h: &Mat| {
        let mut m = Mat::zeros(ns, l.nrows() + h.nrows());
        m.view_mut((0, 0), (ns, l.nrows())).copy_from(&l.transpose());
        m.view_mut((0, l.nrows()), (ns, h.nrows())).copy_from(&h.transpose());
        m
    };
    let approx = match spec {
        PreconditionerSpec::InexactConstraint { .. } => {
            let t = pre.linv.as_ref().expect("Neumann operator cached");
            Some((invert(&t.dense(n, steps), "truncated Neumann sum")?, false))
        }
        PreconditionerSpec::InexactConstraintIH => Some((Mat::identity(ns, ns), true)),
        PreconditionerSpec::BlockTriangular { h_exact, .. } => {
            Some((pre.dense_l_forward(n, steps), h_exact))
        }
        _ => None,
    };
    let l = dense_l(sys);
    let h = dense_h(sys);
    let bound = match &approx {
        Some((l_t, h_exact)) => {
            let h_t = if *h_exact {
                h.clone()
            } else {
                Mat::zeros(h.nrows(), h.ncols())
            };
            let exact = constraint(&l, &h);
            let approx = constraint(l_t, &h_t);
            let smin = thin_svd(&approx).s.last().copied().unwrap_or(0.0);
            spectral_norm(&(exact - &approx)) / smin
        }
        None => f64::INFINITY,
    };

    let imag_bound = match (&approx, spec) {
        (
            Some((_, false)),
            PreconditionerSpec::InexactConstraint {
                m_tilde: ModelApprox::Exact,
                terms: NeumannTerms::Exact,
            },
        ) => {
            let l_inv = invert(&l, "L")?;
            let g = &h * &l_inv * dense_d(sys) * l_inv.transpose() * h.transpose();
            let g = (&g + g.transpose()) * 0.5;
            let top = g.symmetric_eigen().eigenvalues.max();
            let rmin = dense_r(sys).symmetric_eigen().eigenvalues.min();
            Some((top.max(0.0) / rmin).sqrt())
        }
        _ => None,
    };

    Ok(SpectrumReport {
        eigenvalues,
        count_near_one,
        max_dist_from_one,
        bound,
        imag_bound,
    })
}
