#![allow(dead_code)]

use lrvar::assimilation::{linearise, rhs_dense};
use lrvar::experiment::ExperimentConfig;
use lrvar::{LowRankFactor, Mat, SaddleSystem, TimeInvariantSystem, TimeVaryingSystem, TripleBlock, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rand_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let a = rand_mat(rng, n, n);
    &a * a.transpose() + Mat::identity(n, n) * 0.5
}

pub fn rand_invariant(rng: &mut ChaCha8Rng, n: usize, window: usize, p: usize) -> TimeInvariantSystem {
    TimeInvariantSystem::new(
        window,
        rand_spd(rng, n),
        rand_spd(rng, n),
        rand_spd(rng, p),
        rand_mat(rng, n, n),
        rand_mat(rng, p, n),
    )
    .unwrap()
}

pub fn rand_varying(rng: &mut ChaCha8Rng, n: usize, window: usize, p: usize) -> TimeVaryingSystem {
    TimeVaryingSystem::new(
        rand_spd(rng, n),
        (0..window).map(|_| rand_spd(rng, n)).collect(),
        (0..=window).map(|_| rand_spd(rng, p)).collect(),
        (0..window).map(|_| rand_mat(rng, n, n)).collect(),
        (0..=window).map(|_| rand_mat(rng, p, n)).collect(),
    )
    .unwrap()
}

pub fn rand_factor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, k: usize) -> LowRankFactor {
    LowRankFactor::new(rand_mat(rng, rows, k), rand_mat(rng, cols, k)).unwrap()
}

pub fn rand_triple(rng: &mut ChaCha8Rng, n: usize, p: usize, steps: usize, k: usize) -> TripleBlock {
    TripleBlock::new(
        rand_factor(rng, n, steps, k),
        rand_factor(rng, p, steps, k),
        rand_factor(rng, n, steps, k),
    )
    .unwrap()
}

pub fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Textbook dense GMRES from a zero guess: modified Gram-Schmidt Arnoldi,
/// then the small least-squares problem solved afresh by QR at every step.
/// Returns `||b - A x_k||` for `k = 0..=iters` and the last iterate.
pub fn dense_gmres(a: &Mat, b: &Vector, iters: usize) -> (Vec<f64>, Vector) {
    let beta = b.norm();
    let mut basis = vec![b / beta];
    let mut h = Mat::zeros(iters + 1, iters);
    let mut history = vec![beta];
    let mut x = Vector::zeros(b.len());
    for k in 0..iters {
        let mut w = a * &basis[k];
        for (i, v) in basis.iter().enumerate() {
            h[(i, k)] = w.dot(v);
            w -= v * h[(i, k)];
        }
        h[(k + 1, k)] = w.norm();
        let hk = h.view((0, 0), (k + 2, k + 1)).into_owned();
        let mut e1 = Vector::zeros(k + 2);
        e1[0] = beta;
        let qr = hk.clone().qr();
        let y = qr
            .r()
            .solve_upper_triangular(&(qr.q().transpose() * &e1))
            .unwrap();
        x = Vector::zeros(b.len());
        for (i, yi) in y.iter().enumerate() {
            x += &basis[i] * *yi;
        }
        history.push((b - a * &x).norm());
        if h[(k + 1, k)] <= 1e-14 * beta {
            break;
        }
        basis.push(w / h[(k + 1, k)]);
    }
    (history, x)
}

/// The small advection-diffusion saddle system with its data right-hand side,
/// linearised about the first guess.
pub fn compare_system(preset: &str) -> (SaddleSystem, Mat, Mat) {
    let cfg = ExperimentConfig::preset(preset).unwrap();
    let pb = cfg.build_problem().unwrap();
    let traj = pb.first_guess().unwrap();
    let (b, d) = rhs_dense(&pb, &traj).unwrap();
    (linearise(&pb, &traj).unwrap(), b, d)
}

/// `[vec(b); vec(d); 0]`.
pub fn stacked_rhs(b: &Mat, d: &Mat) -> Vector {
    let mut v = Vector::zeros(2 * b.len() + d.len());
    v.rows_mut(0, b.len()).copy_from_slice(b.as_slice());
    v.rows_mut(b.len(), d.len()).copy_from_slice(d.as_slice());
    v
}
