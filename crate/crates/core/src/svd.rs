//! One-sided Jacobi SVD for the small dense cores met during truncation.
//!
//! nalgebra's bidiagonal SVD returns visibly wrong factors for some
//! rank-deficient inputs (reconstruction errors around 1e-2 on a rank-one
//! 2 x 3 matrix), which would silently corrupt truncation. Jacobi rotations
//! are slower but reliably accurate, and the cores here are at most a few
//! hundred columns wide.

use crate::lowrank::Mat;

const MAX_SWEEPS: usize = 60;

/// `a = u diag(s) v^T` with `s` descending, `u: m x r`, `v: n x r`, `r = min(m, n)`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

pub fn thin_svd(a: &Mat) -> ThinSvd {
    let (m, n) = a.shape();
    if m < n {
        let t = thin_svd(&a.transpose());
        return ThinSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    let eps = f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut u = Mat::zeros(m, n);
    let mut vs = Mat::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        if sigma > 0.0 {
            u.set_column(dst, &(w.column(src) / sigma));
        }
        vs.set_column(dst, &v.column(src));
        s.push(sigma);
    }
    ThinSvd { u, s, v: vs }
}

fn rotate(m: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (a, b) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * a - s * b;
        m[(i, q)] = s * a + c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn recompose(t: &ThinSvd) -> Mat {
        let mut us = t.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= t.s[j];
        }
        us * t.v.transpose()
    }

    #[test]
    fn rank_one_wide_matrix_that_trips_bidiagonal_svd() {
        let a = Mat::from_column_slice(
            2,
            3,
            &[
                -0.019477385526814023,
                -0.045210651206102175,
                -0.10377113373763133,
                -0.24087219130180637,
                0.23279446903070003,
                0.5403594608510129,
            ],
        );
        let t = thin_svd(&a);
        assert!((recompose(&t) - &a).amax() <= 1e-15);
        let gram_top = (&a * a.transpose()).symmetric_eigen().eigenvalues.amax();
        assert!((t.s[0] - gram_top.sqrt()).abs() <= 1e-14);
        assert!(t.s[1] <= 1e-15);
    }

    #[test]
    fn random_shapes_are_orthonormal_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(m, n) in &[(5, 3), (3, 5), (8, 8), (1, 4), (6, 1)] {
            let a = Mat::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let t = thin_svd(&a);
            let r = m.min(n);
            assert_eq!((t.u.shape(), t.v.shape(), t.s.len()), ((m, r), (n, r), r));
            assert!((recompose(&t) - &a).amax() <= 1e-13);
            assert!((t.u.tr_mul(&t.u) - Mat::identity(r, r)).amax() <= 1e-13);
            assert!((t.v.tr_mul(&t.v) - Mat::identity(r, r)).amax() <= 1e-13);
            assert!(t.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn zero_matrix() {
        let t = thin_svd(&Mat::zeros(3, 2));
        assert_eq!(t.s, vec![0.0, 0.0]);
        assert!((t.v.tr_mul(&t.v) - Mat::identity(2, 2)).amax() <= 1e-15);
    }
}
