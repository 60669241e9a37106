mod common;

use common::*;
use lrvar::assimilation::{rmse, storage_report};
use lrvar::lowrank::block_norm;
use lrvar::models::ObservationOperator;
use lrvar::svd::thin_svd;
use lrvar::{
    amult, solve, trace_product, GmresConfig, LowRankFactor, Mat, SaddleSystem, TripleBlock,
    TruncationPolicy,
};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..7, 1usize..5, 2usize..8)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn concat_is_addition((seed, n, p, steps) in dims(), ka in 1usize..4, kb in 1usize..4) {
        let mut r = rng(seed);
        let a = rand_triple(&mut r, n, p, steps, ka);
        let b = rand_triple(&mut r, n, p, steps, kb);
        let sum = a.concat(&b).unwrap().to_vec().unwrap();
        let expect = a.to_vec().unwrap() + b.to_vec().unwrap();
        prop_assert!((sum - &expect).norm() <= 1e-12 * (1.0 + expect.norm()));
        prop_assert_eq!(a.concat(&b).unwrap().ranks(), [ka + kb; 3]);
    }

    #[test]
    fn scale_is_linear((seed, n, p, steps) in dims(), s in -3.0f64..3.0) {
        let mut r = rng(seed);
        let a = rand_triple(&mut r, n, p, steps, 2);
        let v = a.to_vec().unwrap();
        prop_assert!((a.scale(s).to_vec().unwrap() - &v * s).norm() <= 1e-12 * (1.0 + v.norm()));
    }

    #[test]
    fn truncation_error_is_the_dropped_tail(seed in any::<u64>(), rows in 2usize..9, cols in 2usize..9,
                                           k in 1usize..6, keep in 1usize..5) {
        let mut r = rng(seed);
        let f = rand_factor(&mut r, rows, cols, k);
        let dense = f.to_dense().unwrap();
        let t = f.truncate(&TruncationPolicy::new(Some(keep), 0.0).unwrap());
        prop_assert!(t.rank() <= keep);
        let s = thin_svd(&dense).s;
        let tail: f64 = s.iter().skip(keep).map(|x| x * x).sum::<f64>().sqrt();
        let err = (t.to_dense().unwrap() - &dense).norm();
        prop_assert!(close(err, tail, 1e-8), "error {} tail {}", err, tail);
    }

    #[test]
    fn relative_tolerance_bounds_the_error(seed in any::<u64>(), k in 1usize..6, tol in 1e-6f64..0.5) {
        let mut r = rng(seed);
        let f = rand_factor(&mut r, 7, 9, k);
        let dense = f.to_dense().unwrap();
        let t = f.truncate(&TruncationPolicy::new(None, tol).unwrap());
        prop_assert!((t.to_dense().unwrap() - &dense).norm() <= tol * dense.norm() * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn lossless_round_trip(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
        let mut r = rng(seed);
        let m = rand_mat(&mut r, rows, cols);
        let f = LowRankFactor::from_dense(&m, &TruncationPolicy::lossless());
        prop_assert!(f.rank() <= rows.min(cols));
        prop_assert!((f.to_dense().unwrap() - &m).norm() <= 1e-12 * (1.0 + m.norm()));
    }

    #[test]
    fn trace_product_is_the_vector_dot((seed, n, p, steps) in dims(), ka in 1usize..4, kb in 1usize..4) {
        let mut r = rng(seed);
        let a = rand_triple(&mut r, n, p, steps, ka);
        let b = rand_triple(&mut r, n, p, steps, kb);
        let ab = trace_product(&a, &b).unwrap();
        let ba = trace_product(&b, &a).unwrap();
        let dot = a.to_vec().unwrap().dot(&b.to_vec().unwrap());
        prop_assert!(close(ab, ba, 1e-12));
        prop_assert!(close(ab, dot, 1e-10));
        prop_assert!(close(block_norm(&a).unwrap(), a.to_vec().unwrap().norm(), 1e-10));
    }

    #[test]
    fn amult_is_linear_and_matches_assembly((seed, n, p, steps) in dims(), s in -2.0f64..2.0) {
        let mut r = rng(seed);
        let sys = rand_invariant(&mut r, n, steps - 1, p);
        let a = rand_triple(&mut r, n, p, steps, 2);
        let b = rand_triple(&mut r, n, p, steps, 1);
        let combo = a.concat(&b.scale(s)).unwrap();
        let lhs = amult(&sys, &combo).unwrap().to_vec().unwrap();
        let rhs = amult(&sys, &a).unwrap().to_vec().unwrap() + amult(&sys, &b).unwrap().to_vec().unwrap() * s;
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        let dense = lrvar::assemble_dense(&SaddleSystem::TimeInvariant(sys)).unwrap();
        let direct = dense * combo.to_vec().unwrap();
        prop_assert!((lhs - &direct).norm() <= 1e-10 * (1.0 + direct.norm()));
    }

    #[test]
    fn observation_operator_is_a_selection(n in 1usize..40, stride in 1usize..6, offset in 0usize..6) {
        prop_assume!(offset < n);
        let h = ObservationOperator::new(n, stride, offset).unwrap();
        let m = h.matrix();
        prop_assert_eq!(m.nrows(), h.p());
        prop_assert_eq!(&m * m.transpose(), Mat::identity(h.p(), h.p()));
        prop_assert!(h.indices().windows(2).all(|w| w[1] == w[0] + stride));
    }

    #[test]
    fn rmse_is_a_symmetric_metric(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..6) {
        let mut r = rng(seed);
        let a = rand_mat(&mut r, rows, cols);
        let b = rand_mat(&mut r, rows, cols);
        let ab = rmse(&a, &b).unwrap();
        prop_assert_eq!(&ab, &rmse(&b, &a).unwrap());
        prop_assert!(ab.iter().all(|v| *v >= 0.0));
        prop_assert!(rmse(&a, &a).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn storage_formula(n in 1usize..500, window in 0usize..500, p in 1usize..50, rank in 1usize..40) {
        let s = storage_report(n, window, p, rank);
        prop_assert_eq!(s.full_elems, n * (window + 1));
        prop_assert_eq!(s.low_elems, rank * (n + window + 1));
        prop_assert!(close(s.reduction, 1.0 - s.low_elems as f64 / s.full_elems as f64, 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn untruncated_residuals_never_increase(seed in any::<u64>(), n in 2usize..5, p in 1usize..3, window in 1usize..4) {
        let mut r = rng(seed);
        let sys = SaddleSystem::TimeInvariant(rand_invariant(&mut r, n, window, p));
        let steps = window + 1;
        let rhs = rand_triple(&mut r, n, p, steps, 1);
        let cfg = GmresConfig::untruncated(sys.dim(), 1e-12).unwrap();
        let (_, report) = solve(
            |v| sys.apply(v),
            |v| Ok(v.clone()),
            &rhs,
            &TripleBlock::zeros(n, p, steps),
            &cfg,
        )
        .unwrap();
        let res = &report.residuals;
        prop_assert!(res.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10) + 1e-14), "{:?}", res);
    }
}
