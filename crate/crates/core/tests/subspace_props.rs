use gradsub::matcore::{pseudoinverse, svd, Matrix, RankTolerance};
use gradsub::subspace::pss_trace;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols).prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

fn pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (2usize..8, 1usize..6, 1usize..6).prop_flat_map(|(m, a, b)| (matrix(m, a), matrix(m, b)))
}

proptest! {
    #[test]
    fn pss_is_symmetric_and_bounded((a, b) in pair()) {
        let tol = RankTolerance::default();
        match (pss_trace(&a, &b, tol), pss_trace(&b, &a, tol)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&x.value));
                prop_assert!((x.value - y.value).abs() < 1e-10);
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
    }

    #[test]
    fn scaling_a_matrix_leaves_pss_unchanged((a, b) in pair(), s in 1e-3f64..1e3) {
        let tol = RankTolerance::default();
        if let (Ok(x), Ok(y)) = (pss_trace(&a, &b, tol), pss_trace(&a.scale(s), &b, tol)) {
            prop_assert!((x.value - y.value).abs() < 1e-9);
        }
    }

    #[test]
    fn svd_reconstructs_and_pinv_is_a_generalized_inverse(a in (1usize..7, 1usize..7).prop_flat_map(|(m, n)| matrix(m, n))) {
        let f = svd(&a).unwrap();
        let scale = a.frobenius_norm().max(1.0);
        prop_assert!(f.reconstruct().sub(&a).unwrap().frobenius_norm() <= 1e-10 * scale);
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        let p = pseudoinverse(&a, RankTolerance::default()).unwrap();
        let r = a.matmul(&p).unwrap().matmul(&a).unwrap().sub(&a).unwrap().frobenius_norm();
        prop_assert!(r <= 1e-8 * scale);
    }
}
