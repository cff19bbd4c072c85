use nalgebra::DMatrix;
use proptest::prelude::*;
use stsbl::eval::nmse;
use stsbl::sensing::{compress, make_dct_dictionary, make_measurement_matrix};
use stsbl::solver::PartitionSpec;
use stsbl::{recover, Hyperparameters, MultichannelFrame, RecoveryConfig, SparseBinaryMatrix};

fn frame(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matrices_are_full_rank_with_two_ones(n in 3usize..40, extra in 0usize..40, seed in 0u64..1000) {
        let m = n + extra;
        let phi = make_measurement_matrix(n, m, seed).unwrap();
        prop_assert_eq!(phi.rank(), n);
        let dense = phi.to_dense();
        prop_assert!(dense.column_iter().all(|c| c.sum() == 2.0));
        prop_assert_eq!(SparseBinaryMatrix::from_csv(&phi.to_csv()).unwrap(), phi);
    }

    #[test]
    fn compression_is_linear(x in frame(12, 3), z in frame(12, 3), a in -3.0f64..3.0, seed in 0u64..100) {
        let phi = make_measurement_matrix(6, 12, seed).unwrap();
        let combo = MultichannelFrame::new(&x * a + &z).unwrap();
        let lhs = compress(&combo, &phi).unwrap().data;
        let rhs = phi.apply(&x).unwrap() * a + phi.apply(&z).unwrap();
        prop_assert!((lhs - rhs).abs().max() < 1e-9);
    }

    #[test]
    fn dictionary_round_trip(x in frame(20, 2)) {
        let d = make_dct_dictionary(20).unwrap();
        prop_assert!((d.synthesize(&d.analyze(&x)) - &x).abs().max() < 1e-10);
    }

    #[test]
    fn recovered_state_satisfies_invariants(y in frame(8, 3), seed in 0u64..50) {
        let phi = make_measurement_matrix(8, 16, seed).unwrap();
        let config = RecoveryConfig {
            partition: PartitionSpec::Uniform(4),
            max_iters: 5,
            ..RecoveryConfig::default()
        };
        let res = recover(&y, &phi, None, &config).unwrap();
        prop_assert!((res.hyper.b.norm() - 1.0).abs() < 1e-12);
        prop_assert!(res.hyper.gamma.iter().all(|&g| g >= 0.0));
        prop_assert!(res.hyper.a_blocks.iter().all(|a| (a.norm() - 1.0).abs() < 1e-12));
        let back = Hyperparameters::from_json(&res.hyper.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, res.hyper);
    }

    #[test]
    fn nmse_is_scale_free(x in frame(5, 2), s in 0.1f64..10.0) {
        prop_assume!(x.norm() > 1e-3);
        let noisy = x.map(|v| v + 0.1);
        let a = nmse(&noisy, &x).unwrap();
        let b = nmse(&(noisy * s), &(&x * s)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}
