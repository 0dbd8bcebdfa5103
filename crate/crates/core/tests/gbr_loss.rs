//! Boosting with squared loss never raises the training error.

use cyclone_core::gbr::GbrModel;
use cyclone_core::matrix::Matrix;
use cyclone_core::tree::TreeParams;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

pub fn check_monotone_loss(cases: u32) -> Result<(), String> {
    let data = (5usize..80, 1usize..5).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, d), n),
            proptest::collection::vec(-10.0f64..10.0, n),
        )
    });
    let strategy = (data, 1usize..40, 0.01f64..=1.0, proptest::option::of(1usize..6), 1usize..5);
    runner(cases)
        .run(&strategy, |((rows, y), stages, lr, max_depth, min_samples_leaf)| {
            let x = Matrix::from_rows(&rows).unwrap();
            let m = GbrModel::fit(&x, &y, stages, lr, &TreeParams { max_depth, min_samples_leaf }).unwrap();
            prop_assert_eq!(m.train_loss.len(), stages + 1);
            for (s, w) in m.train_loss.windows(2).enumerate() {
                prop_assert!(w[1] <= w[0], "stage {}: {} > {}", s + 1, w[1], w[0]);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

#[test]
fn stage_loss_is_non_increasing() {
    check_monotone_loss(300).unwrap();
}
