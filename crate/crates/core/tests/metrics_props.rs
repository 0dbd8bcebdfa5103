//! Classification report invariants on random label vectors.

use cyclone_core::hurdat2::StatusCode;
use cyclone_core::labels::LabelSet;
use cyclone_core::metrics::{classification_report, ClassificationReport, ConfusionMatrix};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

fn labels(k: usize) -> LabelSet {
    LabelSet::new(StatusCode::KNOWN[..k].to_vec())
}

fn pairs() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (2usize..7).prop_flat_map(|k| {
        (1usize..80).prop_flat_map(move |n| {
            (Just(k), proptest::collection::vec(0..k, n), proptest::collection::vec(0..k, n))
        })
    })
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// The confusion-matrix path and the direct label path give equal reports.
pub fn check_two_path(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&pairs(), |(k, t, p)| {
            let set = labels(k);
            let cm = ConfusionMatrix::from_labels(&t, &p, &set).unwrap();
            let via_cm = ClassificationReport::from_confusion(&cm);
            let direct = ClassificationReport::from_labels(&t, &p, &set).unwrap();
            prop_assert_eq!(&via_cm, &direct);
            prop_assert_eq!(cm.total(), t.len());
            let (report, cm2) = classification_report(&t, &p, &set).unwrap();
            prop_assert_eq!(report, direct);
            prop_assert_eq!(cm2, cm);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Support-weighted recall equals accuracy, and per-class scores are bounded.
pub fn check_weighted_recall(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&pairs(), |(k, t, p)| {
            let r = ClassificationReport::from_labels(&t, &p, &labels(k)).unwrap();
            let acc = t.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
            prop_assert!((r.accuracy - acc).abs() < 1e-12);
            prop_assert!((r.weighted_avg.recall - acc).abs() < 1e-12);
            for c in &r.classes {
                prop_assert!((0.0..=1.0).contains(&c.precision) && (0.0..=1.0).contains(&c.recall));
                prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
                prop_assert!(c.support > 0 || c.predicted > 0);
            }
            let support: usize = r.classes.iter().map(|c| c.support).sum();
            prop_assert_eq!(support, t.len());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

#[test]
fn confusion_and_direct_paths_agree() {
    check_two_path(300).unwrap();
}

#[test]
fn weighted_recall_is_accuracy() {
    check_weighted_recall(300).unwrap();
}

proptest! {
    #[test]
    fn perfect_predictions_score_one((k, t, _p) in pairs()) {
        let r = ClassificationReport::from_labels(&t, &t, &labels(k)).unwrap();
        prop_assert_eq!(r.accuracy, 1.0);
        prop_assert!((r.macro_avg.f1 - 1.0).abs() < 1e-12);
        prop_assert!(r.classes.iter().all(|c| !c.precision_undefined && !c.recall_undefined));
    }
}
