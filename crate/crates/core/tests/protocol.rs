mod common;

use std::collections::BTreeSet;

use common::*;
use footformer::data::{loso_split, round_robin, Normalizer, RawRecording};
use footformer::eval::{run_loso_evaluation, EvalError, EvalOptions};
use footformer::pipeline::train_fold;

#[test]
fn round_robin_partitions_ten_subjects_without_leakage() {
    let ds = synth(10, 6);
    let folds = round_robin(&ds).unwrap();
    assert_eq!(folds.len(), 10);
    let mut tested = BTreeSet::new();
    for fold in &folds {
        let train: BTreeSet<usize> = fold.train.iter().copied().collect();
        let test: BTreeSet<usize> = fold.test.iter().copied().collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), ds.recordings.len());
        assert!(fold.test_recordings(&ds).iter().all(|r| r.subject_id == fold.held_out));
        assert!(fold.train_recordings(&ds).iter().all(|r| r.subject_id != fold.held_out));
        for &i in &test {
            assert!(tested.insert(i), "recording {i} tested twice");
        }
        assert_eq!(fold.normalizer, Normalizer::fit(&fold.train_recordings(&ds)).unwrap());
    }
    assert_eq!(tested.len(), ds.recordings.len());
}

#[test]
fn held_out_data_cannot_move_the_statistics() {
    let ds = synth(4, 8);
    let before = loso_split(&ds, "s02").unwrap();
    let mut changed = ds.clone();
    for r in changed.recordings.iter_mut().filter(|r| r.subject_id == "s02") {
        *r = RawRecording {
            poses: r.poses.map(|v| v * 50.0 + 1e4),
            com: r.com.as_ref().map(|c| c.map(|v| v - 3e3)),
            ..r.clone()
        };
    }
    let after = loso_split(&changed, "s02").unwrap();
    assert_eq!(before.normalizer, after.normalizer);
    let all: Vec<&RawRecording> = changed.recordings.iter().collect();
    assert_ne!(Normalizer::fit(&all).unwrap(), after.normalizer);
}

#[test]
fn loso_evaluation_needs_every_fold() {
    let ds = synth(3, 8);
    let mut cfg = small_config();
    cfg.train.epochs = 2;
    let mut folds = Vec::new();
    for s in ds.subjects() {
        cfg.held_out = Some(s);
        folds.push(train_fold(&ds, &cfg, |_| {}).unwrap().fold_model());
    }
    let opts = EvalOptions::default();
    let report = run_loso_evaluation(&ds, &folds, &opts).unwrap();
    assert_eq!(report.methods.len(), 1);
    let subjects: Vec<&str> = report.methods[0].subjects.iter().map(|s| s.subject.as_str()).collect();
    assert_eq!(subjects, ["s00", "s01", "s02"]);
    assert!(report.methods[0].subjects.iter().all(|s| s.frames == 8));
    folds.pop();
    assert!(matches!(
        run_loso_evaluation(&ds, &folds, &opts),
        Err(EvalError::MissingFold { .. })
    ));
}
