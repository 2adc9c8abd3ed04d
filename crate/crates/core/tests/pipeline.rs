mod common;

use hfo_core::pipeline::{train_full, train_holdout, ModelKind};
use hfo_core::simgen::{gen_dataset, GenSpec, Profile, Sampling};

fn clean_dataset(per_class: usize, seed: u64) -> hfo_core::simgen::LabeledDataset {
    gen_dataset(&GenSpec::new(Profile::Sim1, per_class, seed)).unwrap()
}

#[test]
fn every_kind_memorizes_a_small_clean_set() {
    let ds = clean_dataset(3, 21);
    for kind in [ModelKind::Svm, ModelKind::Cnn, ModelKind::Hybrid] {
        let mut cfg = common::tiny_config(kind, 2);
        cfg.svm.c = 100.0;
        let fitted = train_full(&ds, &cfg).unwrap();
        let report = fitted.model.evaluate(&ds).unwrap();
        assert_eq!(report.overall_accuracy, 1.0, "{kind}");
        for seg in &ds.segments {
            let p = fitted.model.predict(seg).unwrap();
            assert_eq!(fitted.model.class_names[p.class], seg.label, "{kind}");
        }
        if kind != ModelKind::Svm {
            assert_eq!(fitted.history.len(), cfg.hyper.epochs);
        }
    }
}

#[test]
fn holdout_training_is_reproducible() {
    let mut spec = GenSpec::new(Profile::Sim2, 8, 4);
    spec.ranges.snr_db = Some(Sampling::fixed(10.0));
    let ds = gen_dataset(&spec).unwrap();
    let mut cfg = common::tiny_config(ModelKind::Hybrid, 13);
    cfg.hyper.epochs = 4;
    let a = train_holdout(&ds, &cfg, 0.5).unwrap();
    let b = train_holdout(&ds, &cfg, 0.5).unwrap();
    assert_eq!(a.split, b.split);
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.report.roc_csv(), b.report.roc_csv());
    assert_eq!(a.report.cm.total() as usize, a.split.test.len());
}

#[test]
fn holdout_needs_every_class_on_both_sides() {
    let ds = clean_dataset(1, 3);
    let cfg = common::tiny_config(ModelKind::Svm, 0);
    assert!(train_holdout(&ds, &cfg, 0.5).is_err());
}

#[test]
fn mismatched_architecture_is_rejected() {
    let ds = clean_dataset(2, 3);
    let mut cfg = common::tiny_config(ModelKind::Cnn, 0);
    cfg.scalogram.size = 20;
    assert!(train_full(&ds, &cfg).is_err());
}
