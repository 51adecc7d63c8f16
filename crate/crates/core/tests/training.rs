//! Training loop: early stopping, checkpoint selection and reproducibility.

use hmbitcn::data::{generate_synthetic, Dataset, SyntheticSpec};
use hmbitcn::model::HmBiTcnConfig;
use hmbitcn::train::{evaluate, run_multi_seed_on, split, train, SplitSpec, TrainConfig};
use hmbitcn::Error;

fn small() -> (Dataset, HmBiTcnConfig) {
    let ds = generate_synthetic(&SyntheticSpec {
        subjects_per_class: 4,
        samples_per_subject: 4,
        length: 16,
        seed: 11,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let mut cfg = HmBiTcnConfig::desk_default(4, 2);
    cfg.channel_widths = vec![4, 4];
    cfg.dilation_schedule = vec![2, 1];
    (ds, cfg)
}

fn tcfg(lr: f64, max_epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        max_epochs,
        patience,
        batch_size: 8,
        seeds: vec![41, 42],
        ..TrainConfig::default()
    }
}

#[test]
fn early_stopping_halts_within_patience_of_best() {
    let (ds, cfg) = small();
    let even: Vec<usize> = (0..ds.len()).step_by(2).collect();
    let odd: Vec<usize> = (1..ds.len()).step_by(2).collect();
    let (tr, va) = (ds.subset(&even), ds.subset(&odd));
    for patience in [1, 2, 4] {
        for seed in [41, 42, 43] {
            let out = train(&cfg, &tr, &va, &tcfg(3e-2, 40, patience), seed).unwrap();
            let run = out.history.len();
            assert!(run <= out.best_epoch + patience, "ran {run} epochs, best {}", out.best_epoch);
            if run < 40 {
                assert_eq!(run, out.best_epoch + patience);
            }
            let best = out.history.iter().map(|h| h.val_f1).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(out.best_val_f1, best);
            let first_best = out.history.iter().position(|h| h.val_f1 == best).unwrap() + 1;
            assert_eq!(out.best_epoch, first_best);
            assert_eq!(evaluate(&out.model, &va).unwrap().f1_macro, best);
        }
    }
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let (ds, cfg) = small();
    let spec = SplitSpec {
        mode: hmbitcn::train::SplitMode::SubjectDependent,
        ..SplitSpec::default()
    };
    let s = split(&ds, &spec).unwrap();
    let (tr, va) = (ds.subset(&s.train), ds.subset(&s.val));
    let a = train(&cfg, &tr, &va, &tcfg(1e-2, 15, 15), 41).unwrap();
    let b = train(&cfg, &tr, &va, &tcfg(1e-2, 15, 15), 41).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.parameters(), b.model.parameters());
    assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
}

#[test]
fn multi_seed_report_is_deterministic() {
    let (ds, cfg) = small();
    let spec = SplitSpec {
        mode: hmbitcn::train::SplitMode::SubjectDependent,
        ..SplitSpec::default()
    };
    let r1 = run_multi_seed_on(&ds, &cfg, &tcfg(1e-2, 3, 2), &spec).unwrap();
    let r2 = run_multi_seed_on(&ds, &cfg, &tcfg(1e-2, 3, 2), &spec).unwrap();
    assert_eq!(r1.report.summary(), r2.report.summary());
    assert_eq!(r1.runs.len(), 2);
}

#[test]
fn divergent_learning_rate_is_reported_not_swallowed() {
    let (ds, cfg) = small();
    match train(&cfg, &ds, &ds, &tcfg(1e300, 5, 5), 41) {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch")),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training at lr 1e300 must fail"),
    }
}
