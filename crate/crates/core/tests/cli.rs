//! Command-line behaviour: exit codes, outputs and ablation determinism.

use hmbitcn::cli::{default_experiment, run};
use hmbitcn::data::DataSource;
use hmbitcn::train::SubjectAssignment;
use std::path::Path;

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let mut exp = default_experiment();
    if let DataSource::Synthetic(s) = &mut exp.data {
        s.subjects_per_class = 3;
        s.samples_per_subject = 4;
        s.length = 16;
    }
    exp.model.channel_widths = vec![4, 4];
    exp.model.dilation_schedule = vec![2, 1];
    exp.train.max_epochs = 2;
    exp.train.patience = 1;
    exp.train.seeds = vec![41, 42];
    let ids = |s: usize| vec![format!("c0s{s}"), format!("c1s{s}")];
    exp.split.assignment = Some(SubjectAssignment {
        train: ids(0),
        val: ids(1),
        test: ids(2),
    });
    let path = dir.join("exp.json");
    std::fs::write(&path, exp.to_json()).unwrap();
    path
}

fn run_args(args: &[&str]) -> i32 {
    run(std::iter::once("hmbitcn").chain(args.iter().copied()))
}

#[test]
fn unknown_subcommand_and_bad_config_exit_nonzero() {
    assert_ne!(run_args(&["frobnicate"]), 0);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_ne!(run_args(&["train", "--config", bad.to_str().unwrap()]), 0);
}

#[test]
fn ablate_writes_six_rows_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (o1, o2) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&o1, &o2] {
        assert_eq!(run_args(&["ablate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    }
    let csv = std::fs::read_to_string(o1.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 8 && l.matches('±').count() == 6));
    for f in ["ablation.csv", "ablation_seeds.csv"] {
        assert_eq!(std::fs::read(o1.join(f)).unwrap(), std::fs::read(o2.join(f)).unwrap());
    }
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(run_args(&["train", "--config", c, "--seed", "41", "--out", o]), 0);
    let history = std::fs::read_to_string(out.join("history_seed41.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_f1\n"));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    let model = out.join("model_seed41.bin");
    let eval_out = dir.path().join("eval");
    assert_eq!(
        run_args(&["eval", "--config", c, "--model", model.to_str().unwrap(), "--out", eval_out.to_str().unwrap()]),
        0
    );
    let train_acc = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let eval_acc = std::fs::read_to_string(eval_out.join("eval.csv")).unwrap();
    let acc = |s: &str| s.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    assert_eq!(acc(&train_acc), acc(&eval_acc));
}

#[test]
fn gen_data_cif_apply_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("data");
    let f = dir.path().join("fused");
    assert_eq!(run_args(&["gen-data", "--seed", "3", "--out", d.to_str().unwrap()]), 0);
    assert_eq!(
        run_args(&["cif-apply", "--input", d.to_str().unwrap(), "--out", f.to_str().unwrap(), "--a", "1", "--b", "-1"]),
        0
    );
    assert!(f.join("manifest.json").exists());
    let s = dir.path().join("svd");
    assert_eq!(run_args(&["svd-report", "--n", "2", "--data", d.to_str().unwrap(), "--out", s.to_str().unwrap()]), 0);
    let v = dir.path().join("snr");
    assert_eq!(run_args(&["snr-verify", "--samples", "2000", "--out", v.to_str().unwrap()]), 0);
    let rows = std::fs::read_to_string(v.join("snr_verify.csv")).unwrap().lines().count();
    assert!(rows > 200);
}

#[test]
fn grid_cif_skips_invalid_widths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("grid");
    let code = run_args(&[
        "grid-cif", "--config", cfg.to_str().unwrap(), "--seed", "41", "--n", "1,2,3", "--a", "1", "--b", "-1,1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(out.join("grid_cif.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}
