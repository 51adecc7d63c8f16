//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use common::{
    auprc_table, auroc_trapezoid, cif_instance, cif_reference, confusion_oracle, macro_oracle, metric_instance,
};
use hmbitcn::cif::{apply_cif, apply_psf, CifConfig, CoefficientMode};
use hmbitcn::cli::{default_experiment, receptive_field_table, run};
use hmbitcn::data::{Dataset, Sample};
use hmbitcn::model::{
    receptive_field_closed_form, receptive_field_empirical, receptive_field_stacked, DirectionMode, HmBiTcn,
    HmBiTcnConfig,
};
use hmbitcn::rng::{seeded, Normal};
use hmbitcn::snr::{theoretical_gain, verify_grid, VERIFY_COEFFICIENTS, VERIFY_CORRELATIONS};
use hmbitcn::svd::{linear_identity_residual, shared_pattern_error, Matrix};
use hmbitcn::train::{auprc_binary, auroc_binary, auroc_macro, auprc_macro, confusion_metrics, split, SplitSpec};
use hmbitcn::Tensor;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn snr_law() -> Outcome {
    let start = Instant::now();
    let cells = verify_grid(&VERIFY_COEFFICIENTS, &VERIFY_CORRELATIONS, 1_000_000, 0).unwrap();
    let elapsed = start.elapsed();
    let within = cells.iter().filter(|c| c.relative_error() <= 0.02).count();
    let worst = cells.iter().map(|c| c.relative_error()).fold(0.0, f64::max);
    let frac = within as f64 / cells.len() as f64;
    outcome(
        cells.len() >= 200 && frac >= 0.99 && elapsed < Duration::from_secs(120),
        format!(
            "{within}/{} cells within 2% (worst {:.3}%), {:.1}s",
            cells.len(),
            100.0 * worst,
            elapsed.as_secs_f64()
        ),
    )
}

fn mode_equivalence() -> Outcome {
    let mut rng = seeded(2);
    let (mut checked, mut violations) = (0, 0);
    while checked < 100_000 {
        let a = rng.random_range(-2.0..2.0);
        let b = rng.random_range(-2.0..2.0);
        let rho = rng.random_range(-1.0..=1.0);
        let gamma = rng.random_range(-1.0..=1.0);
        if a * a + b * b + 2.0 * a * b * gamma <= 0.0 {
            continue;
        }
        let Ok(gain) = theoretical_gain(a, b, rho, gamma) else { continue };
        checked += 1;
        if (gain > 1.0) != (2.0 * a * b * (rho - gamma) > 0.0) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{checked} cases, {violations} violations"))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut cfg = HmBiTcnConfig::desk_default(4, 2);
    cfg.cif = Some(CifConfig::new(1, 2, 1.0, -1.0).with_mode(CoefficientMode::LearnableSuppression));
    let model = HmBiTcn::new(cfg, 0).unwrap();
    let mut normal = Normal::new(seeded(3));
    let x = Tensor::new(vec![2, 16, 4], (0..128).map(|_| normal.sample()).collect()).unwrap();
    let errors = model.gradient_check(&x, &[0, 1], 1e-6).unwrap();
    let elapsed = start.elapsed();
    let (name, worst) = errors.iter().cloned().fold((String::new(), 0.0), |acc, (n, e)| if e > acc.1 { (n, e) } else { acc });
    outcome(
        model.config().channel_widths.len() == 3 && worst <= 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "{} parameter tensors, worst relative error {worst:.2e} ({name}), {:.1}s",
            errors.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn causality() -> Outcome {
    let model = HmBiTcn::new(HmBiTcnConfig::desk_default(4, 2), 4).unwrap();
    let (c, len) = (4, 64);
    let mut rng = seeded(5);
    let x = Tensor::uniform(vec![1, c, len], 1.0, &mut rng);
    let (mut checked, mut violations, mut layers) = (0usize, 0usize, 0);
    for (mode, unaffected) in [
        (DirectionMode::Forward, (|t: usize, s: usize| t < s) as fn(usize, usize) -> bool),
        (DirectionMode::Backward, |t, s| t > s),
    ] {
        let base = model.conv_layer_outputs(&x, mode).unwrap();
        layers = base.len();
        for s in 0..len {
            let mut y = x.clone();
            for ch in 0..c {
                y.data_mut()[ch * len + s] += 1.0 + rng.random::<f64>();
            }
            let out = model.conv_layer_outputs(&y, mode).unwrap();
            for (o, p) in base.iter().zip(&out) {
                let (_, width, _) = o.dims3().unwrap();
                for ch in 0..width {
                    for t in (0..len).filter(|&t| unaffected(t, s)) {
                        checked += 1;
                        if o.at3(0, ch, t) != p.at3(0, ch, t) {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    outcome(
        violations == 0 && layers == 6,
        format!("{layers} layers, {checked} output positions checked, {violations} violations"),
    )
}

fn cif_oracle() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..1000 {
        let (x, cfg) = cif_instance(seed);
        let (b_, t_, c) = x.dims3().unwrap();
        let y = apply_cif(&x, &cfg).unwrap();
        let want = cif_reference(x.data(), b_, t_, c, cfg.t, cfg.n, cfg.a, cfg.b);
        let psf = apply_psf(&x, &cfg.fusion_pairs(c), cfg.a, cfg.b).unwrap();
        if y.data() != &want[..] || psf != y {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("1000 instances, {mismatches} not bit-exact"))
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut normal = Normal::new(seeded(seed));
    Matrix::from_fn(rows, cols, |_, _| normal.sample())
}

fn svd_identities() -> Outcome {
    let mut rng = seeded(6);
    let mut worst_identity: f64 = 0.0;
    for seed in 0..500 {
        let rows = rng.random_range(2..80);
        let n = rng.random_range(1..6);
        let cols = 2 * n + rng.random_range(0..3);
        let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let x = gaussian(rows, cols, 1000 + seed);
        let scale = a.abs() * x.column_block(0, n).unwrap().frobenius_norm()
            + b.abs() * x.column_block(cols - n, n).unwrap().frobenius_norm();
        worst_identity = worst_identity.max(linear_identity_residual(&x, n, a, b).unwrap() / scale);
    }
    let xi = gaussian(64, 4, 7);
    let shared_worst = [1.0, 2.0, -0.5]
        .iter()
        .map(|&c| {
            let x = Matrix::from_fn(64, 8, |i, j| if j < 4 { xi[(i, j)] } else { c * xi[(i, j - 4)] });
            shared_pattern_error(&x, 4, 1.0, 1.0).unwrap()
        })
        .fold(0.0, f64::max);
    let independent_min = (0..100)
        .map(|seed| shared_pattern_error(&gaussian(64, 8, 5000 + seed), 4, 1.0, 1.0).unwrap())
        .fold(f64::INFINITY, f64::min);
    outcome(
        worst_identity <= 1e-9 && shared_worst <= 1e-9 && independent_min > 0.5,
        format!(
            "identity residual/scale max {worst_identity:.1e}, shared max {shared_worst:.1e}, independent min {independent_min:.3}"
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..200 {
        let inst = metric_instance(seed);
        let got = confusion_metrics(&inst.y_true, &inst.y_pred, inst.k).unwrap();
        let want = confusion_oracle(&inst.y_true, &inst.y_pred, inst.k);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        for (g, w) in [
            (got.accuracy, want.accuracy),
            (got.precision_macro, mean(&want.precision)),
            (got.recall_macro, mean(&want.recall)),
            (got.f1_macro, mean(&want.f1)),
            (
                auroc_macro(&inst.y_true, &inst.scores).unwrap(),
                macro_oracle(&inst.y_true, &inst.scores, inst.k, auroc_trapezoid),
            ),
            (
                auprc_macro(&inst.y_true, &inst.scores).unwrap(),
                macro_oracle(&inst.y_true, &inst.scores, inst.k, auprc_table),
            ),
        ] {
            worst = worst.max((g - w).abs());
        }
    }
    let hand = confusion_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
    let neg_pos = [false, false, true, true];
    let mut last = vec![false; 5];
    last[4] = true;
    let hand_ok = (hand.f1_macro - 11.0 / 15.0).abs() < 1e-15
        && hand.precision[0] == 1.0
        && hand.recall[0] == 0.5
        && auroc_binary(&neg_pos, &[0.1, 0.4, 0.35, 0.8]) == Some(0.75)
        && auroc_binary(&neg_pos, &[0.5; 4]) == Some(0.5)
        && auprc_binary(&[false, true, true], &[0.1, 0.5, 0.9]) == Some(1.0)
        && (auprc_binary(&last, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() - 0.2).abs() < 1e-15;
    outcome(
        worst <= 1e-12 && hand_ok,
        format!("200 instances, max deviation {worst:.1e}; hand examples {}", if hand_ok { "exact" } else { "differ" }),
    )
}

fn receptive_field() -> Outcome {
    let cfg = HmBiTcnConfig::desk_default(4, 2);
    let model = HmBiTcn::new(cfg.clone(), 8).unwrap();
    let dil = cfg.conv_layer_dilations();
    let mut rows = Vec::new();
    let mut pass = true;
    for layer in 1..=dil.len() {
        let probe = receptive_field_empirical(&model, layer, 64, 2).unwrap();
        let stacked = receptive_field_stacked(cfg.kernel_size, &dil, layer);
        pass &= probe.span == stacked;
        rows.push(format!(
            "L{layer}: {} vs {stacked} (closed form {})",
            probe.span,
            receptive_field_closed_form(cfg.kernel_size, &dil, layer)
        ));
    }
    pass &= receptive_field_table(&cfg, 8).is_ok();
    outcome(pass, format!("empirical vs 1+(k-1)Σd: {}", rows.join(", ")))
}

fn ablation_run(cfg: &std::path::Path, out: &std::path::Path) -> (i32, Duration) {
    let start = Instant::now();
    let code = run(["hmbitcn", "ablate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (code, start.elapsed())
}

fn ablation_and_determinism() -> (Outcome, Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("experiment.json");
    std::fs::write(&cfg, default_experiment().to_json()).unwrap();
    let (o1, o2) = (dir.path().join("run1"), dir.path().join("run2"));
    let (code1, t1) = ablation_run(&cfg, &o1);
    if code1 != 0 {
        let fail = outcome(false, format!("ablate exited with {code1}"));
        return (fail, outcome(false, "first ablate run failed"));
    }
    let seeds = std::fs::read_to_string(o1.join("ablation_seeds.csv")).unwrap();
    let mut acc: BTreeMap<(String, String), Vec<(u64, f64)>> = BTreeMap::new();
    for line in seeds.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        acc.entry((f[0].into(), f[1].into())).or_default().push((f[2].parse().unwrap(), f[3].parse().unwrap()));
    }
    let get = |cif: &str, dir: &str| acc[&(cif.to_string(), dir.to_string())].clone();
    let (on, off) = (get("on", "both"), get("off", "both"));
    let wins = on.iter().zip(&off).filter(|((s1, a1), (s2, a2))| s1 == s2 && a1 > a2).count();
    let mean = |v: &[(u64, f64)]| v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64;
    let (both, fwd) = (mean(&on), mean(&get("on", "forward")));
    let seeds_used: BTreeSet<u64> = on.iter().map(|p| p.0).collect();
    let c9 = outcome(
        wins >= 4 && both >= fwd && seeds_used == (41..=45).collect() && t1 < Duration::from_secs(900),
        format!(
            "CIF beats no-CIF in {wins}/{} seeds; CIF both {:.2}% vs no-CIF both {:.2}%, CIF forward {:.2}%; {:.0}s",
            on.len(),
            100.0 * both,
            100.0 * mean(&off),
            100.0 * fwd,
            t1.as_secs_f64()
        ),
    );
    let (code2, _) = ablation_run(&cfg, &o2);
    let same = ["ablation.csv", "ablation_seeds.csv"]
        .iter()
        .all(|f| std::fs::read(o1.join(f)).ok() == std::fs::read(o2.join(f)).ok());
    let c10 = outcome(code2 == 0 && same, format!("two ablate runs {}", if same { "byte-identical" } else { "differ" }));
    (c9, c10)
}

fn split_contract() -> Outcome {
    let mut rng = seeded(11);
    let mut violations = 0;
    for seed in 0..100 {
        let subjects = rng.random_range(3..40);
        let mut samples = Vec::new();
        for s in 0..subjects {
            for _ in 0..rng.random_range(1..8) {
                samples.push(Sample {
                    values: Tensor::zeros(vec![2, 2]),
                    label: rng.random_range(0..3),
                    subject_id: format!("p{s}"),
                });
            }
        }
        let ds = Dataset::new(3, 2, 2, samples).unwrap();
        let s = split(&ds, &SplitSpec { seed, ..SplitSpec::default() }).unwrap();
        let sets: Vec<BTreeSet<&str>> = s
            .parts()
            .iter()
            .map(|p| p.iter().map(|&i| ds.samples()[i].subject_id.as_str()).collect())
            .collect();
        let disjoint = sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]);
        let covered: usize = sets.iter().map(|s| s.len()).sum();
        let mut all: Vec<usize> = s.parts().concat();
        all.sort_unstable();
        if !disjoint || covered != subjects || all != (0..ds.len()).collect::<Vec<_>>() {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("100 datasets, {violations} violations"))
}

fn main() {
    let (c9, c10) = ablation_and_determinism();
    let results = [
        ("1 SNR law", snr_law()),
        ("2 mode equivalence", mode_equivalence()),
        ("3 gradient check", gradient_check()),
        ("4 causality", causality()),
        ("5 CIF oracle", cif_oracle()),
        ("6 SVD identities", svd_identities()),
        ("7 metric oracles", metric_oracles()),
        ("8 receptive field", receptive_field()),
        ("9 synthetic ablation", c9),
        ("10 ablate determinism", c10),
        ("11 split contract", split_contract()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
