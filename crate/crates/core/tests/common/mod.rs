//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use hmbitcn::cif::CifConfig;
use hmbitcn::rng::seeded;
use hmbitcn::Tensor;
use rand::Rng;

/// Literal transcription of the group-fusion loop over a `B×T×C` buffer.
#[allow(clippy::too_many_arguments)]
pub fn cif_reference(x: &[f64], b_: usize, t_: usize, c: usize, t: i64, n: usize, a: f64, b: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    for bi in 0..b_ {
        for ti in 0..t_ {
            let base = (bi * t_ + ti) * c;
            for i in 0..n {
                let front = x[base + i];
                let back = x[base + c - n + i];
                if t > 0 {
                    out[base + i] = a * front + b * back;
                } else {
                    out[base + c - n + i] = a * front + b * back;
                }
            }
        }
    }
    out
}

/// Random input and CIF setting with `1 ≤ n ≤ C/2`.
pub fn cif_instance(seed: u64) -> (Tensor, CifConfig) {
    let mut rng = seeded(seed);
    let (b_, t_, c) = (rng.random_range(1..4), rng.random_range(1..9), rng.random_range(2..9));
    let n = rng.random_range(1..=c / 2);
    let t = rng.random_range(-3i64..4);
    let a = rng.random_range(-2.0..2.0);
    let b = rng.random_range(-2.0..2.0);
    let x = Tensor::uniform(vec![b_, t_, c], 5.0, &mut rng);
    (x, CifConfig::new(t, n, a, b))
}

pub struct MetricInstance {
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub scores: Tensor,
    pub k: usize,
}

/// Small instance with coarse scores so ties are common.
pub fn metric_instance(seed: u64) -> MetricInstance {
    let mut rng = seeded(seed);
    let k = rng.random_range(2..=4);
    let b = rng.random_range(2..=12);
    let mut y_true: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    // at least two distinct labels so some class has negatives
    if y_true.iter().all(|&y| y == y_true[0]) {
        y_true[0] = (y_true[0] + 1) % k;
    }
    let y_pred = (0..b).map(|_| rng.random_range(0..k)).collect();
    let scores = (0..b * k).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
    MetricInstance {
        y_true,
        y_pred,
        scores: Tensor::new(vec![b, k], scores).unwrap(),
        k,
    }
}

/// Per-class precision, recall and F1 from an explicit confusion matrix.
pub struct ConfusionOracle {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
}

pub fn confusion_oracle(y_true: &[usize], y_pred: &[usize], k: usize) -> ConfusionOracle {
    let mut m = vec![vec![0.0; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[t][p] += 1.0;
    }
    let total: f64 = m.iter().flatten().sum();
    let correct: f64 = (0..k).map(|c| m[c][c]).sum();
    let mut out = ConfusionOracle {
        accuracy: correct / total,
        precision: vec![],
        recall: vec![],
        f1: vec![],
    };
    for (c, row) in m.iter().enumerate() {
        let tp = row[c];
        let fp: f64 = m.iter().map(|r| r[c]).sum::<f64>() - tp;
        let fn_: f64 = row.iter().sum::<f64>() - tp;
        out.precision.push(if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 });
        out.recall.push(if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 });
        out.f1.push(if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 });
    }
    out
}

fn distinct_descending(s: &[f64]) -> Vec<f64> {
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
}

/// Trapezoidal area under the ROC polyline through every distinct threshold.
pub fn auroc_trapezoid(pos: &[bool], s: &[f64]) -> Option<f64> {
    let p = pos.iter().filter(|&&x| x).count() as f64;
    let n = pos.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut points = vec![(0.0, 0.0)];
    for t in distinct_descending(s) {
        let tp = s.iter().zip(pos).filter(|(&v, &y)| y && v >= t).count() as f64;
        let fp = s.iter().zip(pos).filter(|(&v, &y)| !y && v >= t).count() as f64;
        points.push((fp / n, tp / p));
    }
    Some(points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum())
}

/// Step area under precision-recall from an explicit threshold table.
pub fn auprc_table(pos: &[bool], s: &[f64]) -> Option<f64> {
    let p = pos.iter().filter(|&&x| x).count() as f64;
    if p == 0.0 {
        return None;
    }
    let mut table = vec![(0.0, 1.0)];
    for t in distinct_descending(s) {
        let selected: Vec<bool> = s.iter().zip(pos).filter(|(&v, _)| v >= t).map(|(_, &y)| y).collect();
        let tp = selected.iter().filter(|&&y| y).count() as f64;
        table.push((tp / p, tp / selected.len() as f64));
    }
    Some(table.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum())
}

/// Mean of a one-vs-rest oracle over classes present in `y_true`.
pub fn macro_oracle(y_true: &[usize], scores: &Tensor, k: usize, f: fn(&[bool], &[f64]) -> Option<f64>) -> f64 {
    let vals: Vec<f64> = (0..k)
        .filter(|c| y_true.contains(c))
        .filter_map(|c| {
            let pos: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
            let col: Vec<f64> = scores.data().chunks(k).map(|r| r[c]).collect();
            f(&pos, &col)
        })
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}
