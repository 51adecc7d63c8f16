//! Adam training with early stopping on validation macro-F1, subject-aware
//! splitting, and the six classification metrics.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ExperimentConfig};
use crate::error::{config, dim, Error, Result};
use crate::model::{HmBiTcn, HmBiTcnConfig};
use crate::rng;
use crate::tensor::{ops::softmax_rows, Tensor};

/// Samples per forward pass during evaluation.
const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seeds: vec![41, 42, 43, 44, 45],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return config("batch_size must be at least 1");
        }
        if self.patience > self.max_epochs {
            return config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return config("learning_rate must be positive and finite");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return config("Adam betas must lie in [0, 1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return config("adam_eps must be positive");
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected Adam update of every parameter in place.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Vec<f64>], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return dim(format!(
            "adam_step got {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        ));
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let (g, m, v) = (&grads[i], &mut state.m[i], &mut state.v[i]);
        if g.len() != p.numel() || m.len() != p.numel() {
            return dim(format!("gradient {i} has the wrong length"));
        }
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_f1";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_CSV_HEADER}\n");
    for r in history {
        writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_f1).unwrap();
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation macro-F1.
    pub model: HmBiTcn,
    /// 1-based epoch of the returned parameters.
    pub best_epoch: usize,
    pub best_val_f1: f64,
    pub history: Vec<EpochRecord>,
}

/// Trains a fresh model, keeping the checkpoint with the highest validation
/// macro-F1; an epoch only replaces the checkpoint on a strict improvement.
pub fn train(model_cfg: &HmBiTcnConfig, train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return config("training and validation splits must be non-empty");
    }
    let mut model = HmBiTcn::new(model_cfg.clone(), rng::derive_seed(seed, 0))?;
    let mut shuffle_rng = rng::seeded(rng::derive_seed(seed, 1));
    let mut state = AdamState::new(model.parameters().iter().map(|t| t.numel()));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, HmBiTcn)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = train_set.batch(chunk);
            let (loss, grads) = model.loss_and_gradients(&x, &labels).map_err(|e| match e {
                Error::NonFinite(what) => {
                    Error::NonFinite(format!("training aborted at epoch {epoch}, batch {b}: {what}"))
                }
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training aborted at epoch {epoch}, batch {b}: loss {loss}"
                )));
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut model.parameters_mut(), &grads, &mut state, cfg)?;
            model.project_constraints();
        }
        let val_f1 = evaluate(&model, val_set)?.f1_macro;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_f1,
        });
        if best.as_ref().is_none_or(|(_, f1, _)| val_f1 > *f1) {
            best = Some((epoch, val_f1, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, best_val_f1, model) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_f1,
        history,
    })
}

/// Softmax class probabilities (`N×K`) for every sample of `ds`.
pub fn predict_proba(model: &HmBiTcn, ds: &Dataset) -> Result<Tensor> {
    let k = model.config().num_classes;
    let mut probs = Vec::with_capacity(ds.len() * k);
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = ds.batch(chunk);
        probs.extend_from_slice(softmax_rows(&model.forward(&x)?)?.data());
    }
    Tensor::new(vec![ds.len(), k], probs)
}

/// Index of the largest score in each row; ties go to the lowest index.
pub fn argmax_rows(scores: &Tensor) -> Result<Vec<usize>> {
    let (_, k) = scores.dims2()?;
    Ok(scores
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect())
}

/// The six reported metrics for one evaluated model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub auroc_macro: f64,
    pub auprc_macro: f64,
}

impl Evaluation {
    pub const METRIC_NAMES: [&'static str; 6] = ["accuracy", "precision", "recall", "f1", "auroc", "auprc"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.precision_macro,
            self.recall_macro,
            self.f1_macro,
            self.auroc_macro,
            self.auprc_macro,
        ]
    }

    pub fn from_scores(y_true: &[usize], scores: &Tensor) -> Result<Self> {
        let (_, k) = scores.dims2()?;
        let pred = argmax_rows(scores)?;
        let cm = confusion_metrics(y_true, &pred, k)?;
        Ok(Self {
            accuracy: cm.accuracy,
            precision_macro: cm.precision_macro,
            recall_macro: cm.recall_macro,
            f1_macro: cm.f1_macro,
            auroc_macro: auroc_macro(y_true, scores)?,
            auprc_macro: auprc_macro(y_true, scores)?,
        })
    }
}

pub fn evaluate(model: &HmBiTcn, ds: &Dataset) -> Result<Evaluation> {
    Evaluation::from_scores(&ds.labels(), &predict_proba(model, ds)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Accuracy and per-class/macro precision, recall and F1; a zero denominator yields 0.
pub fn confusion_metrics(y_true: &[usize], y_pred: &[usize], num_classes: usize) -> Result<ConfusionMetrics> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return dim("y_true and y_pred must be non-empty and of equal length");
    }
    if num_classes == 0 || y_true.iter().chain(y_pred).any(|&c| c >= num_classes) {
        return Err(Error::Argument(format!("labels must lie in 0..{num_classes}")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut true_count = vec![0usize; num_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        true_count[t] += 1;
        pred_count[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let precision: Vec<f64> = (0..num_classes).map(|c| ratio(tp[c] as f64, pred_count[c] as f64)).collect();
    let recall: Vec<f64> = (0..num_classes).map(|c| ratio(tp[c] as f64, true_count[c] as f64)).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| ratio(2.0 * p * r, p + r))
        .collect();
    Ok(ConfusionMetrics {
        accuracy: tp.iter().sum::<usize>() as f64 / y_true.len() as f64,
        precision_macro: mean(&precision),
        recall_macro: mean(&recall),
        f1_macro: mean(&f1),
        precision,
        recall,
        f1,
    })
}

fn class_columns(y_true: &[usize], scores: &Tensor) -> Result<Vec<(Vec<bool>, Vec<f64>)>> {
    let (b, k) = scores.dims2()?;
    if b != y_true.len() || b == 0 {
        return dim(format!("{} labels for {b} score rows", y_true.len()));
    }
    if y_true.iter().any(|&c| c >= k) {
        return Err(Error::Argument(format!("labels must lie in 0..{k}")));
    }
    Ok((0..k)
        .filter(|&c| y_true.contains(&c))
        .map(|c| {
            let pos = y_true.iter().map(|&y| y == c).collect();
            let col = scores.data().iter().skip(c).step_by(k).copied().collect();
            (pos, col)
        })
        .collect())
}

/// Area under the ROC curve for one class by pair counting; ties count 1/2.
pub fn auroc_binary(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| p).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| !p).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            wins += match p.total_cmp(&n) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Step-wise area under the precision-recall curve for one class, sweeping
/// thresholds over distinct scores in descending order.
pub fn auprc_binary(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let (mut tp, mut seen, mut area, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            seen += 1;
            tp += positive[order[i]] as usize;
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        area += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Some(area)
}

fn macro_over_present(y_true: &[usize], scores: &Tensor, f: fn(&[bool], &[f64]) -> Option<f64>) -> Result<f64> {
    let vals: Vec<f64> = class_columns(y_true, scores)?
        .iter()
        .filter_map(|(pos, col)| f(pos, col))
        .collect();
    if vals.is_empty() {
        return Err(Error::Degenerate("no class has both positives and negatives".into()));
    }
    Ok(mean(&vals))
}

/// One-vs-rest AUROC averaged over classes present in `y_true` (with at least one negative).
pub fn auroc_macro(y_true: &[usize], scores: &Tensor) -> Result<f64> {
    macro_over_present(y_true, scores, auroc_binary)
}

/// One-vs-rest AUPRC averaged over classes present in `y_true`.
pub fn auprc_macro(y_true: &[usize], scores: &Tensor) -> Result<f64> {
    macro_over_present(y_true, scores, auprc_binary)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Samples are assigned regardless of subject.
    SubjectDependent,
    /// Every subject lands in exactly one split.
    #[default]
    SubjectIndependent,
}

/// Explicit subject lists per split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub mode: SplitMode,
    /// Train/validation/test fractions, used when `assignment` is absent.
    pub ratios: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<SubjectAssignment>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::SubjectIndependent,
            ratios: [0.6, 0.2, 0.2],
            assignment: None,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.assignment.is_none() && !self.ratios.iter().all(|r| r.is_finite() && *r > 0.0) {
            return config(format!("split ratios {:?} must all be positive", self.ratios));
        }
        Ok(())
    }
}

/// Sorted sample indices of each split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn parts(&self) -> [&[usize]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Splits `total` units into three non-empty counts proportional to `ratios`.
fn split_counts(total: usize, ratios: [f64; 3], unit: &str) -> Result<[usize; 3]> {
    if total < 3 {
        return config(format!("{total} {unit}s cannot fill three non-empty splits"));
    }
    let sum: f64 = ratios.iter().sum();
    let share = |r: f64| ((total as f64 * r / sum).round() as usize).max(1);
    let (val, test) = (share(ratios[1]), share(ratios[2]));
    if val + test >= total {
        return config(format!("{total} {unit}s leave no room for training"));
    }
    Ok([total - val - test, val, test])
}

/// Partitions `ds` into train/validation/test, deterministically in the seed.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let (train, val, test) = match (&spec.assignment, spec.mode) {
        (Some(a), _) => {
            let subjects = ds.subjects();
            let lists = [&a.train, &a.val, &a.test];
            for s in &subjects {
                let hits = lists.iter().filter(|l| l.contains(s)).count();
                if hits != 1 {
                    return config(format!("subject {s:?} is assigned to {hits} splits"));
                }
            }
            let pick = |list: &[String]| -> Vec<usize> {
                (0..ds.len()).filter(|&i| list.contains(&ds.samples()[i].subject_id)).collect()
            };
            (pick(&a.train), pick(&a.val), pick(&a.test))
        }
        (None, SplitMode::SubjectIndependent) => {
            let mut subjects = ds.subjects();
            let [n_train, n_val, _] = split_counts(subjects.len(), spec.ratios, "subject")?;
            subjects.shuffle(&mut rng);
            let group = |range: &[String]| -> Vec<usize> {
                (0..ds.len()).filter(|&i| range.contains(&ds.samples()[i].subject_id)).collect()
            };
            (
                group(&subjects[..n_train]),
                group(&subjects[n_train..n_train + n_val]),
                group(&subjects[n_train + n_val..]),
            )
        }
        (None, SplitMode::SubjectDependent) => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            let [n_train, n_val, _] = split_counts(idx.len(), spec.ratios, "sample")?;
            idx.shuffle(&mut rng);
            let sorted = |s: &[usize]| {
                let mut v = s.to_vec();
                v.sort_unstable();
                v
            };
            (
                sorted(&idx[..n_train]),
                sorted(&idx[n_train..n_train + n_val]),
                sorted(&idx[n_train + n_val..]),
            )
        }
    };
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return config("a split is empty");
    }
    Ok(SplitIndices { train, val, test })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let m = mean(xs);
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, std }
    }

    /// `mean±std` in percent with two decimals.
    pub fn percent(&self) -> String {
        format!("{:.2}±{:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: MeanStd,
    pub precision_macro: MeanStd,
    pub recall_macro: MeanStd,
    pub f1_macro: MeanStd,
    pub auroc_macro: MeanStd,
    pub auprc_macro: MeanStd,
}

impl MetricsReport {
    pub fn from_runs(runs: &[Evaluation]) -> Self {
        let col = |i: usize| MeanStd::of(&runs.iter().map(|e| e.values()[i]).collect::<Vec<_>>());
        Self {
            accuracy: col(0),
            precision_macro: col(1),
            recall_macro: col(2),
            f1_macro: col(3),
            auroc_macro: col(4),
            auprc_macro: col(5),
        }
    }

    pub fn fields(&self) -> [MeanStd; 6] {
        [
            self.accuracy,
            self.precision_macro,
            self.recall_macro,
            self.f1_macro,
            self.auroc_macro,
            self.auprc_macro,
        ]
    }

    /// One `name: mean±std` line per metric, in percent.
    pub fn summary(&self) -> String {
        Evaluation::METRIC_NAMES
            .iter()
            .zip(self.fields())
            .map(|(n, m)| format!("{n}: {}\n", m.percent()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub evaluation: Evaluation,
    pub outcome: TrainOutcome,
}

#[derive(Clone, Debug)]
pub struct MultiSeedResult {
    pub report: MetricsReport,
    pub runs: Vec<SeedRun>,
    pub splits: SplitIndices,
}

/// Trains and tests once per seed on splits fixed by the split seed.
pub fn run_multi_seed(exp: &ExperimentConfig) -> Result<MultiSeedResult> {
    exp.validate()?;
    let ds = exp.dataset()?;
    run_multi_seed_on(&ds, &exp.model_config(), &exp.train, &exp.split)
}

pub fn run_multi_seed_on(ds: &Dataset, model_cfg: &HmBiTcnConfig, train_cfg: &TrainConfig, split_spec: &SplitSpec) -> Result<MultiSeedResult> {
    if train_cfg.seeds.is_empty() {
        return config("at least one seed is required");
    }
    let splits = split(ds, split_spec)?;
    let (tr, va, te) = (ds.subset(&splits.train), ds.subset(&splits.val), ds.subset(&splits.test));
    let runs = train_cfg
        .seeds
        .iter()
        .map(|&seed| {
            let outcome = train(model_cfg, &tr, &va, train_cfg, seed)?;
            let evaluation = evaluate(&outcome.model, &te)?;
            Ok(SeedRun {
                seed,
                evaluation,
                outcome,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let evals: Vec<Evaluation> = runs.iter().map(|r| r.evaluation).collect();
    Ok(MultiSeedResult {
        report: MetricsReport::from_runs(&evals),
        runs,
        splits,
    })
}
