//! Stratified cross-validation, binary classification metrics, percentile
//! bootstrap intervals and decision-threshold sweeps.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddedDataset, Variant};
use crate::error::{Error, Result};
use crate::model::{grid_search, train, ClassifierSpec};
use crate::resample::{class_counts, rebalance, ResampleSpec};
use crate::rng;

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// `(train, test)` row indices for one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != fold)
    }
}

/// Shuffles each class with the seed and deals it round-robin to folds.
/// The negative class starts dealing where the positive class stopped, so
/// fold sizes also differ by at most one.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1).collect();
    if pos.len() < k || neg.len() < k {
        return Err(Error::invalid(format!(
            "stratified {k}-fold split needs at least {k} samples per class, have {} positive / {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let mut r = rng::from_seed(seed);
    pos.shuffle(&mut r);
    neg.shuffle(&mut r);
    let mut assignments = vec![0; y.len()];
    for (j, &i) in pos.iter().chain(&neg).enumerate() {
        assignments[i] = j % k;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn at(y: &[u8], scores: &[f64], threshold: f64) -> Confusion {
        let mut c = Confusion::default();
        for (&l, &s) in y.iter().zip(scores) {
            match (l == 1, s >= threshold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    /// Zero when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_)
    }

    /// Matthews correlation; zero when any marginal is empty.
    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (
            self.tp as f64,
            self.tn as f64,
            self.fp as f64,
            self.fn_ as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        let num = self.tp as i128 * self.tn as i128 - self.fp as i128 * self.fn_ as i128;
        num as f64 / denom.sqrt()
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_scored(y: &[u8], scores: &[f64]) -> Result<()> {
    if y.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    Ok(())
}

fn ranking_order(y: &[u8], scores: &[f64]) -> Result<(Vec<usize>, usize, usize)> {
    check_scored(y, scores)?;
    let (n0, n1) = class_counts(y);
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok((order, n1, n0))
}

/// Probability a random positive outscores a random negative, ties counted
/// one half. Accumulated in integer half-units so it is exact.
pub fn roc_auc(y: &[u8], scores: &[f64]) -> Result<f64> {
    let (order, n_pos, n_neg) = ranking_order(y, scores)?;
    // walk ascending score groups
    let mut twice_credit: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = order.len();
    while i > 0 {
        let s = scores[order[i - 1]];
        let (mut gp, mut gn) = (0u128, 0u128);
        while i > 0 && scores[order[i - 1]] == s {
            if y[order[i - 1]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            i -= 1;
        }
        twice_credit += gp * (2 * neg_below + gn);
        neg_below += gn;
    }
    Ok(twice_credit as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Average precision: `sum_k (R_k - R_{k-1}) * P_k` over distinct score
/// thresholds, highest first.
pub fn average_precision(y: &[u8], scores: &[f64]) -> Result<f64> {
    let (order, n_pos, _) = ranking_order(y, scores)?;
    let (mut tp, mut seen) = (0u64, 0u64);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += u64::from(y[order[i]] == 1);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold_used: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 7] = [
        "roc_auc",
        "pr_auc",
        "accuracy",
        "mcc",
        "precision",
        "recall",
        "f1",
    ];

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "roc_auc" => self.roc_auc,
            "pr_auc" => self.pr_auc,
            "accuracy" => self.accuracy,
            "mcc" => self.mcc,
            "precision" => self.precision,
            "recall" => self.recall,
            "f1" => self.f1,
            _ => return None,
        })
    }
}

/// All metrics for one scored split; a row is predicted positive when its
/// score is at least `threshold`.
pub fn binary_metrics(y: &[u8], scores: &[f64], threshold: f64) -> Result<MetricSet> {
    let c = Confusion::at(y, scores, threshold);
    Ok(MetricSet {
        roc_auc: roc_auc(y, scores)?,
        pr_auc: average_precision(y, scores)?,
        accuracy: c.accuracy(),
        mcc: c.mcc(),
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        threshold_used: threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub n_resamples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            n_resamples: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Linear interpolation between order statistics of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Percentile bootstrap of the mean. The interval is widened to contain
/// the sample mean when few resamples leave it outside.
pub fn bootstrap_ci(values: &[f64], spec: &BootstrapSpec) -> Result<Interval> {
    if values.is_empty() {
        return Err(Error::invalid("bootstrap of an empty sample"));
    }
    if spec.n_resamples == 0 || !(spec.alpha > 0.0 && spec.alpha < 1.0) {
        return Err(Error::invalid(
            "bootstrap needs n_resamples >= 1 and alpha in (0, 1)",
        ));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut r = rng::from_seed(spec.seed);
    let mut means: Vec<f64> = (0..spec.n_resamples)
        .map(|_| (0..n).map(|_| values[r.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lower = percentile(&means, spec.alpha / 2.0);
    let upper = percentile(&means, 1.0 - spec.alpha / 2.0);
    Ok(Interval {
        mean,
        ci_lower: lower.min(mean),
        ci_upper: upper.max(mean),
    })
}

/// Classifier choice for a CV run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClassifierChoice {
    Fixed {
        spec: ClassifierSpec,
    },
    Grid {
        grid: Vec<ClassifierSpec>,
        inner_folds: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub metrics: MetricSet,
    pub train_raw: ClassCounts,
    pub train_resampled: ClassCounts,
    pub test: ClassCounts,
    pub selected: ClassifierSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_mean_roc_auc: Option<Vec<f64>>,
    #[serde(skip)]
    pub test_indices: Vec<usize>,
    #[serde(skip)]
    pub test_scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub positive: usize,
}

impl ClassCounts {
    fn of(y: &[u8]) -> Self {
        let (negative, positive) = class_counts(y);
        ClassCounts { negative, positive }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: Variant,
    pub k_folds: usize,
    pub fold_seed: u64,
    pub threshold: f64,
    pub classifier: ClassifierChoice,
    pub resample: ResampleSpec,
    pub bootstrap: BootstrapSpec,
    pub folds: Vec<FoldOutcome>,
    pub summary: BTreeMap<String, Interval>,
}

impl CvReport {
    pub fn fold_values(&self, metric: &str) -> Vec<f64> {
        self.folds
            .iter()
            .filter_map(|f| f.metrics.get(metric))
            .collect()
    }

    pub fn mean(&self, metric: &str) -> f64 {
        self.summary.get(metric).map_or(f64::NAN, |i| i.mean)
    }

    /// Per-fold `(labels, scores)` of the untouched test splits.
    pub fn scored_folds(&self, labels: &[u8]) -> Vec<(Vec<u8>, Vec<f64>)> {
        self.folds
            .iter()
            .map(|f| {
                (
                    f.test_indices.iter().map(|&i| labels[i]).collect(),
                    f.test_scores.clone(),
                )
            })
            .collect()
    }
}

/// Decision threshold for the per-fold confusion-matrix metrics.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Outer cross-validation. Per fold: optional grid search on the training
/// split, rebalancing of the training split only, training, and scoring of
/// the untouched test split. Folds run in parallel and are reported in
/// fold order.
pub fn run_cv(
    data: &EmbeddedDataset,
    classifier: &ClassifierChoice,
    resample: &ResampleSpec,
    folds: &FoldPlan,
    boot: &BootstrapSpec,
) -> Result<CvReport> {
    let x = data.features();
    let y = &data.labels;
    if folds.assignments.len() != y.len() {
        return Err(Error::invalid(format!(
            "fold plan covers {} rows, dataset has {}",
            folds.assignments.len(),
            y.len()
        )));
    }

    let outcomes = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let run = || -> Result<FoldOutcome> {
                let (train_idx, test_idx) = folds.split(fold);
                let x_train = x.select_rows(&train_idx);
                let y_train: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
                let x_test = x.select_rows(&test_idx);
                let y_test: Vec<u8> = test_idx.iter().map(|&i| y[i]).collect();

                let (selected, grid_scores) = match classifier {
                    ClassifierChoice::Fixed { spec } => (spec.clone(), None),
                    ClassifierChoice::Grid { grid, inner_folds } => {
                        let g = grid_search(
                            &x_train,
                            &y_train,
                            grid,
                            *inner_folds,
                            rng::derive(folds.seed, &[fold as u64, 1]),
                        )?;
                        (g.best, Some(g.mean_roc_auc))
                    }
                };
                let fold_resample = ResampleSpec {
                    seed: rng::derive(resample.seed, &[fold as u64]),
                    ..*resample
                };
                let (xr, yr) = rebalance(&x_train, &y_train, &fold_resample)?;
                let model = train(&xr, &yr, &selected)?;
                let scores = model.predict_scores(&x_test)?;
                let metrics = binary_metrics(&y_test, &scores, DEFAULT_THRESHOLD)?;
                Ok(FoldOutcome {
                    fold,
                    metrics,
                    train_raw: ClassCounts::of(&y_train),
                    train_resampled: ClassCounts::of(&yr),
                    test: ClassCounts::of(&y_test),
                    selected,
                    grid_mean_roc_auc: grid_scores,
                    test_indices: test_idx,
                    test_scores: scores,
                })
            };
            run().map_err(|e| e.in_fold(fold))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = BTreeMap::new();
    for (m, name) in MetricSet::NAMES.iter().enumerate() {
        let values: Vec<f64> = outcomes
            .iter()
            .map(|o| o.metrics.get(name).unwrap_or(f64::NAN))
            .collect();
        let spec = BootstrapSpec {
            seed: rng::derive(boot.seed, &[m as u64]),
            ..*boot
        };
        summary.insert(name.to_string(), bootstrap_ci(&values, &spec)?);
    }

    Ok(CvReport {
        variant: data.variant,
        k_folds: folds.k,
        fold_seed: folds.seed,
        threshold: DEFAULT_THRESHOLD,
        classifier: classifier.clone(),
        resample: *resample,
        bootstrap: *boot,
        folds: outcomes,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub optimal_threshold: f64,
    pub optimal_f1: f64,
}

impl ThresholdCurve {
    /// `threshold,precision,recall,f1` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall,f1\n");
        for i in 0..self.thresholds.len() {
            s.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                self.thresholds[i], self.precision[i], self.recall[i], self.f1[i]
            ));
        }
        s
    }
}

/// Threshold grid `0, step, 2*step, ..., 1`.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!(
            "threshold step {step} outside (0, 1]"
        )));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "threshold step {step} does not divide 1"
        )));
    }
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

/// Precision, recall and F1 at each grid threshold, averaged over folds;
/// the optimum is the lowest threshold attaining the maximum mean F1.
pub fn threshold_sweep(folds: &[(Vec<u8>, Vec<f64>)], step: f64) -> Result<ThresholdCurve> {
    if folds.is_empty() {
        return Err(Error::invalid("threshold sweep needs at least one fold"));
    }
    for (y, s) in folds {
        check_scored(y, s)?;
        if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("scores must lie in [0, 1]"));
        }
    }
    let thresholds = threshold_grid(step)?;
    let k = folds.len() as f64;
    let mut precision = Vec::with_capacity(thresholds.len());
    let mut recall = Vec::with_capacity(thresholds.len());
    let mut f1 = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for (y, s) in folds {
            let c = Confusion::at(y, s, t);
            p += c.precision();
            r += c.recall();
            f += c.f1();
        }
        precision.push(p / k);
        recall.push(r / k);
        f1.push(f / k);
    }
    let mut best = 0;
    for i in 1..f1.len() {
        if f1[i] > f1[best] {
            best = i;
        }
    }
    Ok(ThresholdCurve {
        optimal_threshold: thresholds[best],
        optimal_f1: f1[best],
        thresholds,
        precision,
        recall,
        f1,
    })
}
