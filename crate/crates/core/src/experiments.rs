//! Multi-run experiments built on [`run_cv`]: noise sweeps, balancing and
//! model comparisons with paired tests, and threshold sweeps.
//!
//! Every configuration inside one experiment shares the same fold plan, so
//! per-fold metrics are paired across configurations.

use serde::{Deserialize, Serialize};

use crate::dataset::ReferralDataset;
use crate::embed::{embed_dataset, EmbeddedDataset, Provider, Variant};
use crate::error::{Error, Result};
use crate::eval::{
    bootstrap_ci, run_cv, stratified_folds, threshold_sweep, BootstrapSpec, ClassifierChoice,
    CvReport, FoldPlan, Interval, ThresholdCurve,
};
use crate::model::{ClassifierSpec, ModelKind};
use crate::perturb::{perturb_dataset, NoiseKind, NoiseSpec};
use crate::resample::{ResampleSpec, Strategy};
use crate::rng;
use crate::stats::{benjamini_hochberg, wilcoxon_signed_rank, WilcoxonMethod};

/// Metrics compared pairwise in comparison experiments.
pub const COMPARED_METRICS: [&str; 2] = ["roc_auc", "mcc"];

/// Everything a cross-validation run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub k_folds: usize,
    pub fold_seed: u64,
    pub classifier: ClassifierChoice,
    pub resample: ResampleSpec,
    pub bootstrap: BootstrapSpec,
}

impl CvSettings {
    /// Default forest, SMOTE, 5 folds and 1000 bootstrap resamples, with all
    /// component seeds derived from `seed`.
    pub fn from_seed(seed: u64) -> Self {
        CvSettings {
            k_folds: 5,
            fold_seed: rng::derive(seed, &[1]),
            classifier: ClassifierChoice::Fixed {
                spec: ClassifierSpec::default_for(ModelKind::RandomForest, rng::derive(seed, &[2])),
            },
            resample: ResampleSpec::new(Strategy::Smote, rng::derive(seed, &[3])),
            bootstrap: BootstrapSpec {
                seed: rng::derive(seed, &[4]),
                ..Default::default()
            },
        }
    }

    pub fn folds(&self, labels: &[u8]) -> Result<FoldPlan> {
        stratified_folds(labels, self.k_folds, self.fold_seed)
    }

    pub fn run(&self, data: &EmbeddedDataset) -> Result<CvReport> {
        self.resample.validate()?;
        let folds = self.folds(&data.labels)?;
        run_cv(
            data,
            &self.classifier,
            &self.resample,
            &folds,
            &self.bootstrap,
        )
    }
}

/// Embeds `dataset` and cross-validates it.
pub fn evaluate(
    dataset: &ReferralDataset,
    provider: &Provider,
    variant: Variant,
    settings: &CvSettings,
) -> Result<CvReport> {
    settings.run(&embed_dataset(dataset, provider, variant)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub kind: NoiseKind,
    pub level: f64,
    pub roc_auc: Interval,
    pub fold_roc_auc: Vec<f64>,
}

/// Perturbs the corpus at each `(kind, level)`, re-embeds and re-evaluates.
/// The fold plan and model seeds are the same at every point. Level 0 runs
/// on the unmodified texts.
pub fn noise_sweep(
    dataset: &ReferralDataset,
    provider: &Provider,
    variant: Variant,
    kinds: &[NoiseKind],
    levels: &[f64],
    noise_seed: u64,
    settings: &CvSettings,
) -> Result<Vec<NoisePoint>> {
    if matches!(provider, Provider::File { .. }) {
        return Err(Error::invalid(
            "noise sweep needs a provider that embeds text, not a precomputed file",
        ));
    }
    let mut points = Vec::with_capacity(kinds.len() * levels.len());
    for &kind in kinds {
        for &level in levels {
            let spec = NoiseSpec::new(kind, level, noise_seed)?;
            let noisy = perturb_dataset(dataset, &spec)?;
            let report = evaluate(&noisy, provider, variant, settings)?;
            points.push(NoisePoint {
                kind,
                level,
                roc_auc: report.summary["roc_auc"],
                fold_roc_auc: report.fold_values("roc_auc"),
            });
        }
    }
    Ok(points)
}

/// `kind,level,roc_auc_mean,ci_lower,ci_upper` rows.
pub fn noise_csv(points: &[NoisePoint]) -> String {
    let mut s = String::from("kind,level,roc_auc_mean,ci_lower,ci_upper\n");
    for p in points {
        s.push_str(&format!(
            "{},{:.2},{:?},{:?},{:?}\n",
            p.kind.as_str(),
            p.level,
            p.roc_auc.mean,
            p.roc_auc.ci_lower,
            p.roc_auc.ci_upper
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub name: String,
    pub report: CvReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub n: usize,
    pub w_plus: Option<f64>,
    pub p_value: f64,
    pub q_value: f64,
    /// `None` when every paired difference is zero; p is then 1.
    pub method: Option<WilcoxonMethod>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub entries: Vec<ComparisonEntry>,
    pub pairwise: Vec<PairwiseTest>,
}

/// Wilcoxon signed-rank tests on per-fold values for every pair of
/// entries and each metric in [`COMPARED_METRICS`]; q-values are
/// Benjamini-Hochberg adjusted within each metric.
pub fn pairwise_tests(entries: &[ComparisonEntry]) -> Result<Vec<PairwiseTest>> {
    let mut out = Vec::new();
    for metric in COMPARED_METRICS {
        let start = out.len();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let a = entries[i].report.fold_values(metric);
                let b = entries[j].report.fold_values(metric);
                let (w_plus, p_value, method) = if a.iter().zip(&b).all(|(x, y)| x == y) {
                    if a.len() != b.len() {
                        return Err(Error::DimensionMismatch {
                            expected: a.len(),
                            actual: b.len(),
                        });
                    }
                    (None, 1.0, None)
                } else {
                    let w = wilcoxon_signed_rank(&a, &b)?;
                    (Some(w.w_plus), w.p_value, Some(w.method))
                };
                out.push(PairwiseTest {
                    a: entries[i].name.clone(),
                    b: entries[j].name.clone(),
                    metric: metric.to_string(),
                    n: a.len(),
                    w_plus,
                    p_value,
                    q_value: f64::NAN,
                    method,
                });
            }
        }
        let p: Vec<f64> = out[start..].iter().map(|t| t.p_value).collect();
        for (t, q) in out[start..].iter_mut().zip(benjamini_hochberg(&p)?) {
            t.q_value = q;
        }
    }
    Ok(out)
}

fn compare(runs: Vec<(String, Result<CvReport>)>) -> Result<Comparison> {
    let entries = runs
        .into_iter()
        .map(|(name, r)| r.map(|report| ComparisonEntry { name, report }))
        .collect::<Result<Vec<_>>>()?;
    let pairwise = pairwise_tests(&entries)?;
    Ok(Comparison { entries, pairwise })
}

/// One CV run per balancing strategy, everything else fixed.
pub fn balance_compare(
    data: &EmbeddedDataset,
    strategies: &[Strategy],
    settings: &CvSettings,
) -> Result<Comparison> {
    compare(
        strategies
            .iter()
            .map(|&s| {
                let cfg = CvSettings {
                    resample: ResampleSpec {
                        strategy: s,
                        ..settings.resample
                    },
                    ..settings.clone()
                };
                (s.to_string(), cfg.run(data))
            })
            .collect(),
    )
}

/// One CV run per model kind with default hyperparameters. The classifier
/// seed comes from `settings` when it holds a fixed spec.
pub fn model_compare(
    data: &EmbeddedDataset,
    kinds: &[ModelKind],
    settings: &CvSettings,
    model_seed: u64,
) -> Result<Comparison> {
    compare(
        kinds
            .iter()
            .map(|&k| {
                let cfg = CvSettings {
                    classifier: ClassifierChoice::Fixed {
                        spec: ClassifierSpec::default_for(k, model_seed),
                    },
                    ..settings.clone()
                };
                (k.to_string(), cfg.run(data))
            })
            .collect(),
    )
}

/// `name,metric,mean,ci_lower,ci_upper` rows, one per entry and metric.
pub fn comparison_csv(c: &Comparison) -> String {
    let mut s = String::from("name,metric,mean,ci_lower,ci_upper\n");
    for e in &c.entries {
        for (metric, i) in &e.report.summary {
            s.push_str(&format!(
                "{},{metric},{:?},{:?},{:?}\n",
                e.name, i.mean, i.ci_lower, i.ci_upper
            ));
        }
    }
    s
}

/// Threshold sweep over the untouched test splits of a CV report.
pub fn sweep_report(report: &CvReport, labels: &[u8], step: f64) -> Result<ThresholdCurve> {
    threshold_sweep(&report.scored_folds(labels), step)
}

/// Mean with bootstrap interval of arbitrary per-fold values.
pub fn summarize(values: &[f64], boot: &BootstrapSpec) -> Result<Interval> {
    bootstrap_ci(values, boot)
}
