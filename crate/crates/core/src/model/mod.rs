//! Classifier families, training, scoring and grid search.
//!
//! Every fitted model emits a score in `[0, 1]` per row: the forest averages
//! leaf positive fractions, the other three pass their raw output through
//! the logistic function.

pub mod boosting;
pub mod forest;
pub mod linear;
pub mod mlp;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{roc_auc, stratified_folds};
use crate::matrix::Matrix;
use crate::rng;

pub use boosting::{Boosting, BoostingParams};
pub use forest::{Forest, ForestParams};
pub use linear::{LinearModel, LinearParams};
pub use mlp::{Mlp, MlpParams};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    GradientBoosting,
    LinearMargin,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
        ModelKind::LinearMargin,
        ModelKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::LinearMargin => "linear_margin",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_forest" | "rf" => Ok(ModelKind::RandomForest),
            "gradient_boosting" | "gb" => Ok(ModelKind::GradientBoosting),
            "linear_margin" | "svm" => Ok(ModelKind::LinearMargin),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    RandomForest(ForestParams),
    GradientBoosting(BoostingParams),
    LinearMargin(LinearParams),
    Mlp(MlpParams),
}

impl Hyperparameters {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::RandomForest => Hyperparameters::RandomForest(ForestParams::default()),
            ModelKind::GradientBoosting => {
                Hyperparameters::GradientBoosting(BoostingParams::default())
            }
            ModelKind::LinearMargin => Hyperparameters::LinearMargin(LinearParams::default()),
            ModelKind::Mlp => Hyperparameters::Mlp(MlpParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::RandomForest(_) => ModelKind::RandomForest,
            Hyperparameters::GradientBoosting(_) => ModelKind::GradientBoosting,
            Hyperparameters::LinearMargin(_) => ModelKind::LinearMargin,
            Hyperparameters::Mlp(_) => ModelKind::Mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(hyperparameters: Hyperparameters, seed: u64) -> Self {
        ClassifierSpec {
            hyperparameters,
            seed,
        }
    }

    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        ClassifierSpec::new(Hyperparameters::defaults(kind), seed)
    }

    pub fn kind(&self) -> ModelKind {
        self.hyperparameters.kind()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("{}: {m}", self.kind())));
        match &self.hyperparameters {
            Hyperparameters::RandomForest(p) => {
                if p.n_estimators == 0 {
                    return fail("n_estimators must be positive");
                }
                if p.max_depth == Some(0) {
                    return fail("max_depth must be positive or unbounded");
                }
                if p.min_samples_split < 2 {
                    return fail("min_samples_split must be at least 2");
                }
                if p.min_samples_leaf < 1 {
                    return fail("min_samples_leaf must be at least 1");
                }
                if p.max_features == Some(0) {
                    return fail("max_features must be positive");
                }
            }
            Hyperparameters::GradientBoosting(p) => {
                if p.n_estimators == 0 || p.max_depth == 0 {
                    return fail("n_estimators and max_depth must be positive");
                }
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return fail("learning_rate must be positive");
                }
                if p.min_samples_split < 2 || p.min_samples_leaf < 1 {
                    return fail("invalid minimum sample counts");
                }
            }
            Hyperparameters::LinearMargin(p) => {
                if !(p.alpha > 0.0 && p.eta0 > 0.0) || p.epochs == 0 {
                    return fail("alpha, eta0 and epochs must be positive");
                }
            }
            Hyperparameters::Mlp(p) => {
                if p.hidden == 0 || p.epochs == 0 || p.batch_size == 0 {
                    return fail("hidden, epochs and batch_size must be positive");
                }
                if !(p.learning_rate > 0.0 && p.l2 >= 0.0) {
                    return fail("learning_rate must be positive and l2 non-negative");
                }
            }
        }
        Ok(())
    }
}

/// The forest grid, enumerated with `n_estimators` outermost and
/// `min_samples_leaf` innermost.
pub fn forest_grid(seed: u64) -> Vec<ClassifierSpec> {
    let mut grid = Vec::with_capacity(81);
    for n_estimators in [50, 100, 200] {
        for max_depth in [None, Some(10), Some(20)] {
            for min_samples_split in [2, 5, 10] {
                for min_samples_leaf in [1, 2, 4] {
                    grid.push(ClassifierSpec::new(
                        Hyperparameters::RandomForest(ForestParams {
                            n_estimators,
                            max_depth,
                            min_samples_split,
                            min_samples_leaf,
                            ..Default::default()
                        }),
                        seed,
                    ));
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum FittedState {
    RandomForest(Forest),
    GradientBoosting(Boosting),
    LinearMargin(LinearModel),
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub feature_dim: usize,
    pub state: FittedState,
}

fn check_training_set(x: &Matrix, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::invalid("need at least two training rows"));
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

pub fn train(x: &Matrix, y: &[u8], spec: &ClassifierSpec) -> Result<TrainedClassifier> {
    spec.validate()?;
    check_training_set(x, y)?;
    if x.ncols() == 0 {
        return Err(Error::invalid("feature matrix has no columns"));
    }
    let state = match &spec.hyperparameters {
        Hyperparameters::RandomForest(p) => {
            FittedState::RandomForest(Forest::fit(x, y, p, spec.seed))
        }
        Hyperparameters::GradientBoosting(p) => {
            FittedState::GradientBoosting(Boosting::fit(x, y, p))
        }
        Hyperparameters::LinearMargin(p) => {
            FittedState::LinearMargin(LinearModel::fit(x, y, p, spec.seed))
        }
        Hyperparameters::Mlp(p) => FittedState::Mlp(Mlp::fit(x, y, p, spec.seed)),
    };
    Ok(TrainedClassifier {
        spec: spec.clone(),
        feature_dim: x.ncols(),
        state,
    })
}

impl TrainedClassifier {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        match &self.state {
            FittedState::RandomForest(f) => f.score_row(row),
            FittedState::GradientBoosting(b) => sigmoid(b.decision_row(row)),
            FittedState::LinearMargin(l) => sigmoid(l.margin_row(row)),
            FittedState::Mlp(m) => sigmoid(m.logit_row(row)),
        }
    }

    pub fn predict_scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: x.ncols(),
            });
        }
        Ok(x.rows().map(|r| self.score_row(r)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedClassifier> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        Ok(file.model)
    }
}

pub fn predict_scores(model: &TrainedClassifier, x: &Matrix) -> Result<Vec<f64>> {
    model.predict_scores(x)
}

const MODEL_FORMAT: &str = "refertriage-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: TrainedClassifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ClassifierSpec,
    pub best_index: usize,
    /// Mean inner-fold ROC-AUC per grid entry, in grid order.
    pub mean_roc_auc: Vec<f64>,
}

/// Exhaustive search scored by mean ROC-AUC over stratified inner folds.
/// Ties go to the earliest grid entry.
pub fn grid_search(
    x: &Matrix,
    y: &[u8],
    grid: &[ClassifierSpec],
    inner_folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    check_training_set(x, y)?;
    for spec in grid {
        spec.validate()?;
    }
    let plan = stratified_folds(y, inner_folds, rng::derive(seed, &[0x6772_6964]))?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..inner_folds).map(|k| plan.split(k)).collect();

    let mean_roc_auc = grid
        .par_iter()
        .map(|spec| {
            let mut total = 0.0;
            for (train_idx, test_idx) in &splits {
                let ytr: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();
                let model = train(&x.select_rows(train_idx), &ytr, spec)?;
                let scores = model.predict_scores(&x.select_rows(test_idx))?;
                let yte: Vec<u8> = test_idx.iter().map(|&i| y[i]).collect();
                total += roc_auc(&yte, &scores)?;
            }
            Ok(total / splits.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut best_index = 0;
    for (i, &s) in mean_roc_auc.iter().enumerate() {
        if s > mean_roc_auc[best_index] {
            best_index = i;
        }
    }
    Ok(GridResult {
        best: grid[best_index].clone(),
        best_index,
        mean_roc_auc,
    })
}
