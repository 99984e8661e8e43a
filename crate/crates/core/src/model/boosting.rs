use serde::{Deserialize, Serialize};

use super::sigmoid;
use super::tree::{grow_regressor, Limits, Presorted, Tree};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostingParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            n_estimators: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

/// Stagewise additive model on the log-odds scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boosting {
    pub init_log_odds: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Boosting {
    /// Each stage fits a regression tree to the logistic-loss negative
    /// gradient `y - p` and takes a Newton step per leaf.
    pub fn fit(x: &Matrix, y: &[u8], params: &BoostingParams) -> Boosting {
        let n = y.len();
        let pos = y.iter().filter(|&&l| l == 1).count() as f64;
        let prior = pos / n as f64;
        let init = (prior / (1.0 - prior)).ln();
        let limits = Limits {
            max_depth: Some(params.max_depth),
            min_samples_split: params.min_samples_split,
            min_samples_leaf: params.min_samples_leaf,
        };
        let sorted = Presorted::new(x);
        let mut raw = vec![init; n];
        let mut residual = vec![0.0; n];
        let mut hessian = vec![0.0; n];
        let mut trees = Vec::with_capacity(params.n_estimators);
        for _ in 0..params.n_estimators {
            for i in 0..n {
                let p = sigmoid(raw[i]);
                residual[i] = f64::from(y[i]) - p;
                hessian[i] = p * (1.0 - p);
            }
            let tree = grow_regressor(x, &sorted, &residual, &hessian, limits);
            for (i, r) in raw.iter_mut().enumerate() {
                *r += params.learning_rate * tree.predict_row(x.row(i));
            }
            trees.push(tree);
        }
        Boosting {
            init_log_odds: init,
            learning_rate: params.learning_rate,
            trees,
        }
    }

    /// Summed in stage order.
    pub fn decision_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(self.init_log_odds, |acc, t| {
            acc + self.learning_rate * t.predict_row(row)
        })
    }
}
