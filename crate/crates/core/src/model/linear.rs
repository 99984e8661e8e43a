use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::matrix::{dot, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    /// L2 penalty strength.
    pub alpha: f64,
    pub epochs: usize,
    /// Step size at the first update.
    pub eta0: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            alpha: 1e-4,
            epochs: 20,
            eta0: 0.1,
        }
    }
}

/// Linear max-margin classifier trained by hinge-loss SGD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    /// Step size `1 / (alpha * (t0 + t))` with `t0` chosen so the first step
    /// equals `eta0`. The bias is not penalized.
    pub fn fit(x: &Matrix, y: &[u8], params: &LinearParams, seed: u64) -> LinearModel {
        let mut w = vec![0.0; x.ncols()];
        let mut b = 0.0;
        let t0 = 1.0 / (params.alpha * params.eta0);
        let mut t = 0.0;
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut r = rng::from_seed(seed);
        for _ in 0..params.epochs {
            order.shuffle(&mut r);
            for &i in &order {
                let eta = 1.0 / (params.alpha * (t0 + t));
                t += 1.0;
                let target = if y[i] == 1 { 1.0 } else { -1.0 };
                let row = x.row(i);
                let margin = target * (dot(&w, row) + b);
                let shrink = 1.0 - eta * params.alpha;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, xj) in w.iter_mut().zip(row) {
                        *wj += eta * target * xj;
                    }
                    b += eta * target;
                }
            }
        }
        LinearModel {
            weights: w,
            bias: b,
        }
    }

    pub fn margin_row(&self, row: &[f64]) -> f64 {
        dot(&self.weights, row) + self.bias
    }
}
