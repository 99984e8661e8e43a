//! One-hidden-layer perceptron: rectified hidden units, logistic output,
//! mean cross-entropy loss plus an L2 penalty on the weight matrices.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::matrix::{dot, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: 64,
            epochs: 50,
            learning_rate: 0.05,
            batch_size: 32,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden: usize,
    /// hidden × input, row-major
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    /// Penalty used during training.
    #[serde(default)]
    pub l2: f64,
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Mlp {
    /// He-uniform first layer, Glorot-uniform output layer, zero biases.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Mlp {
        let mut r = rng::from_seed(seed);
        let a1 = (6.0 / input_dim.max(1) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        Mlp {
            input_dim,
            hidden,
            w1: (0..hidden * input_dim)
                .map(|_| r.random_range(-a1..a1))
                .collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| r.random_range(-a2..a2)).collect(),
            b2: 0.0,
            l2: 0.0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters flattened as `w1, b1, w2, b2`.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = rest[0];
    }

    fn hidden_layer(&self, row: &[f64], h: &mut [f64]) {
        for (j, hj) in h.iter_mut().enumerate() {
            let w = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
            *hj = (dot(w, row) + self.b1[j]).max(0.0);
        }
    }

    pub fn logit_row(&self, row: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.hidden_layer(row, &mut h);
        dot(&self.w2, &h) + self.b2
    }

    /// Loss over `rows` and its gradient, laid out like [`Mlp::flat_params`].
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[u8], rows: &[usize]) -> (f64, Vec<f64>) {
        let (d, hdim) = (self.input_dim, self.hidden);
        let mut grad = vec![0.0; self.n_params()];
        let (g_w1, rest) = grad.split_at_mut(hdim * d);
        let (g_b1, rest) = rest.split_at_mut(hdim);
        let (g_w2, g_b2) = rest.split_at_mut(hdim);
        let m = rows.len() as f64;
        let mut loss = 0.0;
        let mut h = vec![0.0; hdim];
        for &i in rows {
            let row = x.row(i);
            self.hidden_layer(row, &mut h);
            let z = dot(&self.w2, &h) + self.b2;
            let target = f64::from(y[i]);
            loss += softplus(z) - target * z;
            let dz = (sigmoid(z) - target) / m;
            g_b2[0] += dz;
            for j in 0..hdim {
                g_w2[j] += dz * h[j];
                if h[j] > 0.0 {
                    let dh = dz * self.w2[j];
                    g_b1[j] += dh;
                    for (g, xv) in g_w1[j * d..(j + 1) * d].iter_mut().zip(row) {
                        *g += dh * xv;
                    }
                }
            }
        }
        loss /= m;
        if self.l2 > 0.0 {
            let sq: f64 = self.w1.iter().chain(&self.w2).map(|w| w * w).sum();
            loss += 0.5 * self.l2 * sq;
            let (g_w1, rest) = grad.split_at_mut(hdim * d);
            for (g, w) in g_w1.iter_mut().zip(&self.w1) {
                *g += self.l2 * w;
            }
            for (g, w) in rest[hdim..2 * hdim].iter_mut().zip(&self.w2) {
                *g += self.l2 * w;
            }
        }
        (loss, grad)
    }

    pub fn fit(x: &Matrix, y: &[u8], params: &MlpParams, seed: u64) -> Mlp {
        let mut net = Mlp::init(x.ncols(), params.hidden, rng::derive(seed, &[0]));
        net.l2 = params.l2;
        let mut r = rng::stream(seed, &[1]);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut p = net.flat_params();
        for _ in 0..params.epochs {
            order.shuffle(&mut r);
            for batch in order.chunks(params.batch_size.max(1)) {
                let (_, g) = net.loss_and_gradient(x, y, batch);
                for (pi, gi) in p.iter_mut().zip(&g) {
                    *pi -= params.learning_rate * gi;
                }
                net.set_flat_params(&p);
            }
        }
        net
    }
}
