//! Training-split rebalancing: SMOTE, ADASYN and random undersampling.
//!
//! Oversamplers keep every original row in place and append synthetic
//! minority rows at the end. Undersampling keeps the surviving rows in their
//! original order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Smote,
    Adasyn,
    Undersample,
    None,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Smote => "smote",
            Strategy::Adasyn => "adasyn",
            Strategy::Undersample => "undersample",
            Strategy::None => "none",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            Strategy::Smote,
            Strategy::Adasyn,
            Strategy::Undersample,
            Strategy::None,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::invalid(format!("unknown balancing strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleSpec {
    pub strategy: Strategy,
    pub k_neighbors: usize,
    /// Minority:majority ratio after resampling.
    pub target: f64,
    pub seed: u64,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        ResampleSpec {
            strategy: Strategy::Smote,
            k_neighbors: 5,
            target: 1.0,
            seed: 0,
        }
    }
}

impl ResampleSpec {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        ResampleSpec {
            strategy,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 {
            return Err(Error::invalid("k_neighbors must be at least 1"));
        }
        if !(self.target > 0.0 && self.target <= 1.0) {
            return Err(Error::invalid(format!(
                "target ratio {} outside (0, 1]",
                self.target
            )));
        }
        Ok(())
    }
}

/// Rows of `x` ordered by distance to `x[query]`, ties by lower index.
fn nearest(x: &Matrix, query: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let q = x.row(query);
    let mut d: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != query)
        .map(|&c| (squared_distance(q, x.row(c)), c))
        .collect();
    d.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    d.truncate(k);
    d.into_iter().map(|(_, c)| c).collect()
}

/// For each minority row, its `k` nearest minority neighbours (by row index).
pub fn minority_neighbors(x: &Matrix, minority: &[usize], k: usize) -> Vec<Vec<usize>> {
    minority
        .iter()
        .map(|&i| nearest(x, i, minority, k))
        .collect()
}

/// Splits `total` across points proportionally to `weights` (largest
/// remainder; remainder ties resolved by a seeded shuffle). Sums to `total`.
fn allocate(weights: &[f64], total: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let n = weights.len();
    let uniform = weights.iter().all(|&w| w == weights[0]);
    let shares: Vec<f64> = if sum > 0.0 && !uniform {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / n as f64; n]
    };
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    // stable sort keeps the shuffled order among equal remainders
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap_or(Ordering::Equal)
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn class_counts(y: &[u8]) -> (usize, usize) {
    let pos = y.iter().filter(|&&l| l == 1).count();
    (y.len() - pos, pos)
}

/// Rebalances a training split according to `spec`.
pub fn rebalance(x: &Matrix, y: &[u8], spec: &ResampleSpec) -> Result<(Matrix, Vec<u8>)> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("cannot rebalance an empty training set"));
    }
    let (n0, n1) = class_counts(y);
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let minority_label: u8 = if n1 <= n0 { 1 } else { 0 };
    let (n_min, n_maj) = (n0.min(n1), n0.max(n1));
    let minority: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_label).collect();
    let mut rng = rng::from_seed(spec.seed);

    match spec.strategy {
        Strategy::None => Ok((x.clone(), y.to_vec())),
        Strategy::Undersample => {
            let keep_maj = ((n_min as f64 / spec.target).round() as usize).min(n_maj);
            let majority: Vec<usize> = (0..y.len()).filter(|&i| y[i] != minority_label).collect();
            let mut keep = vec![false; y.len()];
            for &i in &minority {
                keep[i] = true;
            }
            for j in sample(&mut rng, n_maj, keep_maj) {
                keep[majority[j]] = true;
            }
            let rows: Vec<usize> = (0..y.len()).filter(|&i| keep[i]).collect();
            let labels = rows.iter().map(|&i| y[i]).collect();
            Ok((x.select_rows(&rows), labels))
        }
        Strategy::Smote | Strategy::Adasyn => {
            let wanted = ((spec.target * n_maj as f64).round() as usize).max(n_min);
            let n_new = wanted - n_min;
            if n_new == 0 {
                return Ok((x.clone(), y.to_vec()));
            }
            if n_min < 2 {
                return Err(Error::invalid(
                    "oversampling needs at least two minority samples",
                ));
            }
            let k = spec.k_neighbors.min(n_min - 1);
            let neighbors = minority_neighbors(x, &minority, k);

            let weights: Vec<f64> = if spec.strategy == Strategy::Adasyn {
                let all: Vec<usize> = (0..y.len()).collect();
                minority
                    .iter()
                    .map(|&i| {
                        let nn = nearest(x, i, &all, spec.k_neighbors);
                        let maj = nn.iter().filter(|&&j| y[j] != minority_label).count();
                        maj as f64 / nn.len().max(1) as f64
                    })
                    .collect()
            } else {
                vec![1.0; n_min]
            };
            let per_point = allocate(&weights, n_new, &mut rng);

            let mut out = x.clone();
            let mut labels = y.to_vec();
            let mut synthetic = vec![0.0; x.ncols()];
            for (m, &count) in per_point.iter().enumerate() {
                let base = x.row(minority[m]);
                for _ in 0..count {
                    let nb = x.row(neighbors[m][rng.random_range(0..k)]);
                    let lambda: f64 = rng.random();
                    for ((s, &a), &b) in synthetic.iter_mut().zip(base).zip(nb) {
                        *s = a + lambda * (b - a);
                    }
                    out.push_row(&synthetic)?;
                    labels.push(minority_label);
                }
            }
            Ok((out, labels))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imbalanced(n0: usize, n1: usize) -> (Matrix, Vec<u8>) {
        let mut r = rng::from_seed(9);
        let rows: Vec<Vec<f64>> = (0..n0 + n1)
            .map(|_| (0..3).map(|_| r.random::<f64>()).collect())
            .collect();
        let y = (0..n0 + n1).map(|i| u8::from(i >= n0)).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn two_point_smote_on_segment() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0]])
            .unwrap();
        let y = vec![1, 1, 0, 0, 0];
        let spec = ResampleSpec {
            strategy: Strategy::Smote,
            k_neighbors: 1,
            target: 1.0,
            seed: 4,
        };
        let (xo, yo) = rebalance(&x, &y, &spec).unwrap();
        assert_eq!(class_counts(&yo), (3, 3));
        let p = xo.row(5);
        assert_eq!(p[0], p[1]);
        assert!((0.0..=1.0).contains(&p[0]));
    }

    #[test]
    fn smote_counts() {
        let (x, y) = imbalanced(90, 10);
        let (xo, yo) = rebalance(&x, &y, &ResampleSpec::new(Strategy::Smote, 1)).unwrap();
        assert_eq!(class_counts(&yo), (90, 90));
        assert_eq!(xo.nrows(), 180);
        // originals untouched and first
        assert_eq!(&xo.as_slice()[..300], x.as_slice());
    }

    #[test]
    fn undersample_counts() {
        let (x, y) = imbalanced(90, 10);
        let (xo, yo) = rebalance(&x, &y, &ResampleSpec::new(Strategy::Undersample, 1)).unwrap();
        assert_eq!(class_counts(&yo), (10, 10));
        for r in xo.rows() {
            assert!(x.rows().any(|o| o == r));
        }
    }

    #[test]
    fn partial_target() {
        let (x, y) = imbalanced(90, 10);
        let spec = ResampleSpec {
            target: 0.5,
            ..ResampleSpec::new(Strategy::Adasyn, 2)
        };
        let (_, yo) = rebalance(&x, &y, &spec).unwrap();
        assert_eq!(class_counts(&yo), (90, 45));
        let spec = ResampleSpec {
            target: 0.5,
            ..ResampleSpec::new(Strategy::Undersample, 2)
        };
        let (_, yo) = rebalance(&x, &y, &spec).unwrap();
        assert_eq!(class_counts(&yo), (20, 10));
    }

    #[test]
    fn errors() {
        let (x, _) = imbalanced(5, 0);
        assert!(matches!(
            rebalance(&x, &[0; 5], &ResampleSpec::default()),
            Err(Error::SingleClass)
        ));
        assert!(rebalance(&Matrix::zeros(0, 2), &[], &ResampleSpec::default()).is_err());
        let bad = ResampleSpec {
            target: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let (x, y) = imbalanced(9, 1);
        assert!(rebalance(&x, &y, &ResampleSpec::default()).is_err());
    }

    #[test]
    fn label_zero_minority() {
        let (x, y) = imbalanced(10, 30);
        let (_, yo) = rebalance(&x, &y, &ResampleSpec::new(Strategy::Smote, 3)).unwrap();
        assert_eq!(class_counts(&yo), (30, 30));
    }

    #[test]
    fn allocation_sums_exactly() {
        let mut r = rng::from_seed(1);
        let a = allocate(&[0.1, 0.7, 0.2, 0.0], 17, &mut r);
        assert_eq!(a.iter().sum::<usize>(), 17);
        assert_eq!(a[3], 0);
        let a = allocate(&[0.0, 0.0, 0.0], 7, &mut r);
        assert_eq!(a.iter().sum::<usize>(), 7);
        assert!(a.iter().all(|&c| c == 2 || c == 3));
    }

    #[test]
    fn neighbor_ties_prefer_lower_index() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [-1.0], [2.0]]).unwrap();
        assert_eq!(nearest(&x, 0, &[0, 1, 2, 3], 2), vec![1, 2]);
    }
}
