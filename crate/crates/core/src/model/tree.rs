//! Binary decision trees stored as a flat node array.
//!
//! Samples with `x[feature] <= threshold` go left. Thresholds sit at the
//! midpoint of two consecutive distinct sorted values.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, n_samples: usize) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value, n_samples }],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    // adjacent floats: the midpoint can round up onto `hi`
    if m >= hi {
        lo
    } else {
        m
    }
}

pub fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Best split found on one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Growth limits shared by both tree kinds.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

/// Best Gini split of `samples` (indices, repeats allowed) on `feature`.
/// Scans thresholds in ascending order and keeps the first maximum.
pub fn best_gini_split(
    x: &Matrix,
    y: &[u8],
    samples: &[usize],
    feature: usize,
    min_leaf: usize,
    buf: &mut Vec<(f64, u8)>,
) -> Option<SplitCandidate> {
    buf.clear();
    buf.extend(samples.iter().map(|&s| (x.get(s, feature), y[s])));
    buf.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = buf.len();
    let total_pos = buf.iter().filter(|p| p.1 == 1).count();
    let parent = gini(total_pos as f64, n as f64);

    let mut best: Option<SplitCandidate> = None;
    let mut left_pos = 0usize;
    for i in 0..n.saturating_sub(1) {
        left_pos += usize::from(buf[i].1);
        if buf[i].0 == buf[i + 1].0 {
            continue;
        }
        let nl = i + 1;
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let child = (nl as f64 / n as f64) * gini(left_pos as f64, nl as f64)
            + (nr as f64 / n as f64) * gini((total_pos - left_pos) as f64, nr as f64);
        let gain = parent - child;
        if best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitCandidate {
                feature,
                threshold: midpoint(buf[i].0, buf[i + 1].0),
                gain,
            });
        }
    }
    best
}

fn is_constant(x: &Matrix, samples: &[usize], feature: usize) -> bool {
    let first = x.get(samples[0], feature);
    samples.iter().all(|&s| x.get(s, feature) == first)
}

/// Grows a CART classification tree with Gini impurity.
///
/// At each node features are visited in a random order until
/// `max_features` non-constant ones have been evaluated; the best split
/// among them wins, ties going to the lowest feature index and then the
/// lowest threshold. Leaves store the positive-class fraction.
pub fn grow_classifier(
    x: &Matrix,
    y: &[u8],
    samples: Vec<usize>,
    limits: Limits,
    max_features: usize,
    rng: &mut Rng,
) -> Tree {
    let d = x.ncols();
    let mut nodes: Vec<Node> = Vec::new();
    let mut buf = Vec::new();
    let mut features: Vec<usize> = (0..d).collect();
    // (node slot, samples, depth)
    let mut stack = vec![(0usize, samples, 0usize)];
    nodes.push(Node::Leaf {
        value: 0.0,
        n_samples: 0,
    });

    while let Some((slot, idx, depth)) = stack.pop() {
        let n = idx.len();
        let pos = idx.iter().filter(|&&s| y[s] == 1).count();
        let leaf = Node::Leaf {
            value: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
            n_samples: n,
        };
        let stop = n < limits.min_samples_split.max(2)
            || n < 2 * limits.min_samples_leaf
            || pos == 0
            || pos == n
            || limits.max_depth.is_some_and(|m| depth >= m);
        if stop {
            nodes[slot] = leaf;
            continue;
        }

        let mut candidates: Vec<SplitCandidate> = Vec::new();
        let mut visited = 0;
        let mut remaining = d;
        while visited < max_features && remaining > 0 {
            let j = rng.random_range(0..remaining);
            remaining -= 1;
            features.swap(j, remaining);
            let f = features[remaining];
            if is_constant(x, &idx, f) {
                continue;
            }
            visited += 1;
            if let Some(c) = best_gini_split(x, y, &idx, f, limits.min_samples_leaf, &mut buf) {
                candidates.push(c);
            }
        }
        let best = candidates.into_iter().reduce(|a, b| {
            if b.gain > a.gain || (b.gain == a.gain && b.feature < a.feature) {
                b
            } else {
                a
            }
        });
        let Some(best) = best else {
            nodes[slot] = leaf;
            continue;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&s| x.get(s, best.feature) <= best.threshold);
        let l = nodes.len();
        nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: 0,
        });
        nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: 0,
        });
        nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: l + 1,
        };
        stack.push((l + 1, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Tree { nodes }
}

/// Column-wise sort orders, computed once per boosting fit.
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.ncols())
            .map(|f| {
                let mut o: Vec<u32> = (0..x.nrows() as u32).collect();
                o.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
                o
            })
            .collect();
        Presorted { order }
    }
}

/// Grows a least-squares regression tree on `residual`, considering every
/// feature. Leaf values are the Newton step `sum(residual) / sum(hessian)`.
pub fn grow_regressor(
    x: &Matrix,
    sorted: &Presorted,
    residual: &[f64],
    hessian: &[f64],
    limits: Limits,
) -> Tree {
    let n_rows = x.nrows();
    // node id of each row; usize::MAX once the row sits in a finished leaf
    let mut member = vec![0usize; n_rows];
    let mut nodes = vec![Node::Leaf {
        value: 0.0,
        n_samples: 0,
    }];
    let mut stack = vec![(0usize, (0..n_rows).collect::<Vec<_>>(), 0usize)];

    while let Some((slot, idx, depth)) = stack.pop() {
        let n = idx.len();
        let sum_r: f64 = idx.iter().map(|&i| residual[i]).sum();
        let sum_h: f64 = idx.iter().map(|&i| hessian[i]).sum();
        let leaf = Node::Leaf {
            value: if sum_h.abs() < 1e-150 {
                0.0
            } else {
                sum_r / sum_h
            },
            n_samples: n,
        };
        if n < limits.min_samples_split.max(2)
            || n < 2 * limits.min_samples_leaf
            || limits.max_depth.is_some_and(|m| depth >= m)
        {
            nodes[slot] = leaf;
            continue;
        }
        for &i in &idx {
            member[i] = slot;
        }

        let parent = sum_r * sum_r / n as f64;
        let mut best: Option<SplitCandidate> = None;
        for (f, order) in sorted.order.iter().enumerate() {
            let mut nl = 0usize;
            let mut sl = 0.0;
            let mut prev: Option<f64> = None;
            for &r in order {
                let r = r as usize;
                if member[r] != slot {
                    continue;
                }
                let v = x.get(r, f);
                if let Some(p) = prev {
                    if v != p && nl >= limits.min_samples_leaf && n - nl >= limits.min_samples_leaf
                    {
                        let sr = sum_r - sl;
                        let gain = sl * sl / nl as f64 + sr * sr / (n - nl) as f64 - parent;
                        if best.is_none_or(|b| gain > b.gain) {
                            best = Some(SplitCandidate {
                                feature: f,
                                threshold: midpoint(p, v),
                                gain,
                            });
                        }
                    }
                }
                nl += 1;
                sl += residual[r];
                prev = Some(v);
            }
        }
        for &i in &idx {
            member[i] = usize::MAX;
        }
        let Some(best) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&s| x.get(s, best.feature) <= best.threshold);
        let l = nodes.len();
        nodes.push(leaf.clone());
        nodes.push(leaf);
        nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: l + 1,
        };
        stack.push((l + 1, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Exhaustive oracle: every feature, every midpoint, Gini decrease.
    fn brute_best(x: &Matrix, y: &[u8], samples: &[usize]) -> f64 {
        let n = samples.len() as f64;
        let pos = samples.iter().filter(|&&s| y[s] == 1).count() as f64;
        let parent = gini(pos, n);
        let mut best = f64::NEG_INFINITY;
        for f in 0..x.ncols() {
            let mut vals: Vec<f64> = samples.iter().map(|&s| x.get(s, f)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (mut nl, mut pl, mut nr, mut pr) = (0.0, 0.0, 0.0, 0.0);
                for &s in samples {
                    if x.get(s, f) <= t {
                        nl += 1.0;
                        pl += f64::from(y[s]);
                    } else {
                        nr += 1.0;
                        pr += f64::from(y[s]);
                    }
                }
                let g = parent - nl / n * gini(pl, nl) - nr / n * gini(pr, nr);
                best = best.max(g);
            }
        }
        best
    }

    #[test]
    fn root_split_maximizes_gini_decrease() {
        let mut r = rng::from_seed(11);
        for trial in 0..300 {
            let n = 3 + trial % 6;
            let d = 1 + trial % 3;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| f64::from(r.random_range(0..4u8))).collect())
                .collect();
            let y: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
            let x = Matrix::from_rows(&rows).unwrap();
            let samples: Vec<usize> = (0..n).collect();
            let mut buf = Vec::new();
            let best = (0..d)
                .filter_map(|f| best_gini_split(&x, &y, &samples, f, 1, &mut buf))
                .map(|c| c.gain)
                .fold(f64::NEG_INFINITY, f64::max);
            let oracle = brute_best(&x, &y, &samples);
            if oracle.is_finite() {
                assert!(
                    (best - oracle).abs() < 1e-12,
                    "trial {trial}: {best} vs {oracle}"
                );
            } else {
                assert!(best == f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn ties_pick_lowest_feature_then_threshold() {
        // feature 0 and 1 are identical; both split points of feature 0 tie
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        let y = [0, 1, 1, 0];
        let limits = Limits {
            max_depth: Some(1),
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        for seed in 0..20 {
            let mut r = rng::from_seed(seed);
            let t = grow_classifier(&x, &y, (0..4).collect(), limits, 2, &mut r);
            match t.nodes[0] {
                Node::Split {
                    feature, threshold, ..
                } => {
                    assert_eq!(feature, 0);
                    assert_eq!(threshold, 0.5);
                }
                _ => panic!("expected a split"),
            }
        }
    }

    #[test]
    fn separable_points_are_fit_exactly() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [3.0, 4.0], [4.0, 3.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let limits = Limits {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let t = grow_classifier(&x, &y, (0..4).collect(), limits, 1, &mut rng::from_seed(5));
        for (i, &l) in y.iter().enumerate() {
            assert_eq!(t.predict_row(x.row(i)), f64::from(l));
        }
    }

    #[test]
    fn constant_features_give_prior_leaf() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [1.0], [1.0]]).unwrap();
        let limits = Limits {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let t = grow_classifier(
            &x,
            &[0, 1, 0, 0],
            (0..4).collect(),
            limits,
            1,
            &mut rng::from_seed(1),
        );
        assert_eq!(t.n_nodes(), 1);
        assert_eq!(t.predict_row(&[1.0]), 0.25);
    }

    #[test]
    fn regression_tree_newton_leaves() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let sorted = Presorted::new(&x);
        let residual = [-1.0, -1.0, 2.0, 2.0];
        let hessian = [0.5, 0.5, 0.5, 0.5];
        let limits = Limits {
            max_depth: Some(1),
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let t = grow_regressor(&x, &sorted, &residual, &hessian, limits);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict_row(&[0.2]), -2.0);
        assert_eq!(t.predict_row(&[2.7]), 4.0);
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
    }
}
