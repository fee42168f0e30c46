//! CART regression trees with variance-reduction splits, shared by gradient
//! boosting and the random forest.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values. The best split maximizes the squared-error reduction; ties go to
//! the lower feature index, then the lower threshold. Any impure node with a
//! legal split is split, even at zero gain, so unrestricted trees separate
//! every pair of distinct feature vectors.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or `min_leaf` blocks every split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub features_per_split: Option<usize>,
}

/// Column-major view of the training features.
pub struct Columns<'a> {
    pub cols: &'a [Vec<f64>],
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            let key = |c: &Candidate| (c.feature, c.threshold);
            if y.gain > x.gain || (y.gain == x.gain && key(&y) < key(&x)) {
                Some(y)
            } else {
                Some(x)
            }
        }
    }
}

fn best_split_on(col: &[f64], rows: &[usize], y: &[f64], feature: usize, min_leaf: usize) -> Option<Candidate> {
    let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| (col[i], y[i])).collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pairs.len();
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let base = total * total / n as f64;
    let mut left_sum = 0.0;
    let mut best: Option<Candidate> = None;
    for k in 0..n - 1 {
        left_sum += pairs[k].1;
        let (lo, hi) = (pairs[k].0, pairs[k + 1].0);
        let n_left = k + 1;
        if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let right_sum = total - left_sum;
        let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64 - base;
        let threshold = lo + (hi - lo) / 2.0;
        let c = Candidate {
            gain: gain.max(0.0),
            feature,
            threshold,
        };
        if best.is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    best
}

impl RegressionTree {
    /// Grows a tree on `rows` (duplicates allowed, e.g. a bootstrap sample).
    pub fn fit(x: &Columns<'_>, y: &[f64], rows: &[usize], params: &TreeParams, rng: &mut Rng) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        tree.grow(x, y, rows.to_vec(), 0, params, rng);
        tree
    }

    fn grow(&mut self, x: &Columns<'_>, y: &[f64], rows: Vec<usize>, depth: usize, params: &TreeParams, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });

        let pure = rows.iter().all(|&i| y[i] == y[rows[0]]);
        let depth_ok = params.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_ok || rows.len() < 2 * params.min_leaf.max(1) {
            return id;
        }
        let n_features = x.cols.len();
        let features: Vec<usize> = match params.features_per_split {
            Some(k) if k < n_features => {
                let mut f = sample(rng, n_features, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n_features).collect(),
        };
        let best = features
            .par_iter()
            .map(|&f| best_split_on(&x.cols[f], &rows, y, f, params.min_leaf.max(1)))
            .reduce(|| None, better);
        let Some(best) = best else {
            return id;
        };
        let col = &x.cols[best.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= best.threshold);
        let left = self.grow(x, y, l, depth + 1, params, rng);
        let right = self.grow(x, y, r, depth + 1, params, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Transposes a row-major matrix into columns.
pub fn columns_of(x: &[f64], p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|j| x.chunks_exact(p).map(|r| r[j]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn grow(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> RegressionTree {
        let p = x[0].len();
        let flat: Vec<f64> = x.iter().flatten().copied().collect();
        let cols = columns_of(&flat, p);
        let rows: Vec<usize> = (0..y.len()).collect();
        RegressionTree::fit(&Columns { cols: &cols }, y, &rows, &params, &mut seed::rng(0))
    }

    const FULL: TreeParams = TreeParams {
        max_depth: None,
        min_leaf: 1,
        features_per_split: None,
    };

    #[test]
    fn single_split_on_two_points() {
        let t = grow(&[vec![0.0], vec![1.0]], &[0.0, 1.0], FULL);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict_row(&[0.0]), 0.0);
        assert_eq!(t.predict_row(&[1.0]), 1.0);
        assert!(matches!(t.nodes[0], Node::Split { threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn xor_is_separated_despite_zero_first_gain() {
        let x = [vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = [0.0, 0.0, 1.0, 1.0];
        let t = grow(&x, &y, FULL);
        for (r, &v) in x.iter().zip(&y) {
            assert_eq!(t.predict_row(r), v);
        }
    }

    #[test]
    fn depth_and_leaf_limits() {
        let x: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..16).map(|i| (i * i) as f64).collect();
        let t = grow(&x, &y, TreeParams { max_depth: Some(2), ..FULL });
        assert!(t.depth() <= 2);
        let t = grow(&x, &y, TreeParams { min_leaf: 5, ..FULL });
        let mut counts = std::collections::HashMap::new();
        for r in &x {
            *counts.entry(t.predict_row(r).to_bits()).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 5));
    }

    #[test]
    fn tie_prefers_lower_feature() {
        // Both columns split the data identically.
        let x = [vec![0.0, 10.0], vec![1.0, 11.0]];
        let t = grow(&x, &[0.0, 1.0], FULL);
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }
}
