//! Binary regression trees grown by greedy variance reduction.
//!
//! On 0/1 targets the squared-error reduction is proportional to the Gini
//! reduction, so the same tree serves the classification toy learner.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_split: usize,
    /// A split must remove at least this fraction of the root's squared error.
    pub cp: f64,
    /// Features tried per split; `None` tries all.
    pub mtry: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 20,
            min_leaf: 5,
            min_split: 10,
            cp: 0.0,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
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
    nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: TreeParams,
    root_sse: f64,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn sum_sq(y: &[f64], idx: &[usize]) -> (f64, f64) {
    idx.iter().fold((0.0, 0.0), |(s, q), &i| (s + y[i], q + y[i] * y[i]))
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut Option<&mut StreamRng>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(idx),
        });
        let n = idx.len();
        if depth >= self.params.max_depth
            || n < self.params.min_split
            || n < 2 * self.params.min_leaf.max(1)
        {
            return id;
        }
        let Some(best) = self.best_split(idx, rng) else {
            return id;
        };
        let (feature, threshold) = (best.feature, best.threshold);
        let mut split = 0;
        for i in 0..n {
            if self.x.get(idx[i], feature) <= threshold {
                idx.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, idx: &[usize], rng: &mut Option<&mut StreamRng>) -> Option<BestSplit> {
        let cols = self.x.cols();
        let features: Vec<usize> = match (self.params.mtry, rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < cols => {
                let mut f = index::sample(rng, cols, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..cols).collect(),
        };
        let n = idx.len();
        let (total, total_sq) = sum_sq(self.y, idx);
        let parent_sse = total_sq - total * total / n as f64;
        if parent_sse <= 1e-14 * total_sq.abs().max(1.0) {
            return None;
        }
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        for f in features {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                left_sum += self.y[order[pos]];
                let n_left = pos + 1;
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let a = self.x.get(order[pos], f);
                let b = self.x.get(order[pos + 1], f);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64
                    - total * total / n as f64;
                if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    let mid = a + (b - a) / 2.0;
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold: if mid >= b { a } else { mid },
                    });
                }
            }
        }
        let best = best?;
        let floor = (self.params.cp * self.root_sse).max(1e-12 * parent_sse.max(1e-300));
        (best.gain > 0.0 && best.gain >= floor).then_some(best)
    }
}

impl RegressionTree {
    /// Grows a tree on the rows `idx` (repeats allowed, as in a bootstrap).
    pub fn fit(
        x: &Matrix,
        y: &[f64],
        idx: &[usize],
        params: TreeParams,
        mut rng: Option<&mut StreamRng>,
    ) -> Self {
        assert!(!idx.is_empty(), "tree needs at least one row");
        let (s, q) = sum_sq(y, idx);
        let root_sse = q - s * s / idx.len() as f64;
        let mut b = Builder {
            x,
            y,
            params,
            root_sse,
            nodes: Vec::new(),
        };
        let mut rows = idx.to_vec();
        b.grow(&mut rows, 0, &mut rng);
        RegressionTree { nodes: b.nodes }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_data() -> (Matrix, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 1.0 } else { 5.0 }).collect();
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn finds_the_step() {
        let (x, y) = step_data();
        let idx: Vec<usize> = (0..40).collect();
        let t = RegressionTree::fit(&x, &y, &idx, TreeParams::default(), None);
        assert_eq!(t.leaf_count(), 2);
        assert_eq!(t.predict(&[3.0, 0.0]), 1.0);
        assert_eq!(t.predict(&[33.0, 0.0]), 5.0);
        assert_eq!(t.predict(&[19.4, 0.0]), 1.0);
    }

    #[test]
    fn respects_depth_and_leaf_limits() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| (i as f64).sin()).collect();
        let x = Matrix::from_rows(&rows);
        let idx: Vec<usize> = (0..64).collect();
        let params = TreeParams { max_depth: 3, min_leaf: 1, min_split: 2, ..Default::default() };
        let t = RegressionTree::fit(&x, &y, &idx, params, None);
        assert!(t.depth() <= 3);
        let params = TreeParams { max_depth: 30, min_leaf: 16, min_split: 2, ..Default::default() };
        let t = RegressionTree::fit(&x, &y, &idx, params, None);
        assert!(t.leaf_count() <= 4);
    }

    #[test]
    fn cp_blocks_weak_splits() {
        let (x, mut y) = step_data();
        y.iter_mut().enumerate().for_each(|(i, v)| *v = if i % 2 == 0 { 0.0 } else { 0.01 } + if i < 20 { 0.0 } else { 1.0 });
        let idx: Vec<usize> = (0..40).collect();
        let p = TreeParams { min_leaf: 1, min_split: 2, cp: 0.5, ..Default::default() };
        let t = RegressionTree::fit(&x, &y, &idx, p, None);
        assert_eq!(t.leaf_count(), 2);
    }

    #[test]
    fn constant_target_is_single_leaf() {
        let (x, _) = step_data();
        let y = vec![2.5; 40];
        let idx: Vec<usize> = (0..40).collect();
        let t = RegressionTree::fit(&x, &y, &idx, TreeParams::default(), None);
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.predict(&[0.0, 0.0]), 2.5);
    }
}
