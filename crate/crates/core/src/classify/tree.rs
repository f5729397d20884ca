//! CART trees shared by the forest and the booster.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { value } => return value,
            }
        }
    }
}

pub(crate) enum Target<'a> {
    /// Gini impurity; leaves hold class fractions.
    Class { labels: &'a [usize], n_classes: usize },
    /// Squared error on `residual`; leaves hold one Newton step
    /// `sum(residual) / sum(hessian)`.
    Newton { residual: &'a [f64], hessian: &'a [f64] },
}

pub(crate) struct TreeParams {
    pub max_depth: u32,
    /// Features tried per split; `None` means all.
    pub max_features: Option<usize>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    target: Target<'a>,
    params: &'a TreeParams,
    nodes: Vec<Node>,
}

/// Sufficient statistics of a sample set.
#[derive(Clone)]
enum Stats {
    Class(Vec<f64>),
    Reg { n: f64, sum: f64, sum_sq: f64 },
}

impl Stats {
    fn impurity_sum(&self) -> f64 {
        match self {
            // n * gini
            Stats::Class(c) => {
                let n: f64 = c.iter().sum();
                if n == 0.0 {
                    0.0
                } else {
                    n - c.iter().map(|v| v * v).sum::<f64>() / n
                }
            }
            // n * variance
            Stats::Reg { n, sum, sum_sq } => {
                if *n == 0.0 {
                    0.0
                } else {
                    sum_sq - sum * sum / n
                }
            }
        }
    }
}

impl Builder<'_> {
    fn empty_stats(&self) -> Stats {
        match self.target {
            Target::Class { n_classes, .. } => Stats::Class(vec![0.0; n_classes]),
            Target::Newton { .. } => Stats::Reg { n: 0.0, sum: 0.0, sum_sq: 0.0 },
        }
    }

    fn add(&self, stats: &mut Stats, i: usize, sign: f64) {
        match (stats, &self.target) {
            (Stats::Class(c), Target::Class { labels, .. }) => c[labels[i]] += sign,
            (Stats::Reg { n, sum, sum_sq }, Target::Newton { residual, .. }) => {
                *n += sign;
                *sum += sign * residual[i];
                *sum_sq += sign * residual[i] * residual[i];
            }
            _ => unreachable!("stats match target"),
        }
    }

    fn leaf_value(&self, idx: &[usize]) -> Vec<f64> {
        match self.target {
            Target::Class { labels, n_classes } => {
                let mut c = vec![0.0; n_classes];
                for &i in idx {
                    c[labels[i]] += 1.0;
                }
                let n = idx.len().max(1) as f64;
                c.iter().map(|v| v / n).collect()
            }
            Target::Newton { residual, hessian } => {
                let num: f64 = idx.iter().map(|&i| residual[i]).sum();
                let den: f64 = idx.iter().map(|&i| hessian[i]).sum();
                vec![if den.abs() < 1e-12 { 0.0 } else { num / den }]
            }
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: u32, rng: &mut Option<&mut Stream>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(idx) });
        if depth >= self.params.max_depth || idx.len() < 2 {
            return id;
        }
        let mut total = self.empty_stats();
        for &i in idx.iter() {
            self.add(&mut total, i, 1.0);
        }
        let parent = total.impurity_sum();
        if parent <= 1e-12 {
            return id;
        }
        let d = self.x[0].len();
        let features: Vec<usize> = match (self.params.max_features, rng.as_deref_mut()) {
            (Some(m), Some(r)) if m < d => {
                let mut f = sample(r, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = self.empty_stats();
            let mut right = total.clone();
            for k in 0..order.len() - 1 {
                let i = order[k];
                self.add(&mut left, i, 1.0);
                self.add(&mut right, i, -1.0);
                let (a, b) = (self.x[i][f], self.x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let cost = left.impurity_sum() + right.impurity_sum();
                if best.is_none_or(|(c, _, _)| cost < c - 1e-12) {
                    best = Some((cost, f, a + (b - a) / 2.0));
                }
            }
        }
        let Some((cost, feature, threshold)) = best else { return id };
        if parent - cost <= 1e-12 {
            return id;
        }
        let mut l: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][feature] <= threshold).collect();
        let mut r: Vec<usize> = idx.iter().copied().filter(|&i| self.x[i][feature] > threshold).collect();
        let left = self.build(&mut l, depth + 1, rng);
        let right = self.build(&mut r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

pub(crate) fn fit(
    x: &[Vec<f64>],
    idx: &[usize],
    target: Target<'_>,
    params: &TreeParams,
    rng: Option<&mut Stream>,
) -> Tree {
    let mut b = Builder { x, target, params, nodes: Vec::new() };
    let mut idx = idx.to_vec();
    let mut rng = rng;
    b.build(&mut idx, 0, &mut rng);
    Tree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_a_step() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 4)).collect();
        let idx: Vec<usize> = (0..10).collect();
        let t = fit(&x, &idx, Target::Class { labels: &y, n_classes: 2 }, &TreeParams { max_depth: 3, max_features: None }, None);
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.leaf(&[3.4]), &[1.0, 0.0]);
        assert_eq!(t.leaf(&[3.6]), &[0.0, 1.0]);
    }

    #[test]
    fn newton_leaf() {
        let x: Vec<Vec<f64>> = vec![vec![0.0], vec![0.0]];
        let r = [0.5, 0.25];
        let h = [0.25, 0.25];
        let t = fit(&x, &[0, 1], Target::Newton { residual: &r, hessian: &h }, &TreeParams { max_depth: 3, max_features: None }, None);
        assert_eq!(t.leaf(&[0.0]), &[1.5]);
    }
}
