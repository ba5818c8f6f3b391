//! Gradient-boosted regression trees under logistic loss.
//!
//! Splits are exact greedy over the distinct values of each feature (up to
//! `max_bins` candidate thresholds, placed at midpoints between adjacent
//! distinct values). Leaves take the Newton step `-G / (H + lambda)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LiftError;
use crate::seed::{rng_for, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Row fraction drawn (Bernoulli) for each tree.
    pub subsample: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_split_gain: f64,
    pub max_bins: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            subsample: 1.0,
            min_child_weight: 1.0,
            lambda: 1.0,
            min_split_gain: 0.0,
            max_bins: 256,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<(), LiftError> {
        let bad = |m: &str| Err(LiftError::Config(m.into()));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        if !(self.min_child_weight >= 0.0 && self.lambda >= 0.0 && self.min_split_gain >= 0.0) {
            return bad("min_child_weight, lambda and min_split_gain must be non-negative");
        }
        if self.max_bins < 2 {
            return bad("max_bins must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
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
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub n_features: usize,
    /// Initial log-odds.
    pub base_score: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    /// Raw log-odds.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Candidate thresholds of one feature and the binned column.
struct Column {
    edges: Vec<f64>,
    bins: Vec<u16>,
}

fn bin_column(values: impl Iterator<Item = f64> + Clone, max_bins: usize) -> Column {
    let mut distinct: Vec<f64> = values.clone().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut edges: Vec<f64> = distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if edges.len() >= max_bins {
        let m = edges.len();
        let keep = max_bins - 1;
        edges = (0..keep).map(|k| edges[(k * m) / keep]).collect();
        edges.dedup();
    }
    let bins = values.map(|x| edges.partition_point(|&e| e < x) as u16).collect();
    Column { edges, bins }
}

struct Builder<'a> {
    columns: &'a [Column],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl Builder<'_> {
    fn leaf(&mut self, g: f64, h: f64) -> usize {
        let value = -g / (h + self.params.lambda) * self.params.learning_rate;
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: &[u32], depth: usize) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r as usize], h + self.hess[r as usize]));
        if depth >= self.params.max_depth || rows.len() < 2 {
            return self.leaf(g, h);
        }
        let lambda = self.params.lambda;
        let parent = g * g / (h + lambda);
        let mut best: Option<BestSplit> = None;
        let mut hist_g = Vec::new();
        let mut hist_h = Vec::new();
        for (f, col) in self.columns.iter().enumerate() {
            if col.edges.is_empty() {
                continue;
            }
            let nb = col.edges.len() + 1;
            hist_g.clear();
            hist_g.resize(nb, 0.0);
            hist_h.clear();
            hist_h.resize(nb, 0.0);
            for &r in rows {
                let b = col.bins[r as usize] as usize;
                hist_g[b] += self.grad[r as usize];
                hist_h[b] += self.hess[r as usize];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                gl += hist_g[b];
                hl += hist_h[b];
                let (gr, hr) = (g - gl, h - hl);
                if hl <= 0.0 || hr <= 0.0 || hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent);
                if gain > self.params.min_split_gain && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    best = Some(BestSplit { gain, feature: f, bin: b });
                }
            }
        }
        let Some(split) = best else { return self.leaf(g, h) };
        let col = &self.columns[split.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.iter().partition(|&&r| (col.bins[r as usize] as usize) <= split.bin);
        if left_rows.is_empty() || right_rows.is_empty() {
            return self.leaf(g, h);
        }
        let threshold = col.edges[split.bin];
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[at] = Node::Split { feature: split.feature, threshold, left, right };
        at
    }
}

/// Fit a boosted ensemble. `weights` default to 1; a weight of `k` behaves
/// like `k` copies of the row. Deterministic for a given `seed`.
pub fn train_gbdt(
    rows: &[&[f64]],
    labels: &[bool],
    weights: Option<&[f64]>,
    params: &GbdtParams,
    seed: u64,
) -> Result<GbdtModel, LiftError> {
    params.validate()?;
    let n = rows.len();
    if n == 0 {
        return Err(LiftError::EmptySamples);
    }
    if labels.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(LiftError::Config("rows, labels and weights differ in length".into()));
    }
    let n_features = rows[0].len();
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(LiftError::Config("rows differ in feature count".into()));
    }
    let ones = vec![1.0; n];
    let w = weights.unwrap_or(&ones);
    if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(LiftError::Config("sample weights must be finite and non-negative".into()));
    }
    let total: f64 = w.iter().sum();
    let positive: f64 = labels.iter().zip(w).filter(|(l, _)| **l).map(|(_, w)| w).sum();
    if positive <= 0.0 || positive >= total {
        return Err(LiftError::SingleClass);
    }
    let mean = positive / total;
    let base_score = (mean / (1.0 - mean)).ln();

    let columns: Vec<Column> =
        (0..n_features).map(|f| bin_column(rows.iter().map(move |r| r[f]), params.max_bins)).collect();
    let y: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
    let mut score = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let all: Vec<u32> = (0..n as u32).filter(|&i| w[i as usize] > 0.0).collect();

    for t in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(score[i]);
            grad[i] = w[i] * (p - y[i]);
            hess[i] = w[i] * p * (1.0 - p);
        }
        let rows_t: Vec<u32> = if params.subsample < 1.0 {
            let mut rng = rng_for(seed, streams::GBDT, t as u64);
            all.iter().copied().filter(|_| rng.random::<f64>() < params.subsample).collect()
        } else {
            all.clone()
        };
        let mut builder = Builder { columns: &columns, grad: &grad, hess: &hess, params, nodes: Vec::new() };
        builder.grow(&rows_t, 0);
        let tree = Tree { nodes: builder.nodes };
        for (i, s) in score.iter_mut().enumerate() {
            *s += tree.predict(rows[i]);
        }
        trees.push(tree);
    }
    Ok(GbdtModel { n_features, base_score, trees })
}
