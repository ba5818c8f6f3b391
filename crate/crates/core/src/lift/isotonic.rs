//! Isotonic calibration by pool-adjacent-violators.

use serde::{Deserialize, Serialize};

/// Right-continuous, non-decreasing step function. `values[k]` applies on
/// `[breakpoints[k], breakpoints[k + 1])`; scores below the first
/// breakpoint take `values[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicMap {
    pub fn constant(value: f64) -> Self {
        IsotonicMap { breakpoints: vec![f64::NEG_INFINITY], values: vec![value] }
    }

    pub fn apply(&self, score: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= score);
        self.values[k.saturating_sub(1)]
    }

    /// Monotone and inside `[0, 1]`, with sorted breakpoints.
    pub fn is_valid(&self) -> bool {
        !self.values.is_empty()
            && self.values.len() == self.breakpoints.len()
            && self.values.windows(2).all(|w| w[0] <= w[1])
            && self.breakpoints.windows(2).all(|w| w[0] < w[1])
            && self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    pub map: IsotonicMap,
    /// Set when the holdout had a single class and the map is constant.
    pub degenerate: bool,
}

struct Block {
    start: f64,
    weight: f64,
    sum: f64,
}

/// Least-squares isotonic fit of `labels` against `scores`. Equal scores
/// are pooled first, so the map is a function of the score.
pub fn fit_isotonic(scores: &[f64], labels: &[f64], weights: Option<&[f64]>) -> IsotonicFit {
    assert_eq!(scores.len(), labels.len());
    assert!(!scores.is_empty(), "isotonic fit needs at least one point");
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut blocks: Vec<Block> = Vec::new();
    let mut last_score = f64::NAN;
    for i in order {
        if scores[i] == last_score {
            let b = blocks.last_mut().expect("tie extends a block");
            b.weight += w(i);
            b.sum += w(i) * labels[i];
            continue;
        }
        last_score = scores[i];
        blocks.push(Block { start: scores[i], weight: w(i), sum: w(i) * labels[i] });
    }

    let mut stack: Vec<Block> = Vec::with_capacity(blocks.len());
    for b in blocks {
        stack.push(b);
        while stack.len() >= 2 {
            let n = stack.len();
            let (prev, cur) = (&stack[n - 2], &stack[n - 1]);
            if prev.sum / prev.weight < cur.sum / cur.weight {
                break;
            }
            let cur = stack.pop().expect("two blocks");
            let prev = stack.last_mut().expect("two blocks");
            prev.weight += cur.weight;
            prev.sum += cur.sum;
        }
    }

    let values: Vec<f64> = stack.iter().map(|b| (b.sum / b.weight).clamp(0.0, 1.0)).collect();
    let degenerate = values.len() == 1 && (values[0] == 0.0 || values[0] == 1.0);
    let breakpoints = stack.iter().map(|b| b.start).collect();
    IsotonicFit { map: IsotonicMap { breakpoints, values }, degenerate }
}
