//! Rank statistics and the decile calibration table.

use serde::{Deserialize, Serialize};

/// Ranks starting at 1; ties share their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation; zero when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Area under the ROC curve via the rank-sum statistic.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let ranks = average_ranks(scores);
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileRow {
    pub decile: usize,
    pub n: usize,
    pub weight: f64,
    pub mean_predicted: f64,
    pub empirical_rate: f64,
    /// Binomial standard error of the empirical rate if the predictions
    /// were exact.
    pub std_error: f64,
    /// `|predicted - empirical| <= 0.1 * predicted + 2 * std_error`.
    pub within_tolerance: bool,
}

/// Equal-count deciles by predicted rate. Weights let downsampled
/// negatives count at their original frequency; the standard error uses
/// the Kish effective sample size. Measuring the error at the predicted
/// rate keeps it positive in deciles with no positives.
pub fn decile_table(predicted: &[f64], labels: &[bool], weights: &[f64]) -> Vec<DecileRow> {
    let n = predicted.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));
    (0..10)
        .filter_map(|d| {
            let (lo, hi) = (d * n / 10, (d + 1) * n / 10);
            if lo == hi {
                return None;
            }
            let idx = &order[lo..hi];
            let w: f64 = idx.iter().map(|&i| weights[i]).sum();
            let w2: f64 = idx.iter().map(|&i| weights[i] * weights[i]).sum();
            let mean_predicted = idx.iter().map(|&i| weights[i] * predicted[i]).sum::<f64>() / w;
            // `+ 0.0` turns the empty sum's -0 into 0.
            let empirical_rate = idx.iter().filter(|&&i| labels[i]).map(|&i| weights[i]).sum::<f64>() / w + 0.0;
            let n_eff = w * w / w2;
            let std_error = (mean_predicted * (1.0 - mean_predicted) / n_eff).sqrt();
            let within_tolerance = (mean_predicted - empirical_rate).abs() <= 0.1 * mean_predicted + 2.0 * std_error;
            Some(DecileRow {
                decile: d + 1,
                n: idx.len(),
                weight: w,
                mean_predicted,
                empirical_rate,
                std_error,
                within_tolerance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_limits() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 30.0, 41.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&a, &[1.0; 4]), 0.0);
    }

    #[test]
    fn auc_by_pair_counting() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.4];
        let l = [false, false, true, true, true];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if l[i] && !l[j] {
                    pairs += 1.0;
                    wins += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        assert!((auc(&s, &l).unwrap() - wins / pairs).abs() < 1e-12);
        assert_eq!(auc(&s, &[true; 5]), None);
    }

    #[test]
    fn perfect_calibration_passes() {
        let predicted: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 0.25 } else { 0.75 }).collect();
        let labels: Vec<bool> = (0..1000).map(|i| if i % 2 == 0 { i % 8 == 0 } else { i % 8 != 7 }).collect();
        let rows = decile_table(&predicted, &labels, &vec![1.0; 1000]);
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.within_tolerance), "{rows:?}");
    }
}
