//! Monte-Carlo replay of the two-DSP market: each user sends one request,
//! both DSPs bid, the auction decides who shows the ad, and actions are
//! drawn from the ground truth. Used to cross-check the exact formulas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{realize_action, WorldError};
use crate::auction::run_auction;
use crate::market::{BidderId, GroundTruthUser, Money};
use crate::seed::{derive_seed, rng_for, streams};

/// Ratio-of-means estimate with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl RatioEstimate {
    fn from_trials(num: &[f64], den: &[f64]) -> RatioEstimate {
        let n = num.len() as f64;
        let sum_den: f64 = den.iter().sum();
        let r = num.iter().sum::<f64>() / sum_den;
        let mean_den = sum_den / n;
        let ss: f64 = num.iter().zip(den).map(|(x, y)| (x - r * y).powi(2)).sum();
        let var = ss / (n - 1.0) / n;
        RatioEstimate { mean: r, std_error: var.sqrt() / mean_den }
    }

    /// Whether `exact` lies within `k` standard errors.
    pub fn agrees_with(&self, exact: f64, k: f64) -> bool {
        (self.mean - exact).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoDspEstimate {
    pub trials: usize,
    pub a1: RatioEstimate,
    pub a2: RatioEstimate,
    pub c1: RatioEstimate,
    pub c2: RatioEstimate,
}

/// Replay the market `trials` times. `attribution`, when given, is the
/// probability that a winner's action is credited to it (rational-bidder
/// setting); otherwise every action after a win is credited (last touch).
/// Costs are clearing prices in currency units.
pub fn simulate_two_dsp(
    population: &[GroundTruthUser],
    dsp1_bids: &[Money],
    dsp2_bids: &[Money],
    attribution: Option<&[f64]>,
    trials: usize,
    seed: u64,
) -> Result<TwoDspEstimate, WorldError> {
    let n = population.len();
    if dsp1_bids.len() != n || dsp2_bids.len() != n || attribution.is_some_and(|a| a.len() != n) {
        return Err(WorldError::Config("bid and attribution vectors must match the population".into()));
    }
    if trials < 2 {
        return Err(WorldError::Config("need at least two trials".into()));
    }

    let mut winner = Vec::with_capacity(n);
    let (mut cost1, mut cost2) = (0.0, 0.0);
    for i in 0..n {
        let bids = [(BidderId::DSP1, dsp1_bids[i]), (BidderId::DSP2, dsp2_bids[i])];
        let r = run_auction(&bids, Money::ZERO, derive_seed(seed, streams::AUCTION, i as u64))
            .map_err(|e| WorldError::Config(e.to_string()))?;
        match r.winner {
            Some(BidderId::DSP1) => cost1 += r.clearing_price.to_currency(),
            Some(BidderId::DSP2) => cost2 += r.clearing_price.to_currency(),
            _ => {}
        }
        winner.push(r.winner);
    }

    let mut t1 = Vec::with_capacity(trials);
    let mut d1 = Vec::with_capacity(trials);
    let mut t2 = Vec::with_capacity(trials);
    let mut d2 = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = rng_for(seed, streams::MONTE_CARLO, t as u64);
        let (mut tot1, mut att1, mut tot2, mut att2) = (0u32, 0u32, 0u32, 0u32);
        for (i, u) in population.iter().enumerate() {
            let credit = attribution.map_or(1.0, |a| a[i]);
            // Only DSP1 bidding: its wins are exposed.
            let exposed = winner[i] == Some(BidderId::DSP1);
            if realize_action(u, exposed, &mut rng) {
                tot1 += 1;
                if exposed && (attribution.is_none() || rng.random::<f64>() < credit) {
                    att1 += 1;
                }
            }
            // Only DSP2 bidding.
            let exposed = winner[i] == Some(BidderId::DSP2);
            if realize_action(u, exposed, &mut rng) {
                tot2 += 1;
                if exposed && (attribution.is_none() || rng.random::<f64>() < credit) {
                    att2 += 1;
                }
            }
        }
        t1.push(tot1 as f64);
        d1.push(att1 as f64);
        t2.push(tot2 as f64);
        d2.push(att2 as f64);
    }

    let flat1 = vec![cost1; trials];
    let flat2 = vec![cost2; trials];
    Ok(TwoDspEstimate {
        trials,
        a1: RatioEstimate::from_trials(&t1, &d1),
        a2: RatioEstimate::from_trials(&t2, &d2),
        c1: RatioEstimate::from_trials(&flat1, &d1),
        c2: RatioEstimate::from_trials(&flat2, &d2),
    })
}
