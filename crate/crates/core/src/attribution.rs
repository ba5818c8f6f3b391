//! Attribution models and the exact expected-value accounting behind the
//! value-vs-lift comparison.
//!
//! "Simple" quantities compare a value bidder (`alpha * p`) with a lift
//! bidder (`beta * delta_p`) under last-touch attribution. "Generalized"
//! quantities replace the value bidder by a rational bidder
//! (`CPA * p * a`) whose wins are attributed with probability `a`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bidders::{lift_bid, rational_bid, value_bid};
use crate::market::{AdvertiserId, BidderId, GroundTruthUser, Money, Probability, UserId};
use crate::world::eventlog::{EventKind, EventLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttributionError {
    #[error("{side:?} has no attributed actions; the ratio is undefined")]
    Undefined { side: Side },
    #[error("attribution values ({got}) do not match population size ({expected})")]
    Length { expected: usize, got: usize },
    #[error("p must be > 0 for lift-proportional credit")]
    ZeroAr,
    #[error("event index {0} is not an action")]
    NotAnAction(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Dsp1,
    Dsp2,
    Tie,
}

/// Which DSP wins each user. Stored per user in population order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub users: Vec<UserId>,
    pub sides: Vec<Side>,
}

impl Partition {
    fn from_bids(population: &[GroundTruthUser], mut bids: impl FnMut(&GroundTruthUser) -> (Money, Money)) -> Self {
        let mut users = Vec::with_capacity(population.len());
        let mut sides = Vec::with_capacity(population.len());
        for u in population {
            let (dsp1, dsp2) = bids(u);
            users.push(u.user_id);
            sides.push(match dsp1.cmp(&dsp2) {
                std::cmp::Ordering::Greater => Side::Dsp1,
                std::cmp::Ordering::Less => Side::Dsp2,
                std::cmp::Ordering::Equal => Side::Tie,
            });
        }
        Partition { users, sides }
    }

    fn ids(&self, side: Side) -> Vec<UserId> {
        self.users.iter().zip(&self.sides).filter(|(_, s)| **s == side).map(|(u, _)| *u).collect()
    }

    /// Users won by DSP1.
    pub fn j_set(&self) -> Vec<UserId> {
        self.ids(Side::Dsp1)
    }

    /// Users won by DSP2.
    pub fn k_set(&self) -> Vec<UserId> {
        self.ids(Side::Dsp2)
    }

    pub fn ties(&self) -> Vec<UserId> {
        self.ids(Side::Tie)
    }

    pub fn count(&self, side: Side) -> usize {
        self.sides.iter().filter(|s| **s == side).count()
    }

    pub fn is_all_ties(&self) -> bool {
        !self.sides.is_empty() && self.sides.iter().all(|s| *s == Side::Tie)
    }
}

/// Split users between a value bidder at `alpha` and a lift bidder at
/// `beta`, comparing the emitted (integer) bids.
pub fn partition_users(population: &[GroundTruthUser], alpha: f64, beta: f64) -> Partition {
    Partition::from_bids(population, |u| (value_bid(u.p, alpha), lift_bid(u.delta_p, beta)))
}

/// Split users between a rational bidder (`CPA * p * a`) and a lift bidder.
pub fn generalized_partition(
    population: &[GroundTruthUser],
    a_values: &[f64],
    cpa: Money,
    beta: f64,
) -> Result<Partition, AttributionError> {
    check_len(population, a_values)?;
    let mut a = a_values.iter();
    Ok(Partition::from_bids(population, |u| {
        let ai = Probability::saturating(*a.next().unwrap());
        (rational_bid(u.p, ai, cpa), lift_bid(u.delta_p, beta))
    }))
}

fn check_len(population: &[GroundTruthUser], a_values: &[f64]) -> Result<(), AttributionError> {
    if a_values.len() != population.len() {
        return Err(AttributionError::Length { expected: population.len(), got: a_values.len() });
    }
    Ok(())
}

/// Sums over the population that every quantity is built from.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    p_j: f64,
    p_k: f64,
    dp_j: f64,
    dp_k: f64,
    /// Attributed mass `sum p * a` per side.
    pa_j: f64,
    pa_k: f64,
}

fn sums(population: &[GroundTruthUser], partition: &Partition, a_values: Option<&[f64]>) -> Sums {
    let mut s = Sums::default();
    for (i, (u, side)) in population.iter().zip(&partition.sides).enumerate() {
        let p = u.p.value();
        let a = a_values.map_or(1.0, |a| a[i]);
        match side {
            Side::Dsp1 => {
                s.p_j += p;
                s.dp_j += u.delta_p;
                s.pa_j += p * a;
            }
            Side::Dsp2 => {
                s.p_k += p;
                s.dp_k += u.delta_p;
                s.pa_k += p * a;
            }
            Side::Tie => {}
        }
    }
    s
}

fn actions_if_only(s: &Sums, side: Side) -> f64 {
    match side {
        // DSP1's wins are exposed, DSP2's wins keep their background rate.
        Side::Dsp1 => s.p_j + (s.p_k - s.dp_k),
        Side::Dsp2 => (s.p_j - s.dp_j) + s.p_k,
        Side::Tie => f64::NAN,
    }
}

fn nonzero(x: f64, side: Side) -> Result<f64, AttributionError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(AttributionError::Undefined { side })
    }
}

/// Expected actions per attributed action if only `side` were bidding.
pub fn expected_actions_per_attributed(
    population: &[GroundTruthUser],
    partition: &Partition,
    side: Side,
) -> Result<f64, AttributionError> {
    let s = sums(population, partition, None);
    let denom = match side {
        Side::Dsp1 => s.p_j,
        Side::Dsp2 => s.p_k,
        Side::Tie => 0.0,
    };
    Ok(actions_if_only(&s, side) / nonzero(denom, side)?)
}

/// Cost per attributed action. DSP1 (value) pays the lift bid on its wins,
/// DSP2 (lift) pays the value bid, which makes it exactly `alpha`.
pub fn cost_per_attributed(
    population: &[GroundTruthUser],
    partition: &Partition,
    alpha: f64,
    beta: f64,
    side: Side,
) -> Result<f64, AttributionError> {
    let s = sums(population, partition, None);
    match side {
        Side::Dsp1 => Ok(beta * s.dp_j / nonzero(s.p_j, side)?),
        Side::Dsp2 => {
            let d = nonzero(s.p_k, side)?;
            // alpha * sum p_k / sum p_k, kept in this form so it is exactly alpha.
            Ok(alpha * (s.p_k / d))
        }
        Side::Tie => Err(AttributionError::Undefined { side }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// The lift bidder yields more actions per attributed action.
    pub actions: bool,
    /// The lift bidder costs more per attributed action.
    pub cost: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub a1: f64,
    pub a2: f64,
    /// Currency per attributed action.
    pub c1: f64,
    pub c2: f64,
    /// `|attributed(DSP1) - attributed(DSP2)| / total expected actions`.
    pub attribution_residual: f64,
    pub ties: usize,
    pub verdict: Verdict,
}

fn report(a1: f64, a2: f64, c1: f64, c2: f64, residual: f64, ties: usize) -> TheoremReport {
    TheoremReport {
        a1,
        a2,
        c1,
        c2,
        attribution_residual: residual,
        ties,
        verdict: Verdict { actions: a1 < a2, cost: c1 < c2 },
    }
}

/// All four quantities for a value bidder vs a lift bidder.
pub fn theorem_quantities(
    population: &[GroundTruthUser],
    partition: &Partition,
    alpha: f64,
    beta: f64,
) -> Result<TheoremReport, AttributionError> {
    let s = sums(population, partition, None);
    let total: f64 = population.iter().map(|u| u.p.value()).sum();
    let a1 = expected_actions_per_attributed(population, partition, Side::Dsp1)?;
    let a2 = expected_actions_per_attributed(population, partition, Side::Dsp2)?;
    let c1 = cost_per_attributed(population, partition, alpha, beta, Side::Dsp1)?;
    let c2 = cost_per_attributed(population, partition, alpha, beta, Side::Dsp2)?;
    let residual = (s.p_j - s.p_k).abs() / total;
    Ok(report(a1, a2, c1, c2, residual, partition.count(Side::Tie)))
}

/// All four quantities for a rational bidder vs a lift bidder.
pub fn generalized_theorem_quantities(
    population: &[GroundTruthUser],
    partition: &Partition,
    a_values: &[f64],
    cpa: Money,
    beta: f64,
) -> Result<TheoremReport, AttributionError> {
    check_len(population, a_values)?;
    let s = sums(population, partition, Some(a_values));
    let total: f64 = population.iter().zip(a_values).map(|(u, a)| u.p.value() * a).sum();
    let pa_j = nonzero(s.pa_j, Side::Dsp1)?;
    let pa_k = nonzero(s.pa_k, Side::Dsp2)?;
    let a1 = actions_if_only(&s, Side::Dsp1) / pa_j;
    let a2 = actions_if_only(&s, Side::Dsp2) / pa_k;
    let c1 = beta * s.dp_j / pa_j;
    let c2 = cpa.to_currency() * (s.pa_k / pa_k);
    let residual = (s.pa_j - s.pa_k).abs() / total;
    Ok(report(a1, a2, c1, c2, residual, partition.count(Side::Tie)))
}

/// Last-touch attribution of the action at `action_index`: the bidder of the
/// latest same-advertiser impression for that user logged before the action,
/// no more than `lookback_days` earlier.
pub fn last_touch_attribute(
    log: &EventLog,
    action_index: usize,
    lookback_days: u32,
) -> Result<Option<BidderId>, AttributionError> {
    let action = log.events.get(action_index).ok_or(AttributionError::NotAnAction(action_index))?;
    if action.kind != EventKind::Action {
        return Err(AttributionError::NotAnAction(action_index));
    }
    let advertiser = action.subject.map(AdvertiserId);
    let earliest = action.timestamp - lookback_days as i64 * 86_400;
    let winner = log.events[..action_index]
        .iter()
        .rev()
        .take_while(|e| e.timestamp >= earliest)
        .find(|e| {
            e.kind == EventKind::Impression && e.user_id == action.user_id && e.subject.map(AdvertiserId) == advertiser
        })
        .and_then(|e| e.bidder);
    Ok(winner)
}

/// Credit for lift-proportional attribution, `clamp(c * delta_p / p, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Credit {
    pub value: Probability,
    pub clamped: bool,
}

pub fn lift_proportional_credit(p: f64, delta_p: f64, normalization: f64) -> Result<Credit, AttributionError> {
    if !(p > 0.0) {
        return Err(AttributionError::ZeroAr);
    }
    let raw = normalization * delta_p / p;
    let value = Probability::saturating(raw);
    Ok(Credit { value, clamped: value.value() != raw })
}

/// Credits for a whole population plus the number of clamped users.
pub fn lift_proportional_credits(
    population: &[GroundTruthUser],
    normalization: f64,
) -> Result<(Vec<f64>, usize), AttributionError> {
    let mut clamps = 0;
    let mut out = Vec::with_capacity(population.len());
    for u in population {
        let c = lift_proportional_credit(u.p.value(), u.delta_p, normalization)?;
        clamps += c.clamped as usize;
        out.push(c.value.value());
    }
    Ok((out, clamps))
}
