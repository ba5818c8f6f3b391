//! Synthetic user worlds and the market simulator: the ground-truth oracle
//! against which exact formulas and learned models are checked.

pub mod eventlog;
pub mod market;
pub mod montecarlo;
pub mod population;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{AdvertiserId, GroundTruthUser};
use eventlog::{EventKind, EventLog};

pub use market::{
    assign_equal_groups, simulate_market, BidEstimator, BidderLedger, Estimate, GroupLedger, MarketBidder, MarketGroup,
    MarketRun, MarketSetup, OracleEstimator,
};
pub use population::{generate_population, CompetitorBids, Distribution, ExplicitUser, WorldConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("misconfigured world: {rejected} of {attempts} draws violated user invariants")]
    Rejection { attempts: usize, rejected: usize },
    #[error("log has no actions")]
    NoActions,
}

/// Draw whether a user acts: probability `p` if exposed, `p - delta_p`
/// otherwise. One uniform per call, so matched RNG streams couple the
/// exposed and unexposed outcomes.
pub fn realize_action<R: Rng + ?Sized>(user: &GroundTruthUser, exposed: bool, rng: &mut R) -> bool {
    rng.random::<f64>() < user.action_rate(exposed)
}

/// Fraction of actions preceded by at least one impression of the same
/// advertiser no more than `lookback_days` earlier.
pub fn precedent_impression_fraction(
    log: &EventLog,
    advertiser: AdvertiserId,
    lookback_days: u32,
) -> Result<f64, WorldError> {
    let lookback = lookback_days as i64 * 86_400;
    let mut last_imp = HashMap::new();
    let mut actions = 0usize;
    let mut preceded = 0usize;
    for e in &log.events {
        if e.is_impression_of(advertiser) {
            last_imp.insert(e.user_id, e.timestamp);
        } else if e.kind == EventKind::Action && e.subject == Some(advertiser.0) {
            actions += 1;
            if last_imp.get(&e.user_id).is_some_and(|t| e.timestamp - t <= lookback) {
                preceded += 1;
            }
        }
    }
    if actions == 0 {
        return Err(WorldError::NoActions);
    }
    Ok(preceded as f64 / actions as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub users: usize,
    pub requests: usize,
    pub impressions: usize,
    pub clicks: usize,
    pub actions: usize,
    /// `None` when the log holds no action.
    pub precedent_impression_fraction: Option<f64>,
}

pub fn summarize(log: &EventLog, lookback_days: u32) -> LogSummary {
    LogSummary {
        users: log.users.len(),
        requests: log.count(EventKind::AdRequest),
        impressions: log.count(EventKind::Impression),
        clicks: log.count(EventKind::Click),
        actions: log.count(EventKind::Action),
        precedent_impression_fraction: precedent_impression_fraction(log, log.header.advertiser, lookback_days).ok(),
    }
}
