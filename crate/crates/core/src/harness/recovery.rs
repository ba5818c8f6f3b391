//! Does the trained model rank users by their true lift?
//!
//! A training world is simulated with a value bidder facing a value-scaled
//! competitor, so impressions land on a p-independent share of requests,
//! plus a group of users the bidder never reaches.
//! The model is trained on the log; for each test user the lift is
//! predicted at the end of the sampleable span, in the state where the
//! user has not seen the advertiser's ad inside the feature window.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bidders::BidderConfig;
use crate::lift::evaluate::{spearman, DecileRow};
use crate::lift::features::NEVER;
use crate::lift::model::{split_of, Split};
use crate::lift::{
    schema_for_log, train_model, CalibratedModel, GbdtParams, LiftError, SamplingConfig, TimelineIndex, TrainConfig,
};
use crate::market::{AdvertiserId, BidderId, Campaign, Money};
use crate::seed::{rng_for, streams};
use crate::world::eventlog::EventLog;
use crate::world::market::{MarketBidder, MarketGroup, MarketSetup, OracleEstimator};
use crate::world::{generate_population, simulate_market, WorldConfig, WorldError};

/// A world observed by one value bidder, with a share of users it never
/// reaches. Its log is what the model learns from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingWorld {
    pub world: WorldConfig,
    pub advertiser: u32,
    pub cpa: f64,
    /// The bidder bids `alpha * p`; below the competitor's typical scale it
    /// wins a small share of requests.
    pub training_alpha: f64,
    /// Share of users the bidder never bids on.
    pub unreached_fraction: f64,
    pub action_window_days: u32,
}

impl Default for TrainingWorld {
    fn default() -> Self {
        TrainingWorld {
            world: WorldConfig { n_users: 12_000, ..WorldConfig::default() },
            advertiser: 1,
            cpa: 100.0,
            training_alpha: 70.0,
            unreached_fraction: 0.3,
            action_window_days: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub market: TrainingWorld,
    pub train: TrainConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            market: TrainingWorld::default(),
            train: TrainConfig {
                sampling: SamplingConfig {
                    target_positive_count: 40_000,
                    max_samples: 600_000,
                    ..SamplingConfig::default()
                },
                gbdt: GbdtParams { n_trees: 200, ..GbdtParams::default() },
                test_fraction: 0.25,
                calibration_fraction: 0.3,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub holdout_users: usize,
    pub spearman: f64,
    pub mean_predicted_lift: f64,
    pub mean_true_lift: f64,
    pub calibration_table: Vec<DecileRow>,
    pub calibration_pass: bool,
    pub test_auc: Option<f64>,
    pub isotonic_valid: bool,
    pub positives_from_unexposed_users: usize,
    pub actions_without_exposure: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum RecoveryError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

/// Simulate the training world and return its log.
pub fn training_log(cfg: &TrainingWorld, config_digest: &str) -> Result<EventLog, WorldError> {
    let population = generate_population(&cfg.world)?;
    let money = |x: f64| Money::from_currency(x).map_err(|e| WorldError::Config(e.to_string()));
    let campaign = Campaign::new(AdvertiserId(cfg.advertiser), money(cfg.cpa)?, Money::ZERO, cfg.action_window_days)
        .map_err(|e| WorldError::Config(e.to_string()))?;
    if !(0.0..1.0).contains(&cfg.unreached_fraction) {
        return Err(WorldError::Config("unreached_fraction must lie in [0, 1)".into()));
    }
    let bidder = MarketBidder { id: BidderId::DSP1, config: BidderConfig::value(cfg.training_alpha), budget: None };
    let mut setup = MarketSetup::single_group(campaign, vec![bidder], population.len());
    setup.groups.push(MarketGroup { name: "unreached".into(), bidders: Vec::new() });
    let mut rng = rng_for(cfg.world.seed, streams::GROUPS, 1);
    for g in setup.assignment.iter_mut() {
        *g = (rng.random::<f64>() < cfg.unreached_fraction) as u32;
    }
    Ok(simulate_market(&population, &setup, &cfg.world, &OracleEstimator, config_digest, true)?.log)
}

/// Predicted lift of each test user, paired with the true lift.
pub fn holdout_lifts(
    index: &TimelineIndex,
    model: &CalibratedModel,
    train: &TrainConfig,
) -> Result<Vec<(f64, f64)>, LiftError> {
    let s = index.schema.clone();
    let ad = model.advertiser;
    let (aw, fw) = (train.sampling.action_window_seconds, train.sampling.feature_window_seconds);
    let ts = index.header.horizon_seconds - aw;
    let (f, r, cf, cr) = (s.imp_freq(ad), s.imp_rncy(ad), s.clk_freq(ad), s.clk_rncy(ad));
    let mut out = Vec::new();
    for u in &index.records {
        if split_of(u.user_id, train) != Split::Test {
            continue;
        }
        let mut x = index.extract(u.user_id, ts, fw)?;
        for (i, v) in [(f, 0.0), (r, NEVER), (cf, 0.0), (cr, NEVER)] {
            if let Some(i) = i {
                x.values[i] = v;
            }
        }
        out.push((model.predict_lift(&x, ad)?, u.delta_p));
    }
    Ok(out)
}

pub fn evaluate_recovery(cfg: &RecoveryConfig) -> Result<RecoveryReport, RecoveryError> {
    let log = training_log(&cfg.market, &crate::digest::digest_of(cfg))?;
    let summary = crate::world::summarize(&log, cfg.market.action_window_days);
    let schema = Arc::new(schema_for_log(&log));
    let index = TimelineIndex::from_log(log, schema);
    let outcome = train_model(&index, &cfg.train)?;
    let pairs = holdout_lifts(&index, &outcome.model, &cfg.train)?;
    let predicted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let n = pairs.len().max(1) as f64;
    Ok(RecoveryReport {
        holdout_users: pairs.len(),
        spearman: spearman(&predicted, &truth),
        mean_predicted_lift: predicted.iter().sum::<f64>() / n,
        mean_true_lift: truth.iter().sum::<f64>() / n,
        calibration_pass: outcome.calibration_table.iter().all(|r| r.within_tolerance),
        calibration_table: outcome.calibration_table,
        test_auc: outcome.test_auc,
        isotonic_valid: outcome.model.isotonic.is_valid(),
        positives_from_unexposed_users: outcome.positives_from_unexposed_users,
        actions_without_exposure: summary.precedent_impression_fraction.is_some_and(|f| f < 1.0),
    })
}
