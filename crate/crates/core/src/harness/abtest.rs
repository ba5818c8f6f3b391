//! The blind three-group protocol: a passive group, a value-bidder group
//! and a lift-bidder group, with the budget split evenly between the two
//! bidders and each bidder stopping when its share is spent.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cost_per_imp_diff, inventory_cost_diff, lift_over_lift, relative_lift};
use crate::bidders::{calibrate_beta, calibrate_equal_attribution, BidderConfig, PopulationStats};
use crate::lift::{CalibratedModel, FeatureSchema, ModelEstimator};
use crate::market::{AdvertiserId, BidderId, Campaign, Money};
use crate::seed::{derive_seed, streams};
use crate::world::market::{
    assign_equal_groups, BidEstimator, MarketBidder, MarketGroup, MarketSetup, OracleEstimator,
};
use crate::world::{generate_population, simulate_market, WorldConfig, WorldError};

pub const PASSIVE_ID: BidderId = BidderId(3);

/// How the lift bidder's `beta` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BetaRule {
    /// `beta = mean(p) / mean(delta_p) * CPA` over the population.
    MeanRatio,
    /// Equalise expected attributed actions against the value bidder.
    EqualAttribution,
    Fixed {
        beta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ABTestConfig {
    pub world: WorldConfig,
    pub advertiser: u32,
    /// Currency units.
    pub cpa: f64,
    /// Total budget in currency units, split evenly between the bidders.
    pub budget: f64,
    pub action_window_days: u32,
    /// Bidding stops after this many days; `None` bids over the whole horizon.
    pub campaign_days: Option<u32>,
    pub beta: BetaRule,
    pub replications: usize,
    pub seed: u64,
}

impl Default for ABTestConfig {
    fn default() -> Self {
        ABTestConfig {
            world: WorldConfig { n_users: 10_000, behavior_events: false, ..WorldConfig::default() },
            advertiser: 1,
            cpa: 100.0,
            budget: 300_000.0,
            action_window_days: 2,
            campaign_days: None,
            beta: BetaRule::MeanRatio,
            replications: 20,
            seed: 0,
        }
    }
}

impl ABTestConfig {
    pub fn campaign(&self) -> Result<Campaign, WorldError> {
        let money = |x: f64| Money::from_currency(x).map_err(|e| WorldError::Config(e.to_string()));
        Campaign::new(AdvertiserId(self.advertiser), money(self.cpa)?, money(self.budget)?, self.action_window_days)
            .map_err(|e| WorldError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        self.world.validate()?;
        self.campaign()?;
        if self.replications == 0 {
            return Err(WorldError::Config("replications must be at least 1".into()));
        }
        if let BetaRule::Fixed { beta } = self.beta {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(WorldError::Config("beta must be positive".into()));
            }
        }
        Ok(())
    }
}

impl ABTestConfig {
    /// Feature layout a model must have to price this world's requests.
    pub fn feature_schema(&self) -> FeatureSchema {
        FeatureSchema::new(vec![self.advertiser], self.world.topics, self.world.apps)
    }
}

/// Ground truth or a trained model.
#[derive(Debug, Clone)]
pub enum BidSource {
    Oracle,
    Model { model: Arc<CalibratedModel>, feature_window_seconds: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub name: String,
    pub users: u64,
    pub impressions: u64,
    pub actions: u64,
    pub attributed_actions: u64,
    pub inventory_cost: Money,
    pub spend: Money,
    pub budget: Money,
    /// Seconds into the horizon when the budget ran out.
    pub exhausted_at: Option<i64>,
    pub expected_actions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ABTestReport {
    pub replication: usize,
    pub world_seed: u64,
    pub beta: f64,
    pub passive: GroupRow,
    pub value: GroupRow,
    pub lift: GroupRow,
    /// Action lift over the passive group, as fractions.
    pub value_lift: Option<f64>,
    pub lift_lift: Option<f64>,
    pub lift_over_lift: Option<f64>,
    pub inventory_cost_diff: Option<f64>,
    pub cost_per_imp_diff: Option<f64>,
    /// Zero budget: nobody bid.
    pub empty_campaign: bool,
}

impl ABTestReport {
    pub fn lift_beats_value(&self) -> bool {
        self.lift.actions > self.value.actions
    }
}

fn beta_for(cfg: &ABTestConfig, population: &[crate::market::GroundTruthUser]) -> Result<f64, WorldError> {
    let campaign = cfg.campaign()?;
    let err = |e: crate::bidders::CalibrationError| WorldError::Config(e.to_string());
    match cfg.beta {
        BetaRule::MeanRatio => {
            calibrate_beta(&PopulationStats::of(population).map_err(err)?, campaign.cpa).map_err(err)
        }
        BetaRule::EqualAttribution => Ok(calibrate_equal_attribution(population, cfg.cpa, 0.0).map_err(err)?.beta),
        BetaRule::Fixed { beta } => Ok(beta),
    }
}

/// One replication. Its world seed is derived from the master seed and the
/// replication index only.
pub fn run_abtest(cfg: &ABTestConfig, source: &BidSource, replication: usize) -> Result<ABTestReport, WorldError> {
    cfg.validate()?;
    if let BidSource::Model { model, .. } = source {
        model.require_schema(&cfg.feature_schema()).map_err(|e| WorldError::Config(e.to_string()))?;
    }
    let world_seed = derive_seed(cfg.seed, streams::ABTEST, replication as u64);
    let world = WorldConfig { seed: world_seed, ..cfg.world.clone() };
    let population = generate_population(&world)?;
    let campaign = cfg.campaign()?;
    let beta = beta_for(cfg, &population)?;
    let half = Money::from_micros(campaign.budget.micros() / 2);
    let bidder = |id, config| MarketBidder { id, config, budget: Some(half) };
    let setup = MarketSetup {
        campaign: campaign.clone(),
        groups: vec![
            MarketGroup {
                name: "passive".into(),
                bidders: vec![MarketBidder { id: PASSIVE_ID, config: BidderConfig::passive(), budget: None }],
            },
            MarketGroup { name: "value".into(), bidders: vec![bidder(BidderId::DSP1, BidderConfig::value(cfg.cpa))] },
            MarketGroup { name: "lift".into(), bidders: vec![bidder(BidderId::DSP2, BidderConfig::lift(beta))] },
        ],
        assignment: assign_equal_groups(population.len(), 3, world_seed),
        campaign_days: cfg.campaign_days,
        reserve: Money::ZERO,
    };
    let estimator: Box<dyn BidEstimator> = match source {
        BidSource::Oracle => Box::new(OracleEstimator),
        BidSource::Model { model, feature_window_seconds } => {
            Box::new(ModelEstimator::new(model.clone(), *feature_window_seconds))
        }
    };
    let run = simulate_market(&population, &setup, &world, estimator.as_ref(), "", false)?;

    let row = |g: usize| {
        let l = &run.groups[g];
        let b = &run.bidders[g];
        GroupRow {
            name: l.name.clone(),
            users: l.users,
            impressions: l.impressions,
            actions: l.actions,
            attributed_actions: l.attributed_actions,
            inventory_cost: l.inventory_cost,
            spend: b.spend,
            budget: setup.groups[g].bidders[0].budget.unwrap_or(Money::ZERO),
            exhausted_at: b.exhausted_at,
            expected_actions: l.expected_actions,
        }
    };
    let (passive, value, lift) = (row(0), row(1), row(2));
    let value_lift = relative_lift(value.actions as f64, passive.actions as f64);
    let lift_lift = relative_lift(lift.actions as f64, passive.actions as f64);
    let empty_campaign = campaign.budget == Money::ZERO;
    let (vc, lc) = (value.inventory_cost.to_currency(), lift.inventory_cost.to_currency());
    Ok(ABTestReport {
        replication,
        world_seed,
        beta,
        lift_over_lift: value_lift.zip(lift_lift).and_then(|(v, l)| lift_over_lift(v, l)),
        inventory_cost_diff: inventory_cost_diff(vc, lc),
        cost_per_imp_diff: cost_per_imp_diff(vc, value.impressions, lc, lift.impressions),
        passive,
        value,
        lift,
        value_lift,
        lift_lift,
        empty_campaign,
    })
}

/// Counts of replications agreeing with each expected sign, with one-sided
/// sign-test p-values against a fair coin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replications: usize,
    pub lift_more_actions: usize,
    pub inventory_cost_higher: usize,
    pub cost_per_imp_lower: usize,
    pub p_lift_more_actions: f64,
    pub p_inventory_cost_higher: f64,
    pub p_cost_per_imp_lower: f64,
    pub reports: Vec<ABTestReport>,
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn sign_test_p(k: usize, n: usize) -> f64 {
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for i in 0..=n {
        if i >= k {
            tail += c;
        }
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

pub fn run_replications(cfg: &ABTestConfig, source: &BidSource) -> Result<ReplicationSummary, WorldError> {
    cfg.validate()?;
    let reports: Vec<ABTestReport> =
        (0..cfg.replications).into_par_iter().map(|r| run_abtest(cfg, source, r)).collect::<Result<_, _>>()?;
    let n = reports.len();
    let lift_more_actions = reports.iter().filter(|r| r.lift_beats_value()).count();
    let inventory_cost_higher = reports.iter().filter(|r| r.inventory_cost_diff.is_some_and(|d| d > 0.0)).count();
    let cost_per_imp_lower = reports.iter().filter(|r| r.cost_per_imp_diff.is_some_and(|d| d < 0.0)).count();
    Ok(ReplicationSummary {
        replications: n,
        lift_more_actions,
        inventory_cost_higher,
        cost_per_imp_lower,
        p_lift_more_actions: sign_test_p(lift_more_actions, n),
        p_inventory_cost_higher: sign_test_p(inventory_cost_higher, n),
        p_cost_per_imp_lower: sign_test_p(cost_per_imp_lower, n),
        reports,
    })
}
