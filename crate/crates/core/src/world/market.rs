//! Market simulation: ad requests over a horizon, bids, second-price
//! auctions against an exogenous competitor, impressions, clicks and
//! probabilistic actions, with CPA budgets and last-touch attribution.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, Poisson};
use serde::{Deserialize, Serialize};

use super::eventlog::{EventKind, EventLog, LogHeader, TimelineEvent, UserRecord};
use super::population::{CompetitorBids, WorldConfig};
use super::{realize_action, WorldError};
use crate::auction::run_auction;
use crate::bidders::{BidderConfig, BidderKind};
use crate::market::{BidRequest, BidderId, Campaign, GroundTruthUser, Money, Probability, RequestContext, RequestId};
use crate::seed::{derive_seed, rng_for, streams};

/// A bidder's view of one user at request time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub p: Probability,
    pub delta_p: f64,
}

/// Source of the `(p, delta_p)` a bidder prices with.
pub trait BidEstimator: Sync {
    /// `history` holds the user's events strictly before this request.
    fn estimate(&self, user: &GroundTruthUser, history: &[TimelineEvent], request: &BidRequest) -> Estimate;
}

/// Bids with the ground-truth values.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleEstimator;

impl BidEstimator for OracleEstimator {
    fn estimate(&self, user: &GroundTruthUser, _: &[TimelineEvent], _: &BidRequest) -> Estimate {
        Estimate { p: user.p, delta_p: user.delta_p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketBidder {
    pub id: BidderId,
    pub config: BidderConfig,
    /// Stop bidding once `attributed actions * CPA >= budget`. `None` is unlimited.
    pub budget: Option<Money>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketGroup {
    pub name: String,
    pub bidders: Vec<MarketBidder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSetup {
    pub campaign: Campaign,
    pub groups: Vec<MarketGroup>,
    /// Group index per user, in population order.
    pub assignment: Vec<u32>,
    /// Bidding stops after this many days; actions are still realized until
    /// the end of the horizon.
    pub campaign_days: Option<u32>,
    pub reserve: Money,
}

impl MarketSetup {
    /// One group containing every user.
    pub fn single_group(campaign: Campaign, bidders: Vec<MarketBidder>, n_users: usize) -> Self {
        MarketSetup {
            campaign,
            groups: vec![MarketGroup { name: "all".into(), bidders }],
            assignment: vec![0; n_users],
            campaign_days: None,
            reserve: Money::ZERO,
        }
    }

    pub fn validate(&self, n_users: usize) -> Result<(), WorldError> {
        self.campaign.validate().map_err(|e| WorldError::Config(e.to_string()))?;
        if self.assignment.len() != n_users {
            return Err(WorldError::Config(format!(
                "group assignment covers {} users, population has {n_users}",
                self.assignment.len()
            )));
        }
        if let Some(g) = self.assignment.iter().find(|&&g| g as usize >= self.groups.len()) {
            return Err(WorldError::Config(format!("user assigned to unknown group {g}")));
        }
        let mut ids = std::collections::BTreeSet::new();
        for b in self.groups.iter().flat_map(|g| &g.bidders) {
            if b.id == BidderId::COMPETITOR || !ids.insert(b.id) {
                return Err(WorldError::Config(format!("bidder id {} is reserved or duplicated", b.id.0)));
            }
            b.config.validate().map_err(|e| WorldError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Randomly split `n` users into `k` groups of equal size (sizes differ by
/// at most one).
pub fn assign_equal_groups(n: usize, k: usize, seed: u64) -> Vec<u32> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, streams::GROUPS, 0));
    let mut out = vec![0u32; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = (rank % k.max(1)) as u32;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BidderLedger {
    pub id: BidderId,
    pub group: u32,
    pub bids: u64,
    pub impressions: u64,
    pub clicks: u64,
    pub attributed_actions: u64,
    /// Sum of clearing prices paid.
    pub inventory_cost: Money,
    /// `attributed_actions * CPA`.
    pub spend: Money,
    /// Time the budget ran out, if it did.
    pub exhausted_at: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupLedger {
    pub name: String,
    pub users: u64,
    pub requests: u64,
    /// Impressions won by this group's bidders.
    pub impressions: u64,
    pub actions: u64,
    pub attributed_actions: u64,
    pub inventory_cost: Money,
    /// Sum over requests of the realized action probability.
    pub expected_actions: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketRun {
    /// Empty when the run was made without recording.
    pub log: EventLog,
    pub groups: Vec<GroupLedger>,
    pub bidders: Vec<BidderLedger>,
}

fn request_id(user_index: usize, k: usize) -> RequestId {
    RequestId(((user_index as u64) << 24) | k as u64)
}

/// Pre-generated ad request of one user.
#[derive(Debug, Clone, Copy)]
struct PendingRequest {
    ts: i64,
    user: usize,
    request: BidRequest,
}

fn weighted_topic<R: Rng>(rates: &[f64], rng: &mut R) -> Option<u32> {
    let total: f64 = rates.iter().sum();
    if rates.is_empty() || !(total > 0.0) {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    for (t, r) in rates.iter().enumerate() {
        if x < *r {
            return Some(t as u32);
        }
        x -= r;
    }
    Some(rates.len() as u32 - 1)
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn uniform_times<R: Rng>(count: u64, horizon: i64, rng: &mut R) -> Vec<i64> {
    let mut ts: Vec<i64> = (0..count).map(|_| rng.random_range(0..horizon)).collect();
    ts.sort_unstable();
    ts
}

fn generate_requests(world: &WorldConfig, user_index: usize, user: &GroundTruthUser) -> Vec<PendingRequest> {
    let mut rng = rng_for(world.seed, streams::REQUESTS, user_index as u64);
    let horizon = world.horizon_seconds();
    let count = match world.fixed_requests_per_user {
        Some(n) => n as u64,
        None => poisson_count(user.request_rate * world.horizon_days as f64, &mut rng),
    };
    uniform_times(count, horizon, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(k, ts)| {
            let topic = weighted_topic(&user.behavior.page_view_rates, &mut rng);
            PendingRequest {
                ts,
                user: user_index,
                request: BidRequest {
                    request_id: request_id(user_index, k),
                    user_id: user.user_id,
                    timestamp: ts,
                    context: RequestContext { topic, app: None, geo: Some(user.behavior.geo_area) },
                },
            }
        })
        .collect()
}

/// Page views, searches and app events from the user's propensities.
fn generate_behavior(world: &WorldConfig, user_index: usize, user: &GroundTruthUser) -> Vec<TimelineEvent> {
    if !world.behavior_events {
        return Vec::new();
    }
    let mut rng = rng_for(world.seed, streams::BEHAVIOR, user_index as u64);
    let horizon = world.horizon_seconds();
    let days = world.horizon_days as f64;
    let b = &user.behavior;
    let mut out = Vec::new();
    let emit = |kind: EventKind, rates: &[f64], out: &mut Vec<TimelineEvent>, rng: &mut rand_chacha::ChaCha8Rng| {
        for (s, rate) in rates.iter().enumerate() {
            for ts in uniform_times(poisson_count(rate * days, rng), horizon, rng) {
                out.push(TimelineEvent::new(ts, user.user_id, kind).subject(s as u32));
            }
        }
    };
    emit(EventKind::PageView, &b.page_view_rates, &mut out, &mut rng);
    emit(EventKind::Search, &b.search_rates, &mut out, &mut rng);
    emit(EventKind::AppInstall, &b.app_install_rates, &mut out, &mut rng);
    emit(EventKind::AppUse, &b.app_use_rates, &mut out, &mut rng);
    out.sort_by_key(|e| e.timestamp);
    out
}

fn competitor_bid(world: &WorldConfig, user: &GroundTruthUser, req: RequestId) -> Option<Money> {
    let rng = || rng_for(world.seed, streams::COMPETITOR, req.0);
    match &world.competitor {
        CompetitorBids::None => None,
        CompetitorBids::Fixed { price } => Some(Money::bid_from_currency(*price)),
        CompetitorBids::Absolute { distribution } => Some(Money::bid_from_currency(distribution.sample(&mut rng()))),
        CompetitorBids::ValueScaled { distribution } => {
            Some(Money::bid_from_currency(user.p.value() * distribution.sample(&mut rng())))
        }
    }
}

struct UserState {
    history: Vec<TimelineEvent>,
    behavior: Vec<TimelineEvent>,
    next_behavior: usize,
    last_impression: Option<(i64, BidderId)>,
}

impl UserState {
    fn advance_to(&mut self, ts: i64) {
        while self.next_behavior < self.behavior.len() && self.behavior[self.next_behavior].timestamp <= ts {
            self.history.push(self.behavior[self.next_behavior]);
            self.next_behavior += 1;
        }
    }

    fn finish(&mut self) {
        self.advance_to(i64::MAX);
    }
}

struct GroupRun {
    users: Vec<(usize, Vec<TimelineEvent>)>,
    ledger: GroupLedger,
    bidders: Vec<BidderLedger>,
}

fn simulate_group(
    group_index: u32,
    group: &MarketGroup,
    members: &[usize],
    population: &[GroundTruthUser],
    setup: &MarketSetup,
    world: &WorldConfig,
    estimator: &dyn BidEstimator,
) -> GroupRun {
    let campaign = &setup.campaign;
    let advertiser = campaign.advertiser_id.0;
    let window = campaign.action_window_seconds();
    let bidding_ends = setup.campaign_days.map_or(i64::MAX, |d| d as i64 * 86_400);

    let mut states: Vec<UserState> = members
        .iter()
        .map(|&i| UserState {
            history: Vec::new(),
            behavior: generate_behavior(world, i, &population[i]),
            next_behavior: 0,
            last_impression: None,
        })
        .collect();
    let slot_of = |user_index: usize| members.binary_search(&user_index).expect("member");

    let mut pending: Vec<PendingRequest> =
        members.iter().flat_map(|&i| generate_requests(world, i, &population[i])).collect();
    // Global time order inside the group; budgets couple the users.
    pending.sort_by_key(|r| (r.ts, population[r.user].user_id, r.request.request_id));

    let mut ledger = GroupLedger { name: group.name.clone(), users: members.len() as u64, ..Default::default() };
    let mut bidders: Vec<BidderLedger> =
        group.bidders.iter().map(|b| BidderLedger { id: b.id, group: group_index, ..Default::default() }).collect();
    let needs_estimate = group.bidders.iter().any(|b| b.config.kind != BidderKind::Passive);

    let mut bids = Vec::with_capacity(group.bidders.len() + 1);
    for req in pending {
        let user = &population[req.user];
        let state = &mut states[slot_of(req.user)];
        state.advance_to(req.ts - 1);
        let rid = req.request.request_id;
        let ts = req.ts;
        ledger.requests += 1;

        let estimate = if needs_estimate && ts < bidding_ends {
            Some(estimator.estimate(user, &state.history, &req.request))
        } else {
            None
        };

        let mut ev = vec![TimelineEvent::new(ts, user.user_id, EventKind::AdRequest).request(rid)];
        if let Some(t) = req.request.context.topic {
            ev[0] = ev[0].subject(t);
            ev.push(TimelineEvent::new(ts, user.user_id, EventKind::PageView).subject(t));
        }

        bids.clear();
        for (slot, b) in group.bidders.iter().enumerate() {
            if ts >= bidding_ends || bidders[slot].exhausted_at.is_some() {
                continue;
            }
            let amount = match (&estimate, b.config.kind) {
                (_, BidderKind::Passive) | (None, _) => Money::ZERO,
                (Some(e), _) => b.config.bid(e.p, e.delta_p),
            };
            bidders[slot].bids += 1;
            bids.push((b.id, amount));
            ev.push(
                TimelineEvent::new(ts, user.user_id, EventKind::Bid).bidder(Some(b.id)).amount(amount).request(rid),
            );
        }
        if let Some(c) = competitor_bid(world, user, rid) {
            bids.push((BidderId::COMPETITOR, c));
        }

        let result = run_auction(&bids, setup.reserve, derive_seed(world.seed, streams::AUCTION, rid.0))
            .expect("bids are non-negative");
        ev.push(
            TimelineEvent::new(ts, user.user_id, EventKind::Auction)
                .bidder(result.winner)
                .amount(result.clearing_price)
                .request(rid),
        );
        if let Some(w) = result.winner.filter(|w| *w != BidderId::COMPETITOR) {
            let slot = group.bidders.iter().position(|b| b.id == w).expect("winner bid in this group");
            bidders[slot].impressions += 1;
            bidders[slot].inventory_cost += result.clearing_price;
            ledger.impressions += 1;
            ledger.inventory_cost += result.clearing_price;
            state.last_impression = Some((ts, w));
            ev.push(
                TimelineEvent::new(ts, user.user_id, EventKind::Impression)
                    .subject(advertiser)
                    .bidder(Some(w))
                    .amount(result.clearing_price)
                    .request(rid),
            );
            let mut click_rng = rng_for(world.seed, streams::CLICK, rid.0);
            if click_rng.random::<f64>() < user.behavior.click_probability {
                bidders[slot].clicks += 1;
                ev.push(
                    TimelineEvent::new(ts, user.user_id, EventKind::Click)
                        .subject(advertiser)
                        .bidder(Some(w))
                        .request(rid),
                );
            }
        }

        // Exposure: at least one impression within the action window.
        let touch = state.last_impression.filter(|(t, _)| ts - t <= window);
        let exposed = touch.is_some();
        ledger.expected_actions += user.action_rate(exposed);
        let mut action_rng = rng_for(world.seed, streams::ACTION, rid.0);
        if realize_action(user, exposed, &mut action_rng) {
            ledger.actions += 1;
            // An exhausted campaign pays for nothing more.
            let attributed = touch.map(|(_, b)| b).filter(|b| {
                let slot = group.bidders.iter().position(|x| x.id == *b).expect("toucher bid in this group");
                bidders[slot].exhausted_at.is_none()
            });
            ev.push(
                TimelineEvent::new(ts, user.user_id, EventKind::Action)
                    .subject(advertiser)
                    .bidder(attributed)
                    .request(rid),
            );
            if let Some(b) = attributed {
                let slot = group.bidders.iter().position(|x| x.id == b).expect("attributed bidder");
                let ledger_b = &mut bidders[slot];
                ledger_b.attributed_actions += 1;
                ledger_b.spend += campaign.cpa;
                ledger.attributed_actions += 1;
                if let Some(budget) = group.bidders[slot].budget {
                    if ledger_b.spend >= budget && ledger_b.exhausted_at.is_none() {
                        ledger_b.exhausted_at = Some(ts);
                    }
                }
            }
        }
        state.history.extend(ev);
    }

    for s in &mut states {
        s.finish();
    }
    // Budgets of zero are exhausted from the start.
    for (slot, b) in group.bidders.iter().enumerate() {
        if b.budget == Some(Money::ZERO) && bidders[slot].exhausted_at.is_none() {
            bidders[slot].exhausted_at = Some(0);
        }
    }
    let users = members.iter().zip(states).map(|(&i, s)| (i, s.history)).collect();
    GroupRun { users, ledger, bidders }
}

/// Simulate the market. The result is a pure function of the inputs; the
/// world seed drives every random draw through per-request streams.
pub fn simulate_market(
    population: &[GroundTruthUser],
    setup: &MarketSetup,
    world: &WorldConfig,
    estimator: &dyn BidEstimator,
    config_digest: &str,
    record_log: bool,
) -> Result<MarketRun, WorldError> {
    setup.validate(population.len())?;
    let mut setup = setup.clone();
    // A zero budget never bids.
    for b in setup.groups.iter_mut().flat_map(|g| g.bidders.iter_mut()) {
        if b.budget == Some(Money::ZERO) {
            b.config = BidderConfig { kind: BidderKind::Passive, ..b.config.clone() };
        }
    }

    let runs: Vec<GroupRun> = setup
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let members: Vec<usize> = (0..population.len()).filter(|&i| setup.assignment[i] == g as u32).collect();
            simulate_group(g as u32, group, &members, population, &setup, world, estimator)
        })
        .collect();

    let mut per_user: Vec<(usize, Vec<TimelineEvent>)> = Vec::new();
    let mut groups = Vec::new();
    let mut bidders = Vec::new();
    for run in runs {
        groups.push(run.ledger);
        bidders.extend(run.bidders);
        if record_log {
            per_user.extend(run.users);
        }
    }
    per_user.sort_by_key(|(i, _)| *i);

    let mut events: Vec<TimelineEvent> = per_user.into_iter().flat_map(|(_, e)| e).collect();
    // Stable: per-user order survives for equal (timestamp, user).
    events.sort_by_key(|e| (e.timestamp, e.user_id));

    let users = if record_log {
        population
            .iter()
            .enumerate()
            .map(|(i, u)| UserRecord {
                user_id: u.user_id,
                group: setup.assignment[i],
                p: u.p.value(),
                delta_p: u.delta_p,
                request_rate: u.request_rate,
                age_group: u.behavior.age_group,
                gender: u.behavior.gender,
                geo_area: u.behavior.geo_area,
            })
            .collect()
    } else {
        Vec::new()
    };
    let log = EventLog {
        header: LogHeader {
            seed: world.seed,
            config_digest: config_digest.to_string(),
            horizon_seconds: world.horizon_seconds(),
            advertiser: setup.campaign.advertiser_id,
        },
        users,
        events,
    };
    Ok(MarketRun { log, groups, bidders })
}

/// Expected actions implied by a log: every ad request contributes its
/// user's AR if an impression of the advertiser landed within the window
/// before it (including on that request), the background AR otherwise.
pub fn expected_actions_from_log(log: &EventLog, population: &[GroundTruthUser], window_seconds: i64) -> f64 {
    use std::collections::HashMap;
    let by_id: HashMap<_, _> = population.iter().map(|u| (u.user_id, u)).collect();
    let mut impressions: HashMap<_, Vec<i64>> = HashMap::new();
    for e in log.events.iter().filter(|e| e.is_impression_of(log.header.advertiser)) {
        impressions.entry(e.user_id).or_default().push(e.timestamp);
    }
    log.events
        .iter()
        .filter(|e| e.kind == EventKind::AdRequest)
        .map(|e| {
            let exposed = impressions.get(&e.user_id).is_some_and(|ts| {
                let upto = ts.partition_point(|&t| t <= e.timestamp);
                upto > 0 && e.timestamp - ts[upto - 1] <= window_seconds
            });
            by_id[&e.user_id].action_rate(exposed)
        })
        .sum()
}
