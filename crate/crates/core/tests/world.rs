use std::collections::{BTreeMap, BTreeSet};

use liftbid_core::world::eventlog::{EventKind, EventLog};
use liftbid_core::world::{
    generate_population, precedent_impression_fraction, simulate_market, summarize, CompetitorBids, ExplicitUser,
    MarketBidder, MarketGroup, MarketSetup, OracleEstimator, WorldConfig,
};
use liftbid_core::{AdvertiserId, BidderConfig, BidderId, Campaign, Money};

fn campaign(budget: i64) -> Campaign {
    Campaign::new(AdvertiserId(1), Money::from_units(100), Money::from_units(budget), 2).unwrap()
}

fn bidder(id: BidderId, config: BidderConfig, budget: Option<i64>) -> MarketBidder {
    MarketBidder { id, config, budget: budget.map(Money::from_units) }
}

fn three_groups(n: usize, seed: u64, budget: Option<i64>) -> MarketSetup {
    MarketSetup {
        campaign: campaign(budget.unwrap_or(0)),
        groups: vec![
            MarketGroup { name: "passive".into(), bidders: vec![bidder(BidderId(3), BidderConfig::passive(), None)] },
            MarketGroup {
                name: "value".into(),
                bidders: vec![bidder(BidderId::DSP1, BidderConfig::value(100.0), budget)],
            },
            MarketGroup {
                name: "lift".into(),
                bidders: vec![bidder(BidderId::DSP2, BidderConfig::lift(250.0), budget)],
            },
        ],
        assignment: liftbid_core::world::assign_equal_groups(n, 3, seed),
        campaign_days: None,
        reserve: Money::ZERO,
    }
}

fn small_world(seed: u64) -> WorldConfig {
    WorldConfig { n_users: 300, horizon_days: 10, seed, ..WorldConfig::default() }
}

fn run(world: &WorldConfig, setup: &MarketSetup) -> liftbid_core::world::MarketRun {
    let pop = generate_population(world).unwrap();
    simulate_market(&pop, setup, world, &OracleEstimator, "test", true).unwrap()
}

fn two_user_world() -> WorldConfig {
    WorldConfig {
        explicit_users: vec![ExplicitUser { p: 0.04, delta_p: 0.01 }, ExplicitUser { p: 0.02, delta_p: 0.019 }],
        fixed_requests_per_user: Some(1),
        horizon_days: 1,
        behavior_events: false,
        competitor: CompetitorBids::Fixed { price: 3.5 },
        ..WorldConfig::default()
    }
}

#[test]
fn two_user_market_matches_hand_computed_totals() {
    let world = two_user_world();
    let pop = generate_population(&world).unwrap();
    for (config, actions) in [(BidderConfig::value(100.0), 0.041), (BidderConfig::lift(200.0), 0.05)] {
        let setup = MarketSetup::single_group(campaign(1000), vec![bidder(BidderId::DSP1, config, None)], 2);
        let run = simulate_market(&pop, &setup, &world, &OracleEstimator, "ex", false).unwrap();
        let g = &run.groups[0];
        assert!((g.expected_actions - actions).abs() <= 1e-12 * actions, "{} vs {actions}", g.expected_actions);
        assert_eq!(g.impressions, 1);
        assert_eq!(g.inventory_cost, Money::from_micros(3_500_000));
    }
}

#[test]
fn ledgers_agree_with_the_log() {
    let world = small_world(5);
    let setup = three_groups(world.n_users, 5, Some(300));
    let r = run(&world, &setup);
    let log = &r.log;

    assert!(log.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    assert_eq!(r.groups.iter().map(|g| g.requests).sum::<u64>() as usize, log.count(EventKind::AdRequest));
    assert_eq!(r.groups.iter().map(|g| g.impressions).sum::<u64>() as usize, log.count(EventKind::Impression));
    assert_eq!(r.groups.iter().map(|g| g.actions).sum::<u64>() as usize, log.count(EventKind::Action));
    assert_eq!(r.groups.iter().map(|g| g.users).sum::<u64>() as usize, world.n_users);

    for b in &r.bidders {
        let imps: Vec<_> =
            log.events.iter().filter(|e| e.kind == EventKind::Impression && e.bidder == Some(b.id)).collect();
        assert_eq!(imps.len() as u64, b.impressions);
        let cost: i64 = imps.iter().map(|e| e.amount.unwrap().micros()).sum();
        assert_eq!(cost, b.inventory_cost.micros());
        let attributed =
            log.events.iter().filter(|e| e.kind == EventKind::Action && e.bidder == Some(b.id)).count() as u64;
        assert_eq!(attributed, b.attributed_actions);
        assert_eq!(b.spend.micros(), b.attributed_actions as i64 * 100_000_000);
        assert!(b.spend.micros() <= 300_000_000 + 100_000_000);
    }

    // A user's events come from one group only.
    let group_of: BTreeMap<_, _> = log.users.iter().map(|u| (u.user_id, u.group)).collect();
    let mut bidders_seen: BTreeMap<_, BTreeSet<u32>> = BTreeMap::new();
    for e in log.events.iter().filter(|e| e.kind == EventKind::Impression) {
        bidders_seen.entry(e.user_id).or_default().insert(e.bidder.unwrap().0);
    }
    for (u, b) in bidders_seen {
        let expected = match group_of[&u] {
            1 => BidderId::DSP1.0,
            2 => BidderId::DSP2.0,
            g => panic!("impression in group {g}"),
        };
        assert_eq!(b.into_iter().collect::<Vec<_>>(), vec![expected]);
    }
}

#[test]
fn passive_group_never_wins() {
    let world = small_world(9);
    let r = run(&world, &three_groups(world.n_users, 9, None));
    assert_eq!(r.groups[0].impressions, 0);
    assert_eq!(r.groups[0].attributed_actions, 0);
    assert!(r.groups[1].impressions > 0 && r.groups[2].impressions > 0);
}

#[test]
fn attributed_actions_follow_an_impression_in_the_window() {
    let world = small_world(2);
    let r = run(&world, &three_groups(world.n_users, 2, None));
    let window = 2 * 86_400;
    let mut attributed = 0;
    for (i, e) in r.log.events.iter().enumerate() {
        if e.kind != EventKind::Action {
            continue;
        }
        let last = r.log.events[..=i].iter().rev().find(|x| x.user_id == e.user_id && x.kind == EventKind::Impression);
        match (e.bidder, last) {
            (Some(b), Some(imp)) => {
                attributed += 1;
                assert_eq!(imp.bidder, Some(b));
                assert!(e.timestamp - imp.timestamp <= window);
            }
            (Some(_), None) => panic!("attribution without impression"),
            (None, Some(imp)) => assert!(e.timestamp - imp.timestamp > window),
            (None, None) => {}
        }
    }
    assert!(attributed > 0);
}

#[test]
fn the_past_does_not_depend_on_the_future() {
    // Stopping the campaign after day 4 leaves everything before it intact.
    let world = small_world(4);
    let full = three_groups(world.n_users, 4, None);
    let short = MarketSetup { campaign_days: Some(4), ..full.clone() };
    let cut = 4 * 86_400 - 1;
    let a = run(&world, &full).log.truncated_at(cut);
    let b = run(&world, &short).log.truncated_at(cut);
    assert!(!a.events.is_empty());
    assert_eq!(a, b);
}

fn brute_force_precedent(log: &EventLog, lookback: i64) -> f64 {
    let actions: Vec<_> = log.events.iter().filter(|e| e.kind == EventKind::Action).collect();
    let preceded = actions
        .iter()
        .filter(|a| {
            log.events.iter().any(|e| {
                e.user_id == a.user_id
                    && e.kind == EventKind::Impression
                    && e.timestamp <= a.timestamp
                    && a.timestamp - e.timestamp <= lookback
            })
        })
        .count();
    preceded as f64 / actions.len() as f64
}

#[test]
fn precedent_fraction_matches_brute_force() {
    let world = WorldConfig { behavior_events: false, ..small_world(11) };
    let r = run(&world, &three_groups(world.n_users, 11, None));
    for days in [1, 3, 7] {
        let fast = precedent_impression_fraction(&r.log, AdvertiserId(1), days).unwrap();
        let slow = brute_force_precedent(&r.log, days as i64 * 86_400);
        assert!((fast - slow).abs() < 1e-12, "{days}: {fast} vs {slow}");
    }
    assert_eq!(summarize(&r.log, 7).actions, r.log.count(EventKind::Action));
}

#[test]
fn realized_actions_track_expected_actions() {
    let world = WorldConfig { n_users: 3000, behavior_events: false, ..small_world(3) };
    let r = run(&world, &three_groups(world.n_users, 3, None));
    let expected: f64 = r.groups.iter().map(|g| g.expected_actions).sum();
    let realized = r.groups.iter().map(|g| g.actions).sum::<u64>() as f64;
    // Sum of independent Bernoulli trials; variance is below the mean.
    assert!((realized - expected).abs() < 4.0 * expected.sqrt(), "{realized} vs {expected}");
}

#[test]
fn logs_are_reproducible_and_seed_sensitive() {
    let setup = three_groups(300, 1, Some(200));
    let a = run(&small_world(1), &setup).log.to_bytes();
    let b = run(&small_world(1), &setup).log.to_bytes();
    let c = run(&small_world(2), &setup).log.to_bytes();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let back = EventLog::read_from(&a[..]).unwrap();
    assert_eq!(back.to_bytes(), a);
}
