use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use liftbid_bench::{index_of, small_log};
use liftbid_core::bidders::calibrate_equal_attribution;
use liftbid_core::lift::{fit_isotonic, generate_samples, train_gbdt, GbdtParams, SamplingConfig};
use liftbid_core::world::{
    generate_population, simulate_market, MarketBidder, MarketSetup, OracleEstimator, WorldConfig,
};
use liftbid_core::{run_auction, AdvertiserId, BidderConfig, BidderId, Campaign, Money};

fn auction(c: &mut Criterion) {
    let bids = [
        (BidderId::COMPETITOR, Money::from_micros(3_500_000)),
        (BidderId::DSP1, Money::from_micros(4_000_000)),
        (BidderId::DSP2, Money::from_micros(3_800_000)),
    ];
    let mut seed = 0u64;
    c.bench_function("second_price_auction", |b| {
        b.iter(|| {
            seed += 1;
            run_auction(black_box(&bids), Money::ZERO, seed)
        })
    });
}

fn market(c: &mut Criterion) {
    let world = WorldConfig { n_users: 2000, horizon_days: 7, behavior_events: false, ..WorldConfig::default() };
    let population = generate_population(&world).unwrap();
    let campaign = Campaign::new(AdvertiserId(1), Money::from_units(100), Money::ZERO, 2).unwrap();
    let bidders = vec![
        MarketBidder { id: BidderId::DSP1, config: BidderConfig::value(100.0), budget: None },
        MarketBidder { id: BidderId::DSP2, config: BidderConfig::lift(250.0), budget: None },
    ];
    let setup = MarketSetup::single_group(campaign, bidders, population.len());
    let mut g = c.benchmark_group("market");
    g.sample_size(10);
    g.bench_function("simulate_2000_users_week", |b| {
        b.iter(|| simulate_market(&population, &setup, &world, &OracleEstimator, "bench", false).unwrap())
    });
    g.bench_function("equal_attribution_1000_users", |b| {
        b.iter(|| calibrate_equal_attribution(black_box(&population[..1000]), 100.0, 0.0).unwrap())
    });
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let log = small_log(1000);
    let index = index_of(&log);
    let sampling = SamplingConfig { target_positive_count: 1000, max_samples: 20_000, ..SamplingConfig::default() };
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("generate_samples", |b| b.iter(|| generate_samples(&index, &sampling).unwrap()));

    let set = generate_samples(&index, &sampling).unwrap();
    let rows: Vec<&[f64]> = set.samples.iter().map(|s| s.features.values.as_slice()).collect();
    let labels: Vec<bool> = set.samples.iter().map(|s| s.label).collect();
    let params = GbdtParams { n_trees: 20, ..GbdtParams::default() };
    g.bench_function("train_gbdt_20_trees", |b| b.iter(|| train_gbdt(&rows, &labels, None, &params, 0).unwrap()));

    let scores: Vec<f64> = (0..20_000).map(|i| ((i * 7919) % 20_000) as f64).collect();
    let y: Vec<f64> = scores.iter().map(|s| (*s as u64 * 31).is_multiple_of(7) as u8 as f64).collect();
    g.bench_function("isotonic_20000", |b| {
        b.iter_batched(|| (scores.clone(), y.clone()), |(s, y)| fit_isotonic(&s, &y, None), BatchSize::SmallInput)
    });
    g.finish();
}

criterion_group!(benches, auction, market, pipeline);
criterion_main!(benches);
