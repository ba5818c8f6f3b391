use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use liftbid_core::harness::recovery::{training_log, RecoveryConfig, TrainingWorld};
use liftbid_core::lift::features::{FeatureSchema, NEVER};
use liftbid_core::lift::{
    counterfactual_features, extract_features, generate_samples, schema_for_log, train_model, GbdtParams,
    SamplingConfig, TimelineIndex, TrainConfig,
};
use liftbid_core::seed::rng_for;
use liftbid_core::world::eventlog::{EventKind, EventLog};
use liftbid_core::world::WorldConfig;
use liftbid_core::AdvertiserId;

const DAY: i64 = 86_400;

fn small_config() -> RecoveryConfig {
    RecoveryConfig {
        market: TrainingWorld {
            world: WorldConfig { n_users: 2500, horizon_days: 14, seed: 21, ..WorldConfig::default() },
            ..TrainingWorld::default()
        },
        train: TrainConfig {
            sampling: SamplingConfig {
                target_positive_count: 6000,
                max_samples: 80_000,
                seed: 21,
                ..Default::default()
            },
            gbdt: GbdtParams { n_trees: 60, ..GbdtParams::default() },
            seed: 21,
            ..TrainConfig::default()
        },
    }
}

fn world() -> &'static (EventLog, TimelineIndex) {
    static W: OnceLock<(EventLog, TimelineIndex)> = OnceLock::new();
    W.get_or_init(|| {
        let log = training_log(&small_config().market, "pipeline").unwrap();
        let index = TimelineIndex::new(&log, Arc::new(schema_for_log(&log)));
        (log, index)
    })
}

/// Recency bucket written out by hand: 1h, 6h, 1d, 3d, 7d, older, never.
fn bucket(age: Option<i64>) -> f64 {
    match age {
        None => 6.0,
        Some(a) if a <= 3_600 => 0.0,
        Some(a) if a <= 6 * 3_600 => 1.0,
        Some(a) if a <= DAY => 2.0,
        Some(a) if a <= 3 * DAY => 3.0,
        Some(a) if a <= 7 * DAY => 4.0,
        Some(_) => 5.0,
    }
}

/// Frequency and recency of one (kind, subject) pair by a full log scan.
fn scan(log: &EventLog, user: u64, kind: EventKind, subject: u32, ts: i64, fw: i64) -> (f64, f64) {
    let hits: Vec<i64> = log
        .events
        .iter()
        .filter(|e| e.user_id.0 == user && e.kind == kind && e.subject == Some(subject))
        .filter(|e| e.timestamp > ts - fw && e.timestamp <= ts)
        .map(|e| e.timestamp)
        .collect();
    (hits.len() as f64, bucket(hits.iter().max().map(|t| ts - t)))
}

fn probes(log: &EventLog, n: usize, seed: u64) -> Vec<(u64, i64)> {
    let mut rng = rng_for(seed, 0, 0);
    (0..n)
        .map(|_| {
            let u = log.users[rng.random_range(0..log.users.len())].user_id.0;
            (u, rng.random_range(0..log.header.horizon_seconds))
        })
        .collect()
}

#[test]
fn features_never_see_the_future() {
    let (log, index) = world();
    let fw = 7 * DAY;
    for (u, ts) in probes(log, 1000, 1) {
        let u = liftbid_core::UserId(u);
        let full = index.extract(u, ts, fw).unwrap();
        // The user's own history up to `ts`, in a log of its own.
        let past = EventLog {
            header: log.header.clone(),
            users: vec![log.user(u).unwrap().clone()],
            events: log.events.iter().filter(|e| e.user_id == u && e.timestamp <= ts).copied().collect(),
        };
        let cut = extract_features(&past, &index.schema, u, ts, fw).unwrap();
        assert_eq!(full.values, cut.values, "user {u:?} at {ts}");
    }
}

#[test]
fn features_match_a_direct_log_scan() {
    let (log, index) = world();
    let s: &FeatureSchema = &index.schema;
    let fw = 3 * DAY;
    let ad = AdvertiserId(1);
    for (u, ts) in probes(log, 150, 2) {
        let x = index.extract(liftbid_core::UserId(u), ts, fw).unwrap();
        let checks = [
            (EventKind::Impression, 1, s.imp_freq(ad), s.imp_rncy(ad)),
            (EventKind::Click, 1, s.clk_freq(ad), s.clk_rncy(ad)),
            (EventKind::PageView, 3, s.pv_freq(3), s.pv_rncy(3)),
            (EventKind::Search, 0, s.srch_freq(0), s.srch_rncy(0)),
            (EventKind::AppUse, 1, s.use_freq(1), s.use_rncy(1)),
        ];
        for (kind, subject, f, r) in checks {
            let (freq, rncy) = scan(log, u, kind, subject, ts, fw);
            assert_eq!(x.get(f), Some(freq), "{kind:?} frequency");
            assert_eq!(x.get(r), Some(rncy), "{kind:?} recency");
        }
        let rec = log.user(liftbid_core::UserId(u)).unwrap();
        assert_eq!(x.values[s.geo_area()], rec.geo_area as f64);
    }
}

#[test]
fn counterfactual_touches_exactly_two_coordinates() {
    let (log, index) = world();
    let ad = AdvertiserId(1);
    for (u, ts) in probes(log, 200, 3) {
        let x = index.extract(liftbid_core::UserId(u), ts, 7 * DAY).unwrap();
        let cf = counterfactual_features(&x, ad).unwrap();
        let changed = x.diff(&cf);
        let (f, r) = (index.schema.imp_freq(ad).unwrap(), index.schema.imp_rncy(ad).unwrap());
        assert_eq!(changed.len(), if x.values[r] == 0.0 { 1 } else { 2 }, "{changed:?}");
        assert_eq!(cf.values[f], x.values[f] + 1.0);
        assert_eq!(cf.values[r], 0.0);
    }
    // A fresh state always changes both.
    let mut x = index.extract(log.users[0].user_id, 0, 7 * DAY).unwrap();
    x.values[index.schema.imp_rncy(ad).unwrap()] = NEVER;
    assert_eq!(x.diff(&counterfactual_features(&x, ad).unwrap()).len(), 2);
}

#[test]
fn sampled_users_follow_request_counts() {
    let (log, index) = world();
    let users: Vec<_> = log.users.iter().take(400).map(|u| u.user_id).collect();
    let keep: std::collections::BTreeSet<_> = users.iter().copied().collect();
    let sub = EventLog {
        header: log.header.clone(),
        users: log.users.iter().filter(|u| keep.contains(&u.user_id)).cloned().collect(),
        events: log.events.iter().filter(|e| keep.contains(&e.user_id)).copied().collect(),
    };
    let sub_index = TimelineIndex::new(&sub, index.schema.clone());
    let cfg = SamplingConfig { target_positive_count: usize::MAX, max_samples: 40_000, seed: 8, ..Default::default() };
    let set = generate_samples(&sub_index, &cfg).unwrap();

    let mut observed: BTreeMap<_, f64> = BTreeMap::new();
    for s in &set.samples {
        *observed.entry(s.user_id).or_default() += 1.0;
    }
    let requests: Vec<f64> = users
        .iter()
        .map(|&u| sub.events.iter().filter(|e| e.user_id == u && e.kind == EventKind::AdRequest).count() as f64)
        .collect();
    let total_requests: f64 = requests.iter().sum();
    let n = set.samples.len() as f64;
    let mut chi2 = 0.0;
    let mut cells = 0;
    for (u, r) in users.iter().zip(&requests) {
        if *r == 0.0 {
            assert!(!observed.contains_key(u));
            continue;
        }
        let expected = n * r / total_requests;
        let o = observed.get(u).copied().unwrap_or(0.0);
        chi2 += (o - expected).powi(2) / expected;
        cells += 1;
    }
    let p = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2:.1} over {cells} cells, p = {p:.4}");
}

#[test]
fn trained_model_is_sane() {
    let (_, index) = world();
    let cfg = small_config();
    let a = train_model(index, &cfg.train).unwrap();
    assert!(a.model.isotonic.is_valid());
    assert!(!a.model.degenerate_calibration);
    let auc = a.test_auc.unwrap();
    assert!((0.6..0.95).contains(&auc), "auc {auc}");
    assert!(a.positives_from_unexposed_users > 0);

    // Exposure should raise the predicted AR on average.
    let (log, index) = world();
    let lifts: Vec<f64> = probes(log, 300, 4)
        .into_iter()
        .map(|(u, ts)| {
            let x = index.extract(liftbid_core::UserId(u), ts, 7 * DAY).unwrap();
            a.model.predict_lift(&x, AdvertiserId(1)).unwrap()
        })
        .collect();
    assert!(lifts.iter().sum::<f64>() > 0.0);

    // Retraining reproduces the model bit for bit.
    let b = train_model(index, &cfg.train).unwrap();
    assert_eq!(a.model.to_json(), b.model.to_json());
}
