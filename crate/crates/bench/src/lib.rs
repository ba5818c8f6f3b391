//! Fixtures shared by the benchmarks under `benches/`.

use std::sync::Arc;

use liftbid_core::harness::{training_log, TrainingWorld};
use liftbid_core::lift::{schema_for_log, TimelineIndex};
use liftbid_core::world::eventlog::EventLog;
use liftbid_core::world::WorldConfig;

/// A training-world log of `n_users` over one week.
pub fn small_log(n_users: usize) -> EventLog {
    let market = TrainingWorld {
        world: WorldConfig { n_users, horizon_days: 7, seed: 1, ..WorldConfig::default() },
        ..TrainingWorld::default()
    };
    training_log(&market, "bench").expect("bench world is valid")
}

pub fn index_of(log: &EventLog) -> TimelineIndex {
    TimelineIndex::new(log, Arc::new(schema_for_log(log)))
}
