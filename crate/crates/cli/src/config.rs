//! Run configuration: one TOML file per run, with `key.path=value`
//! overrides applied before validation.

use std::path::Path;

use liftbid_core::digest::digest_of;
use liftbid_core::harness::{ABTestConfig, RecoveryConfig, SweepConfig, TrainingWorld};
use liftbid_core::lift::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. It replaces the seed of every section.
    pub seed: u64,
    #[serde(default)]
    pub simulate: TrainingWorld,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
    #[serde(default)]
    pub verify: SweepConfig,
    #[serde(default)]
    pub abtest: ABTestConfig,
}

/// Training defaults sized for the default simulated world.
fn default_train() -> TrainConfig {
    RecoveryConfig::default().train
}

impl RunConfig {
    fn defaults() -> Self {
        RunConfig {
            seed: 0,
            simulate: TrainingWorld::default(),
            train: default_train(),
            verify: SweepConfig::default(),
            abtest: ABTestConfig::default(),
        }
    }

    #[cfg(test)]
    pub fn with_seed(seed: u64) -> Self {
        let mut c = RunConfig { seed, ..RunConfig::defaults() };
        c.propagate_seed();
        c
    }

    fn propagate_seed(&mut self) {
        let s = self.seed;
        self.simulate.world.seed = s;
        self.train.seed = s;
        self.train.sampling.seed = s;
        self.verify.seed = s;
        self.abtest.seed = s;
    }

    /// Digest of the effective configuration, stamped on every output.
    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// Read a config file (or start empty), apply overrides and lay the
    /// result over the defaults. Only `seed` is required.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::from_iter([("seed".to_string(), toml::Value::Integer(0))]),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if !table.contains_key("seed") {
            return Err(CliError::Config("missing field `seed`".into()));
        }
        let mut merged = toml::Table::try_from(RunConfig::defaults()).expect("defaults serialize");
        merge(&mut merged, table);
        let mut cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.propagate_seed();
        Ok(cfg)
    }
}

/// Keys that tag an enum variant. A table carrying one replaces the
/// default wholesale, since fields of another variant would not fit.
const VARIANT_TAGS: [&str; 2] = ["kind", "rule"];

/// Overlay `user` on `base`: tables merge key by key, anything else
/// replaces.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u))
                if !VARIANT_TAGS.iter().any(|t| u.contains_key(*t)) =>
            {
                merge(b, u)
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Set `a.b.c=value`, creating tables on the way. The value is read as a
/// TOML literal and falls back to a bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("{key}: {p} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
