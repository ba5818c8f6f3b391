//! Training samples drawn from every user's timeline, not just from
//! impression or click events.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{fold_context, FeatureSchema, FeatureVector, TimelineIndex};
use super::LiftError;
use crate::market::{RequestContext, UserId};
use crate::seed::{rng_for, streams};
use crate::world::eventlog::{EventKind, TimelineEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub action_window_seconds: i64,
    pub feature_window_seconds: i64,
    /// Stop once this many positives are drawn.
    pub target_positive_count: usize,
    /// Hard cap on draws.
    pub max_samples: usize,
    /// When positive, the context of the user's latest ad request within
    /// this many seconds before `ts` is folded into the features.
    pub context_lookback_seconds: i64,
    /// Keep at most this many negatives per positive. The kept negatives are
    /// a uniform subsample; the model adds `ln(keep_rate)` to its logit.
    pub negatives_per_positive: Option<f64>,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            action_window_seconds: 2 * 86_400,
            feature_window_seconds: 7 * 86_400,
            target_positive_count: 5_000,
            max_samples: 200_000,
            context_lookback_seconds: 0,
            negatives_per_positive: None,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), LiftError> {
        if self.action_window_seconds <= 0 || self.feature_window_seconds <= 0 {
            return Err(LiftError::Config("action and feature windows must be positive".into()));
        }
        if self.max_samples == 0 {
            return Err(LiftError::Config("max_samples must be positive".into()));
        }
        if self.context_lookback_seconds < 0 {
            return Err(LiftError::Config("context_lookback_seconds must be non-negative".into()));
        }
        if let Some(r) = self.negatives_per_positive {
            if !(r.is_finite() && r > 0.0) {
                return Err(LiftError::Config("negatives_per_positive must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub user_id: UserId,
    pub ts: i64,
    pub label: bool,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    PositivesReached,
    ActionsCovered,
    MaxSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingStats {
    pub draws: usize,
    pub positives: usize,
    pub negatives_drawn: usize,
    pub negatives_kept: usize,
    pub actions_total: usize,
    pub actions_covered: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct SampleSet {
    pub schema: Arc<FeatureSchema>,
    pub samples: Vec<TrainingSample>,
    /// Fraction of negatives kept; 1 without downsampling.
    pub negative_keep_rate: f64,
    pub stats: SamplingStats,
}

impl SampleSet {
    /// Additive logit correction for the negative downsampling.
    pub fn prior_correction(&self) -> f64 {
        self.negative_keep_rate.ln()
    }
}

/// Span on which a user's sample timestamps are drawn: from the user's
/// first to last event, cut so the label window stays inside the log.
fn sample_span(events: &[TimelineEvent], horizon: i64, aw: i64) -> Option<(i64, i64)> {
    let lo = events.first()?.timestamp;
    let hi = events.last()?.timestamp.min(horizon - aw).max(lo);
    Some((lo, hi))
}

fn latest_context(events: &[TimelineEvent], ts: i64, lookback: i64) -> Option<RequestContext> {
    let end = events.partition_point(|e| e.timestamp <= ts);
    events[..end]
        .iter()
        .rev()
        .take_while(|e| e.timestamp > ts - lookback)
        .find(|e| e.kind == EventKind::AdRequest)
        .map(|e| RequestContext { topic: e.subject, app: None, geo: None })
}

/// Draw training samples. Users are picked with probability proportional
/// to their ad-request count and `ts` uniformly on their timeline.
pub fn generate_samples(index: &TimelineIndex, config: &SamplingConfig) -> Result<SampleSet, LiftError> {
    config.validate()?;
    let advertiser = index.header.advertiser.0;
    let aw = config.action_window_seconds;
    let fw = config.feature_window_seconds;

    let users: Vec<UserId> = index.users().collect();
    let request_counts: Vec<u64> = users
        .iter()
        .map(|&u| index.events(u).unwrap_or(&[]).iter().filter(|e| e.kind == EventKind::AdRequest).count() as u64)
        .collect();
    if request_counts.iter().all(|&c| c == 0) {
        return Err(LiftError::NoRequests);
    }
    let picker = WeightedIndex::new(&request_counts).map_err(|e| LiftError::Config(e.to_string()))?;

    // Advertiser actions per user, with a covered flag each.
    let mut actions: BTreeMap<UserId, Vec<(i64, bool)>> = BTreeMap::new();
    for &u in &users {
        let times: Vec<(i64, bool)> = index
            .events(u)
            .unwrap_or(&[])
            .iter()
            .filter(|e| e.kind == EventKind::Action && e.subject == Some(advertiser))
            .map(|e| (e.timestamp, false))
            .collect();
        actions.insert(u, times);
    }
    let actions_total: usize = actions.values().map(Vec::len).sum();
    let mut actions_covered = 0;

    let mut rng = rng_for(config.seed, streams::SAMPLING, 0);
    let mut samples = Vec::new();
    let mut positives = 0;
    let mut draws = 0;
    let termination = loop {
        if positives >= config.target_positive_count {
            break Termination::PositivesReached;
        }
        if actions_total > 0 && actions_covered == actions_total {
            break Termination::ActionsCovered;
        }
        if draws >= config.max_samples {
            break Termination::MaxSamples;
        }
        draws += 1;
        let user = users[picker.sample(&mut rng)];
        let events = index.events(user).expect("indexed user");
        let Some((lo, hi)) = sample_span(events, index.header.horizon_seconds, aw) else { continue };
        let ts = rng.random_range(lo..=hi);

        let mut label = false;
        for (t, covered) in actions.get_mut(&user).expect("indexed user") {
            if *t > ts && *t <= ts + aw {
                label = true;
                if !*covered {
                    *covered = true;
                    actions_covered += 1;
                }
            }
        }
        positives += label as usize;

        let mut features = index.extract(user, ts, fw)?;
        if config.context_lookback_seconds > 0 {
            if let Some(ctx) = latest_context(events, ts, config.context_lookback_seconds) {
                features = fold_context(&features, &ctx);
            }
        }
        samples.push(TrainingSample { user_id: user, ts, label, features });
    };

    let negatives_drawn = samples.len() - positives;
    let mut keep_rate = 1.0;
    if let Some(ratio) = config.negatives_per_positive {
        let wanted = ratio * positives as f64;
        if negatives_drawn > 0 && wanted < negatives_drawn as f64 {
            keep_rate = wanted / negatives_drawn as f64;
            let mut thin = rng_for(config.seed, streams::SAMPLING, 1);
            samples.retain(|s| s.label || thin.random::<f64>() < keep_rate);
        }
    }
    let negatives_kept = samples.len() - positives;
    Ok(SampleSet {
        schema: index.schema.clone(),
        samples,
        negative_keep_rate: keep_rate,
        stats: SamplingStats {
            draws,
            positives,
            negatives_drawn,
            negatives_kept,
            actions_total,
            actions_covered,
            termination,
        },
    })
}

/// Line-delimited export: a header, the feature names, then one
/// `S<TAB>user<TAB>ts<TAB>label<TAB>v1,v2,...` line per sample.
pub fn write_samples<W: Write + ?Sized>(set: &SampleSet, header: &str, w: &mut W) -> io::Result<()> {
    writeln!(w, "#liftbid-samples\tv1\tschema={}\t{header}", set.schema.digest())?;
    writeln!(w, "#features\t{}", set.schema.names().join(","))?;
    for s in &set.samples {
        let values: Vec<String> = s.features.values.iter().map(|v| v.to_string()).collect();
        writeln!(w, "S\t{}\t{}\t{}\t{}", s.user_id.0, s.ts, s.label as u8, values.join(","))?;
    }
    Ok(())
}
