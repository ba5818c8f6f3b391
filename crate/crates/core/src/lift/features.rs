//! Feature extraction over a user's timeline.
//!
//! Frequencies count events in the feature window `(ts - fw, ts]`.
//! Recencies are ordinal buckets of the age of the newest such event:
//! `0` = within an hour (most recent) up to `5` = older than a week but
//! inside the window, and `6` = never.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::LiftError;
use crate::market::{AdvertiserId, RequestContext, UserId};
use crate::world::eventlog::{EventKind, EventLog, LogHeader, TimelineEvent, UserRecord};

/// Upper edges, in seconds, of the recency buckets: 1h, 6h, 1d, 3d, 7d.
pub const RECENCY_LIMITS: [i64; 5] = [3_600, 21_600, 86_400, 259_200, 604_800];
pub const MOST_RECENT: f64 = 0.0;
pub const OLDER: f64 = 5.0;
pub const NEVER: f64 = 6.0;

pub fn recency_bucket(age_seconds: Option<i64>) -> f64 {
    match age_seconds {
        None => NEVER,
        Some(age) => RECENCY_LIMITS.iter().position(|&l| age <= l).map_or(OLDER, |i| i as f64),
    }
}

/// Static demographic attributes of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demographics {
    pub age_group: u32,
    pub gender: u32,
    pub geo_area: u32,
}

impl From<&UserRecord> for Demographics {
    fn from(u: &UserRecord) -> Self {
        Demographics { age_group: u.age_group, gender: u.gender, geo_area: u.geo_area }
    }
}

impl From<&crate::market::BehaviorProfile> for Demographics {
    fn from(b: &crate::market::BehaviorProfile) -> Self {
        Demographics { age_group: b.age_group, gender: b.gender, geo_area: b.geo_area }
    }
}

/// Layout of the feature vector: per-advertiser impression and click
/// features, per-topic page-view and search features, demographics, then
/// per-app install and usage features. Every group is (frequency, recency).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub advertisers: Vec<u32>,
    pub topics: u32,
    pub apps: u32,
}

impl FeatureSchema {
    pub fn new(advertisers: Vec<u32>, topics: u32, apps: u32) -> Self {
        FeatureSchema { advertisers, topics, apps }
    }

    pub fn len(&self) -> usize {
        4 * self.advertisers.len() + 4 * self.topics as usize + 3 + 4 * self.apps as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn advertiser_slot(&self, a: AdvertiserId) -> Option<usize> {
        self.advertisers.iter().position(|&x| x == a.0)
    }

    pub fn imp_freq(&self, a: AdvertiserId) -> Option<usize> {
        self.advertiser_slot(a).map(|s| 4 * s)
    }
    pub fn imp_rncy(&self, a: AdvertiserId) -> Option<usize> {
        self.imp_freq(a).map(|i| i + 1)
    }
    pub fn clk_freq(&self, a: AdvertiserId) -> Option<usize> {
        self.imp_freq(a).map(|i| i + 2)
    }
    pub fn clk_rncy(&self, a: AdvertiserId) -> Option<usize> {
        self.imp_freq(a).map(|i| i + 3)
    }

    fn topic_base(&self, t: u32) -> Option<usize> {
        (t < self.topics).then(|| 4 * self.advertisers.len() + 4 * t as usize)
    }
    pub fn pv_freq(&self, t: u32) -> Option<usize> {
        self.topic_base(t)
    }
    pub fn pv_rncy(&self, t: u32) -> Option<usize> {
        self.topic_base(t).map(|i| i + 1)
    }
    pub fn srch_freq(&self, t: u32) -> Option<usize> {
        self.topic_base(t).map(|i| i + 2)
    }
    pub fn srch_rncy(&self, t: u32) -> Option<usize> {
        self.topic_base(t).map(|i| i + 3)
    }

    pub fn age_group(&self) -> usize {
        4 * self.advertisers.len() + 4 * self.topics as usize
    }
    pub fn gender(&self) -> usize {
        self.age_group() + 1
    }
    pub fn geo_area(&self) -> usize {
        self.age_group() + 2
    }

    fn app_base(&self, app: u32) -> Option<usize> {
        (app < self.apps).then(|| self.age_group() + 3 + 4 * app as usize)
    }
    pub fn inst_freq(&self, app: u32) -> Option<usize> {
        self.app_base(app)
    }
    pub fn inst_rncy(&self, app: u32) -> Option<usize> {
        self.app_base(app).map(|i| i + 1)
    }
    pub fn use_freq(&self, app: u32) -> Option<usize> {
        self.app_base(app).map(|i| i + 2)
    }
    pub fn use_rncy(&self, app: u32) -> Option<usize> {
        self.app_base(app).map(|i| i + 3)
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for a in &self.advertisers {
            for n in ["IMP_FREQ_ADV", "IMP_RNCY_ADV", "CLK_FREQ_ADV", "CLK_RNCY_ADV"] {
                out.push(format!("{n}[{a}]"));
            }
        }
        for t in 0..self.topics {
            for n in ["PV_FREQ_TOPIC", "PV_RNCY_TOPIC", "SRCH_FREQ_TOPIC", "SRCH_RNCY_TOPIC"] {
                out.push(format!("{n}[{t}]"));
            }
        }
        out.extend(["AGE_GROUP", "GENDER", "GEO_AREA"].map(String::from));
        for app in 0..self.apps {
            for n in ["INST_FREQ_APP", "INST_RNCY_APP", "USE_FREQ_APP", "USE_RNCY_APP"] {
                out.push(format!("{n}[{app}]"));
            }
        }
        out
    }

    /// Digest of the ordered feature names.
    pub fn digest(&self) -> String {
        let mut s = String::new();
        for n in self.names() {
            let _ = writeln!(s, "{n}");
        }
        crate::digest::short_digest(s.as_bytes())
    }

    fn is_recency(&self, index: usize) -> bool {
        let demo = self.age_group();
        if index < demo {
            index % 2 == 1
        } else if index < demo + 3 {
            false
        } else {
            (index - demo - 3) % 2 == 1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema: Arc<FeatureSchema>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// All frequencies zero, all recencies "never", demographics zero.
    pub fn empty(schema: Arc<FeatureSchema>) -> Self {
        let values = (0..schema.len()).map(|i| if schema.is_recency(i) { NEVER } else { 0.0 }).collect();
        FeatureVector { schema, values }
    }

    pub fn get(&self, index: Option<usize>) -> Option<f64> {
        index.map(|i| self.values[i])
    }

    /// Coordinates where `self` and `other` differ.
    pub fn diff(&self, other: &FeatureVector) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.values[i] != other.values[i]).collect()
    }
}

fn bump(values: &mut [f64], freq: Option<usize>, rncy: Option<usize>, bucket: f64) {
    if let (Some(f), Some(r)) = (freq, rncy) {
        values[f] += 1.0;
        values[r] = values[r].min(bucket);
    }
}

/// Features from one user's time-ordered events over `(ts - fw, ts]`.
pub fn features_from_events(
    schema: &Arc<FeatureSchema>,
    demographics: Demographics,
    events: &[TimelineEvent],
    ts: i64,
    fw: i64,
) -> FeatureVector {
    let mut fv = FeatureVector::empty(schema.clone());
    let lo = events.partition_point(|e| e.timestamp <= ts - fw);
    let hi = events.partition_point(|e| e.timestamp <= ts);
    let s = schema.as_ref();
    let v = &mut fv.values;
    for e in &events[lo..hi] {
        let bucket = recency_bucket(Some(ts - e.timestamp));
        let subject = e.subject;
        match (e.kind, subject) {
            (EventKind::Impression, Some(a)) => {
                bump(v, s.imp_freq(AdvertiserId(a)), s.imp_rncy(AdvertiserId(a)), bucket)
            }
            (EventKind::Click, Some(a)) => bump(v, s.clk_freq(AdvertiserId(a)), s.clk_rncy(AdvertiserId(a)), bucket),
            (EventKind::PageView, Some(t)) => bump(v, s.pv_freq(t), s.pv_rncy(t), bucket),
            (EventKind::Search, Some(t)) => bump(v, s.srch_freq(t), s.srch_rncy(t), bucket),
            (EventKind::AppInstall, Some(a)) => bump(v, s.inst_freq(a), s.inst_rncy(a), bucket),
            (EventKind::AppUse, Some(a)) => bump(v, s.use_freq(a), s.use_rncy(a), bucket),
            _ => {}
        }
    }
    v[s.age_group()] = demographics.age_group as f64;
    v[s.gender()] = demographics.gender as f64;
    v[s.geo_area()] = demographics.geo_area as f64;
    fv
}

/// A log regrouped by user, for repeated extraction.
#[derive(Debug, Clone)]
pub struct TimelineIndex {
    pub schema: Arc<FeatureSchema>,
    pub header: LogHeader,
    pub records: Vec<UserRecord>,
    users: BTreeMap<UserId, (Demographics, Vec<TimelineEvent>)>,
}

impl TimelineIndex {
    pub fn new(log: &EventLog, schema: Arc<FeatureSchema>) -> Self {
        Self::from_log(log.clone(), schema)
    }

    /// Consumes the log so its events are not held twice.
    pub fn from_log(log: EventLog, schema: Arc<FeatureSchema>) -> Self {
        let mut users: BTreeMap<UserId, (Demographics, Vec<TimelineEvent>)> =
            log.users.iter().map(|u| (u.user_id, (Demographics::from(u), Vec::new()))).collect();
        for e in log.events {
            if let Some(entry) = users.get_mut(&e.user_id) {
                entry.1.push(e);
            }
        }
        for (_, events) in users.values_mut() {
            events.shrink_to_fit();
        }
        TimelineIndex { schema, header: log.header, records: log.users, users }
    }

    pub fn events(&self, user: UserId) -> Option<&[TimelineEvent]> {
        self.users.get(&user).map(|(_, e)| e.as_slice())
    }

    pub fn demographics(&self, user: UserId) -> Option<Demographics> {
        self.users.get(&user).map(|(d, _)| *d)
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.users.keys().copied()
    }

    pub fn extract(&self, user: UserId, ts: i64, fw: i64) -> Result<FeatureVector, LiftError> {
        let (demo, events) = self.users.get(&user).ok_or(LiftError::UnknownUser(user))?;
        Ok(features_from_events(&self.schema, *demo, events, ts, fw))
    }
}

/// Schema covering the log's advertiser and every topic/app id it mentions.
pub fn schema_for_log(log: &EventLog) -> FeatureSchema {
    let mut topics = 0;
    let mut apps = 0;
    let mut advertisers = std::collections::BTreeSet::from([log.header.advertiser.0]);
    for e in &log.events {
        match (e.kind, e.subject) {
            (EventKind::PageView | EventKind::Search | EventKind::AdRequest, Some(t)) => topics = topics.max(t + 1),
            (EventKind::AppInstall | EventKind::AppUse, Some(a)) => apps = apps.max(a + 1),
            (EventKind::Impression | EventKind::Click, Some(a)) => {
                advertisers.insert(a);
            }
            _ => {}
        }
    }
    FeatureSchema::new(advertisers.into_iter().collect(), topics, apps)
}

/// Features of `user` at `ts` computed directly from a log.
pub fn extract_features(
    log: &EventLog,
    schema: &Arc<FeatureSchema>,
    user: UserId,
    ts: i64,
    fw: i64,
) -> Result<FeatureVector, LiftError> {
    let record = log.user(user).ok_or(LiftError::UnknownUser(user))?;
    let events: Vec<TimelineEvent> = log.events.iter().filter(|e| e.user_id == user).copied().collect();
    Ok(features_from_events(schema, Demographics::from(record), &events, ts, fw))
}

/// Fold run-time request context into the features: the request's page
/// topic and app become "most recent" and the request geo replaces the
/// profile geo.
pub fn fold_context(features: &FeatureVector, context: &RequestContext) -> FeatureVector {
    let mut out = features.clone();
    let s = out.schema.clone();
    if let Some(i) = context.topic.and_then(|t| s.pv_rncy(t)) {
        out.values[i] = MOST_RECENT;
    }
    if let Some(i) = context.app.and_then(|a| s.use_rncy(a)) {
        out.values[i] = MOST_RECENT;
    }
    if let Some(g) = context.geo {
        out.values[s.geo_area()] = g as f64;
    }
    out
}

/// `F(s+(a))`: the same state with one more, most recent impression of `ad`.
pub fn counterfactual_features(features: &FeatureVector, ad: AdvertiserId) -> Result<FeatureVector, LiftError> {
    let s = features.schema.clone();
    let (f, r) = match (s.imp_freq(ad), s.imp_rncy(ad)) {
        (Some(f), Some(r)) => (f, r),
        _ => return Err(LiftError::UnknownAdvertiser(ad)),
    };
    let mut out = features.clone();
    out.values[f] += 1.0;
    out.values[r] = MOST_RECENT;
    Ok(out)
}
