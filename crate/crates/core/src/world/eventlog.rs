//! Line-delimited event log.
//!
//! Layout, one record per line, tab separated:
//!
//! ```text
//! #liftbid-eventlog  v1  seed=<u64>  digest=<hex>  horizon=<seconds>  advertiser=<id>
//! U  <user_id>  <group>  <p>  <delta_p>  <request_rate>  <age_group>  <gender>  <geo_area>
//! E  <timestamp>  <user_id>  <kind>  <subject>  <bidder>  <amount_micros>  <request_id>
//! ```
//!
//! Absent optional fields are written as `-`. Reals use the shortest
//! representation that round-trips, so writing the same log twice yields
//! identical bytes. `U` lines come first, ordered by user id; `E` lines
//! follow in `(timestamp, user_id, per-user sequence)` order.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{AdvertiserId, BidderId, Money, RequestId, UserId};

pub const FORMAT_TAG: &str = "#liftbid-eventlog";
pub const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> LogError {
    LogError::Parse { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AdRequest,
    Bid,
    Auction,
    Impression,
    Click,
    PageView,
    Search,
    AppInstall,
    AppUse,
    Action,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::AdRequest,
        EventKind::Bid,
        EventKind::Auction,
        EventKind::Impression,
        EventKind::Click,
        EventKind::PageView,
        EventKind::Search,
        EventKind::AppInstall,
        EventKind::AppUse,
        EventKind::Action,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::AdRequest => "ad_request",
            EventKind::Bid => "bid",
            EventKind::Auction => "auction",
            EventKind::Impression => "impression",
            EventKind::Click => "click",
            EventKind::PageView => "page_view",
            EventKind::Search => "search",
            EventKind::AppInstall => "app_install",
            EventKind::AppUse => "app_use",
            EventKind::Action => "action",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

/// One timeline event.
///
/// `subject` is the advertiser for impressions, clicks and actions, the
/// topic for ad requests, page views and searches, and the app for app
/// events. `bidder` is the bidding DSP for bids, the winner for auctions
/// and impressions, and the last-touch attributed DSP for actions.
/// `amount` is the bid for bids and the clearing price for auctions and
/// impressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub timestamp: i64,
    pub user_id: UserId,
    pub kind: EventKind,
    pub subject: Option<u32>,
    pub bidder: Option<BidderId>,
    pub amount: Option<Money>,
    pub request_id: Option<RequestId>,
}

impl TimelineEvent {
    pub fn new(timestamp: i64, user_id: UserId, kind: EventKind) -> Self {
        TimelineEvent { timestamp, user_id, kind, subject: None, bidder: None, amount: None, request_id: None }
    }

    pub fn subject(mut self, s: u32) -> Self {
        self.subject = Some(s);
        self
    }

    pub fn bidder(mut self, b: Option<BidderId>) -> Self {
        self.bidder = b;
        self
    }

    pub fn amount(mut self, m: Money) -> Self {
        self.amount = Some(m);
        self
    }

    pub fn request(mut self, r: RequestId) -> Self {
        self.request_id = Some(r);
        self
    }

    pub fn is_impression_of(&self, advertiser: AdvertiserId) -> bool {
        self.kind == EventKind::Impression && self.subject == Some(advertiser.0)
    }
}

/// Per-user record stored alongside the events: ground truth and demographics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub group: u32,
    pub p: f64,
    pub delta_p: f64,
    pub request_rate: f64,
    pub age_group: u32,
    pub gender: u32,
    pub geo_area: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub seed: u64,
    pub config_digest: String,
    pub horizon_seconds: i64,
    pub advertiser: AdvertiserId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    pub users: Vec<UserRecord>,
    pub events: Vec<TimelineEvent>,
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn parse_opt<T: FromStr>(s: &str, line: usize, what: &str) -> Result<Option<T>, LogError> {
    if s == "-" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| parse_err(line, format!("bad {what} {s:?}")))
}

fn parse<T: FromStr>(s: &str, line: usize, what: &str) -> Result<T, LogError> {
    s.parse().map_err(|_| parse_err(line, format!("bad {what} {s:?}")))
}

impl EventLog {
    pub fn user(&self, id: UserId) -> Option<&UserRecord> {
        self.users.binary_search_by_key(&id, |u| u.user_id).ok().map(|i| &self.users[i])
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        let h = &self.header;
        writeln!(
            w,
            "{FORMAT_TAG}\t{FORMAT_VERSION}\tseed={}\tdigest={}\thorizon={}\tadvertiser={}",
            h.seed, h.config_digest, h.horizon_seconds, h.advertiser.0
        )?;
        for u in &self.users {
            writeln!(
                w,
                "U\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                u.user_id.0, u.group, u.p, u.delta_p, u.request_rate, u.age_group, u.gender, u.geo_area
            )?;
        }
        for e in &self.events {
            writeln!(
                w,
                "E\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.timestamp,
                e.user_id.0,
                e.kind,
                opt(e.subject),
                opt(e.bidder.map(|b| b.0)),
                opt(e.amount.map(|m| m.micros())),
                opt(e.request_id.map(|r| r.0)),
            )?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<EventLog, LogError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| parse_err(1, "empty log"))??;
        let header = Self::parse_header(&first)?;
        let mut users = Vec::new();
        let mut events = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let n = i + 2;
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            match f[0] {
                "U" if f.len() == 9 => users.push(UserRecord {
                    user_id: UserId(parse(f[1], n, "user id")?),
                    group: parse(f[2], n, "group")?,
                    p: parse(f[3], n, "p")?,
                    delta_p: parse(f[4], n, "delta_p")?,
                    request_rate: parse(f[5], n, "request rate")?,
                    age_group: parse(f[6], n, "age group")?,
                    gender: parse(f[7], n, "gender")?,
                    geo_area: parse(f[8], n, "geo area")?,
                }),
                "E" if f.len() == 8 => events.push(TimelineEvent {
                    timestamp: parse(f[1], n, "timestamp")?,
                    user_id: UserId(parse(f[2], n, "user id")?),
                    kind: f[3].parse().map_err(|m: String| parse_err(n, m))?,
                    subject: parse_opt(f[4], n, "subject")?,
                    bidder: parse_opt(f[5], n, "bidder")?.map(BidderId),
                    amount: parse_opt(f[6], n, "amount")?.map(Money::from_micros),
                    request_id: parse_opt(f[7], n, "request id")?.map(RequestId),
                }),
                _ => return Err(parse_err(n, format!("malformed record {:?}", f[0]))),
            }
        }
        if users.windows(2).any(|w| w[0].user_id >= w[1].user_id) {
            return Err(parse_err(0, "user records must be sorted by id"));
        }
        Ok(EventLog { header, users, events })
    }

    fn parse_header(line: &str) -> Result<LogHeader, LogError> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 || f[0] != FORMAT_TAG {
            return Err(parse_err(1, "missing event log header"));
        }
        if f[1] != FORMAT_VERSION {
            return Err(parse_err(1, format!("unsupported version {}", f[1])));
        }
        let field = |i: usize, key: &str| -> Result<&str, LogError> {
            f[i].strip_prefix(key)
                .and_then(|s| s.strip_prefix('='))
                .ok_or_else(|| parse_err(1, format!("expected {key}=")))
        };
        Ok(LogHeader {
            seed: parse(field(2, "seed")?, 1, "seed")?,
            config_digest: field(3, "digest")?.to_string(),
            horizon_seconds: parse(field(4, "horizon")?, 1, "horizon")?,
            advertiser: AdvertiserId(parse(field(5, "advertiser")?, 1, "advertiser")?),
        })
    }

    /// Event indices grouped by user, each in log order.
    pub fn index_by_user(&self) -> std::collections::BTreeMap<UserId, Vec<usize>> {
        let mut map: std::collections::BTreeMap<UserId, Vec<usize>> = std::collections::BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            map.entry(e.user_id).or_default().push(i);
        }
        map
    }

    /// Drop every event after `ts`.
    pub fn truncated_at(&self, ts: i64) -> EventLog {
        EventLog {
            header: self.header.clone(),
            users: self.users.clone(),
            events: self.events.iter().copied().filter(|e| e.timestamp <= ts).collect(),
        }
    }
}
