//! Domain types shared by every module: probabilities, integer money,
//! identifiers, campaigns, ground-truth users and bid requests.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("background AR p - delta_p = {0} outside [0, 1]")]
    InvalidBackground(f64),
    #[error("request rate {0} must be finite and >= 0")]
    InvalidRequestRate(f64),
    #[error("amount {0} is not a finite currency value")]
    NonFiniteAmount(f64),
    #[error("campaign cpa must be > 0")]
    NonPositiveCpa,
    #[error("campaign budget must be >= 0")]
    NegativeBudget,
    #[error("negative bid {0}")]
    NegativeBid(Money),
}

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self, MarketError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(MarketError::ProbabilityOutOfRange(value))
        }
    }

    /// Clamp into `[0, 1]`. NaN maps to zero.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Probability(0.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = MarketError;
    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const MICROS_PER_UNIT: i64 = 1_000_000;

/// Integer amount of micro-currency (10^-6 units).
///
/// All auction comparisons happen on this type so they are exact and
/// platform independent. Real-valued prices are converted once, with
/// round-half-even at the micro.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * MICROS_PER_UNIT)
    }

    /// Convert a real currency amount, rounding half-to-even at the micro.
    pub fn from_currency(amount: f64) -> Result<Self, MarketError> {
        if !amount.is_finite() {
            return Err(MarketError::NonFiniteAmount(amount));
        }
        let micros = (amount * MICROS_PER_UNIT as f64).round_ties_even();
        if micros.abs() > i64::MAX as f64 / 2.0 {
            return Err(MarketError::NonFiniteAmount(amount));
        }
        Ok(Money(micros as i64))
    }

    /// Like [`Money::from_currency`] but bids never go below zero and
    /// non-finite inputs produce a zero bid.
    pub fn bid_from_currency(amount: f64) -> Self {
        match Money::from_currency(amount) {
            Ok(m) if m.0 > 0 => m,
            _ => Money::ZERO,
        }
    }

    #[inline]
    pub const fn micros(self) -> i64 {
        self.0
    }

    #[inline]
    pub fn to_currency(self) -> f64 {
        self.0 as f64 / MICROS_PER_UNIT as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn checked_mul(self, n: i64) -> Option<Money> {
        self.0.checked_mul(n).map(Money)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Money {
    /// `$3.5`, `$4`, `-$0.000001`: trailing zeros of the fraction dropped.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let units = abs / MICROS_PER_UNIT as u64;
        let frac = abs % MICROS_PER_UNIT as u64;
        if frac == 0 {
            write!(f, "{sign}${units}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{sign}${units}.{}", digits.trim_end_matches('0'))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdvertiserId(pub u32);

/// Identifies a bidder in an auction. `BidderId::COMPETITOR` is the
/// exogenous market.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BidderId(pub u32);

impl BidderId {
    pub const COMPETITOR: BidderId = BidderId(0);
    pub const DSP1: BidderId = BidderId(1);
    pub const DSP2: BidderId = BidderId(2);
}

impl fmt::Display for BidderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BidderId::COMPETITOR => f.write_str("competitor"),
            BidderId(n) => write!(f, "dsp{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

/// A CPA-priced campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub advertiser_id: AdvertiserId,
    pub cpa: Money,
    pub budget: Money,
    pub action_window_days: u32,
}

impl Campaign {
    pub fn new(
        advertiser_id: AdvertiserId,
        cpa: Money,
        budget: Money,
        action_window_days: u32,
    ) -> Result<Self, MarketError> {
        let c = Campaign { advertiser_id, cpa, budget, action_window_days };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.cpa.micros() <= 0 {
            return Err(MarketError::NonPositiveCpa);
        }
        if self.budget.is_negative() {
            return Err(MarketError::NegativeBudget);
        }
        Ok(())
    }

    pub fn action_window_seconds(&self) -> i64 {
        self.action_window_days as i64 * 86_400
    }
}

/// Per-user behavioral propensities used to generate timeline events.
/// Rates are expected events per day.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub page_view_rates: Vec<f64>,
    pub search_rates: Vec<f64>,
    pub app_install_rates: Vec<f64>,
    pub app_use_rates: Vec<f64>,
    pub click_probability: f64,
    pub age_group: u32,
    pub gender: u32,
    pub geo_area: u32,
}

/// A simulated user with known action rate `p` when shown the ad and
/// lift `delta_p`; `p - delta_p` is the background rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthUser {
    pub user_id: UserId,
    pub p: Probability,
    pub delta_p: f64,
    pub request_rate: f64,
    pub behavior: BehaviorProfile,
}

impl GroundTruthUser {
    pub fn new(
        user_id: UserId,
        p: f64,
        delta_p: f64,
        request_rate: f64,
        behavior: BehaviorProfile,
    ) -> Result<Self, MarketError> {
        let p = Probability::new(p)?;
        let background = p.value() - delta_p;
        if !(0.0..=1.0).contains(&background) {
            return Err(MarketError::InvalidBackground(background));
        }
        if !(request_rate.is_finite() && request_rate >= 0.0) {
            return Err(MarketError::InvalidRequestRate(request_rate));
        }
        Ok(GroundTruthUser { user_id, p, delta_p, request_rate, behavior })
    }

    /// Shorthand for a user with only `(p, delta_p)` and one request per day.
    pub fn simple(user_id: u64, p: f64, delta_p: f64) -> Result<Self, MarketError> {
        GroundTruthUser::new(UserId(user_id), p, delta_p, 1.0, BehaviorProfile::default())
    }

    pub fn background(&self) -> f64 {
        self.p.value() - self.delta_p
    }

    /// Action probability given exposure.
    pub fn action_rate(&self, exposed: bool) -> f64 {
        if exposed {
            self.p.value()
        } else {
            self.background()
        }
    }
}

/// Run-time context of an ad request: the page topic, app and geo it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RequestContext {
    pub topic: Option<u32>,
    pub app: Option<u32>,
    pub geo: Option<u32>,
}

impl RequestContext {
    pub fn is_empty(&self) -> bool {
        self.topic.is_none() && self.app.is_none() && self.geo.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidRequest {
    pub request_id: RequestId,
    pub user_id: UserId,
    pub timestamp: i64,
    pub context: RequestContext,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_rejects_out_of_range() {
        assert!(Probability::new(-0.01).is_err());
        assert!(Probability::new(1.01).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::new(0.0).unwrap().value(), 0.0);
        assert_eq!(Probability::new(1.0).unwrap().value(), 1.0);
    }

    #[test]
    fn money_rounds_half_even_at_micro() {
        assert_eq!(Money::from_currency(0.0000005).unwrap().micros(), 0);
        assert_eq!(Money::from_currency(0.0000015).unwrap().micros(), 2);
        assert_eq!(Money::from_currency(0.0000025).unwrap().micros(), 2);
        assert_eq!(Money::from_currency(3.5).unwrap(), Money::from_micros(3_500_000));
        assert!(Money::from_currency(f64::INFINITY).is_err());
    }

    #[test]
    fn money_display() {
        assert_eq!(Money::from_units(4).to_string(), "$4");
        assert_eq!(Money::from_micros(3_500_000).to_string(), "$3.5");
        assert_eq!(Money::from_micros(-1).to_string(), "-$0.000001");
        assert_eq!(Money::from_micros(278_730_000).to_string(), "$278.73");
    }

    #[test]
    fn user_background_must_be_probability() {
        assert!(GroundTruthUser::simple(1, 0.04, 0.01).is_ok());
        assert!(GroundTruthUser::simple(1, 0.04, 0.05).is_err());
        // Negative lift is representable while background stays <= 1.
        assert!(GroundTruthUser::simple(1, 0.04, -0.5).is_ok());
        assert!(GroundTruthUser::simple(1, 0.9, -0.2).is_err());
        let u = GroundTruthUser::simple(1, 0.02, 0.019).unwrap();
        assert!((u.background() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn campaign_validation() {
        assert!(Campaign::new(AdvertiserId(1), Money::ZERO, Money::ZERO, 2).is_err());
        assert!(Campaign::new(AdvertiserId(1), Money::from_units(1), Money::from_micros(-1), 2).is_err());
        assert!(Campaign::new(AdvertiserId(1), Money::from_units(100), Money::ZERO, 2).is_ok());
    }
}
