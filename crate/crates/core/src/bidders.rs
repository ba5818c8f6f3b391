//! Bidding strategies and the beta calibration procedures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{GroundTruthUser, Money, Probability};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("mean AR lift must be > 0 (got {0})")]
    NonPositiveMeanLift(f64),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("no user has positive lift; a lift bidder can never win")]
    NoPositiveLift,
    #[error("attribution values ({got}) do not match population size ({expected})")]
    AttributionLength { expected: usize, got: usize },
    #[error("{0} must be > 0")]
    NonPositiveScale(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BidderKind {
    Passive,
    Value,
    Lift,
    Rational,
}

/// How a rational bidder estimates `p(attribution | action)` for a user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributionEstimator {
    /// Full credit: `a = 1`, the industry eCPM.
    Full,
    /// Constant credit for every user.
    Constant { value: f64 },
    /// `a = clamp(normalization * delta_p / p, 0, 1)`.
    LiftProportional { normalization: f64 },
}

impl AttributionEstimator {
    pub fn estimate(&self, p: f64, delta_p: f64) -> Probability {
        match *self {
            AttributionEstimator::Full => Probability::ONE,
            AttributionEstimator::Constant { value } => Probability::saturating(value),
            AttributionEstimator::LiftProportional { normalization } => {
                if p > 0.0 {
                    Probability::saturating(normalization * delta_p / p)
                } else {
                    Probability::ZERO
                }
            }
        }
    }
}

/// Parameters of one bidder. `alpha`, `beta` and `cpa` are in currency
/// units; `cpa` only matters to rational bidders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidderConfig {
    pub kind: BidderKind,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub cpa: Money,
    #[serde(default)]
    pub attribution_estimator: Option<AttributionEstimator>,
}

fn one() -> f64 {
    1.0
}

impl BidderConfig {
    pub fn passive() -> Self {
        BidderConfig { kind: BidderKind::Passive, alpha: 1.0, beta: 1.0, cpa: Money::ZERO, attribution_estimator: None }
    }

    pub fn value(alpha: f64) -> Self {
        BidderConfig { kind: BidderKind::Value, alpha, ..BidderConfig::passive() }
    }

    pub fn lift(beta: f64) -> Self {
        BidderConfig { kind: BidderKind::Lift, beta, ..BidderConfig::passive() }
    }

    pub fn rational(cpa: Money, estimator: AttributionEstimator) -> Self {
        BidderConfig {
            kind: BidderKind::Rational,
            cpa,
            attribution_estimator: Some(estimator),
            ..BidderConfig::passive()
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        match self.kind {
            BidderKind::Value if !(self.alpha > 0.0) => Err(CalibrationError::NonPositiveScale("alpha")),
            BidderKind::Lift if !(self.beta > 0.0) => Err(CalibrationError::NonPositiveScale("beta")),
            BidderKind::Rational if self.cpa.micros() <= 0 => Err(CalibrationError::NonPositiveScale("cpa")),
            _ => Ok(()),
        }
    }

    /// Bid for a user whose (estimated) AR and lift are `p` and `delta_p`.
    pub fn bid(&self, p: Probability, delta_p: f64) -> Money {
        match self.kind {
            BidderKind::Passive => passive_bid(),
            BidderKind::Value => value_bid(p, self.alpha),
            BidderKind::Lift => lift_bid(delta_p, self.beta),
            BidderKind::Rational => {
                let a = self.attribution_estimator.unwrap_or(AttributionEstimator::Full).estimate(p.value(), delta_p);
                rational_bid(p, a, self.cpa)
            }
        }
    }
}

pub fn passive_bid() -> Money {
    Money::ZERO
}

/// `alpha * p`.
pub fn value_bid(p: Probability, alpha: f64) -> Money {
    Money::bid_from_currency(alpha * p.value())
}

/// `beta * max(delta_p, 0)`; a harmful ad gets a zero bid.
pub fn lift_bid(delta_p: f64, beta: f64) -> Money {
    Money::bid_from_currency(beta * delta_p.max(0.0))
}

/// `CPA * p * a`, the eCPM of a bidder attributed with probability `a`.
pub fn rational_bid(p: Probability, a: Probability, cpa: Money) -> Money {
    Money::bid_from_currency(cpa.to_currency() * p.value() * a.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub mean_p: f64,
    pub mean_delta_p: f64,
    pub n: usize,
}

impl PopulationStats {
    pub fn of(population: &[GroundTruthUser]) -> Result<Self, CalibrationError> {
        if population.is_empty() {
            return Err(CalibrationError::EmptyPopulation);
        }
        let n = population.len();
        let mean_p = population.iter().map(|u| u.p.value()).sum::<f64>() / n as f64;
        let mean_delta_p = population.iter().map(|u| u.delta_p).sum::<f64>() / n as f64;
        Ok(PopulationStats { mean_p, mean_delta_p, n })
    }
}

/// Market-fitting lift scale: `beta = mean(p) / mean(delta_p) * CPA`, so
/// each incremental action is worth the conventional price per action
/// scaled up by how rare incremental actions are.
pub fn calibrate_beta(stats: &PopulationStats, cpa: Money) -> Result<f64, CalibrationError> {
    if !(stats.mean_delta_p > 0.0) {
        return Err(CalibrationError::NonPositiveMeanLift(stats.mean_delta_p));
    }
    Ok(stats.mean_p / stats.mean_delta_p * cpa.to_currency())
}

/// Result of searching for the beta that equalises attributed actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualAttribution {
    pub beta: f64,
    /// `|attributed(DSP1) - attributed(DSP2)| / total expected actions`.
    pub residual: f64,
    pub within_tolerance: bool,
}

/// One user's place in the split search: the lift bidder outbids the
/// other bidder iff `beta > threshold`. `weight` is the user's expected
/// attributed actions.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    threshold: f64,
    weight: f64,
}

fn bracket_search(mut crossings: Vec<Crossing>, never_crossing: f64, total: f64, tolerance: f64) -> EqualAttribution {
    crossings.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));

    // Group equal thresholds: users with the same threshold switch together.
    let mut thresholds: Vec<f64> = Vec::new();
    let mut prefix: Vec<f64> = vec![0.0];
    for c in &crossings {
        if thresholds.last() == Some(&c.threshold) {
            *prefix.last_mut().unwrap() += c.weight;
        } else {
            thresholds.push(c.threshold);
            let last = *prefix.last().unwrap();
            prefix.push(last + c.weight);
        }
    }
    let m = thresholds.len();
    // Candidate i (0..=m) puts beta strictly between thresholds[i-1] and
    // thresholds[i]; the lift bidder then wins exactly the first i groups.
    let lift_side = |i: usize| prefix[i];
    let crossable = total - never_crossing;
    let residual = |i: usize| {
        let dsp1 = never_crossing + (crossable - lift_side(i));
        (dsp1 - lift_side(i)).abs() / total
    };

    // Monotone bisection for the first candidate where the lift side holds
    // at least half of the attributed actions.
    let (mut lo, mut hi) = (0usize, m);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if 2.0 * lift_side(mid) >= total {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let best = if lo > 0 && residual(lo - 1) <= residual(lo) { lo - 1 } else { lo };

    let beta = match (best, m) {
        (_, 0) => 1.0,
        (0, _) => thresholds[0] / 2.0,
        (i, m) if i == m => thresholds[m - 1] * 2.0,
        (i, _) => 0.5 * (thresholds[i - 1] + thresholds[i]),
    };
    let r = residual(best);
    EqualAttribution { beta, residual: r, within_tolerance: r <= tolerance }
}

/// Find `beta` such that a value bidder at `alpha` and a lift bidder at
/// `beta` receive (approximately) equal attributed actions under last-touch
/// attribution. Users with zero or negative lift always go to the value
/// bidder. The search is exact over the step function of `beta`: the
/// returned beta sits strictly between two user thresholds, so no user ties.
pub fn calibrate_equal_attribution(
    population: &[GroundTruthUser],
    alpha: f64,
    tolerance: f64,
) -> Result<EqualAttribution, CalibrationError> {
    if population.is_empty() {
        return Err(CalibrationError::EmptyPopulation);
    }
    if !(alpha > 0.0) {
        return Err(CalibrationError::NonPositiveScale("alpha"));
    }
    let total: f64 = population.iter().map(|u| u.p.value()).sum();
    let mut never = 0.0;
    let mut crossings = Vec::with_capacity(population.len());
    for u in population {
        if u.delta_p > 0.0 {
            crossings.push(Crossing { threshold: alpha * u.p.value() / u.delta_p, weight: u.p.value() });
        } else {
            never += u.p.value();
        }
    }
    if crossings.is_empty() {
        return Err(CalibrationError::NoPositiveLift);
    }
    Ok(bracket_search(crossings, never, total, tolerance))
}

/// Equal-attribution search against a rational bidder that bids
/// `CPA * p_i * a_i`; attributed actions are `p_i * a_i`.
pub fn calibrate_equal_attribution_rational(
    population: &[GroundTruthUser],
    a_values: &[f64],
    cpa: Money,
    tolerance: f64,
) -> Result<EqualAttribution, CalibrationError> {
    if population.is_empty() {
        return Err(CalibrationError::EmptyPopulation);
    }
    if a_values.len() != population.len() {
        return Err(CalibrationError::AttributionLength { expected: population.len(), got: a_values.len() });
    }
    let cpa = cpa.to_currency();
    let mut total = 0.0;
    let mut never = 0.0;
    let mut crossings = Vec::with_capacity(population.len());
    for (u, &a) in population.iter().zip(a_values) {
        let w = u.p.value() * a;
        total += w;
        if u.delta_p > 0.0 {
            crossings.push(Crossing { threshold: cpa * w / u.delta_p, weight: w });
        } else {
            never += w;
        }
    }
    if crossings.is_empty() {
        return Err(CalibrationError::NoPositiveLift);
    }
    Ok(bracket_search(crossings, never, total, tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64) -> Probability {
        Probability::new(x).unwrap()
    }

    fn usd(x: f64) -> Money {
        Money::from_currency(x).unwrap()
    }

    fn paper_pair() -> Vec<GroundTruthUser> {
        vec![GroundTruthUser::simple(0, 0.04, 0.01).unwrap(), GroundTruthUser::simple(1, 0.02, 0.019).unwrap()]
    }

    #[test]
    fn passive_never_bids() {
        assert_eq!(passive_bid(), Money::ZERO);
        assert_eq!(BidderConfig::passive().bid(p(0.9), 0.5), Money::ZERO);
        let r = crate::auction::run_auction(
            &[(crate::market::BidderId(1), passive_bid()), (crate::market::BidderId(2), usd(0.01))],
            Money::ZERO,
            0,
        )
        .unwrap();
        assert_eq!(r.winner, Some(crate::market::BidderId(2)));
    }

    #[test]
    fn value_bids() {
        assert_eq!(value_bid(p(0.04), 100.0), usd(4.0));
        assert_eq!(value_bid(p(0.02), 100.0), usd(2.0));
        assert_eq!(value_bid(p(0.0), 100.0), Money::ZERO);
    }

    #[test]
    fn lift_bids() {
        assert_eq!(lift_bid(0.019, 200.0), usd(3.8));
        assert_eq!(lift_bid(0.01, 200.0), usd(2.0));
        assert_eq!(lift_bid(0.0, 200.0), Money::ZERO);
        assert_eq!(lift_bid(-0.3, 200.0), Money::ZERO);
    }

    #[test]
    fn rational_bids() {
        let cpa = Money::from_units(100);
        assert_eq!(rational_bid(p(0.04), Probability::ONE, cpa), usd(4.0));
        // 100 * 0.04 * 0.5 = 2 exactly in decimal.
        assert_eq!(rational_bid(p(0.04), p(0.5), cpa), Money::from_micros(2_000_000));
        assert_eq!(rational_bid(p(0.04), Probability::ZERO, cpa), Money::ZERO);
    }

    #[test]
    fn calibrate_beta_examples() {
        let cpa = Money::from_units(100);
        let s = PopulationStats { mean_p: 0.02, mean_delta_p: 0.005, n: 10 };
        assert!((calibrate_beta(&s, cpa).unwrap() - 400.0).abs() < 1e-9);
        let s = PopulationStats { mean_p: 0.03, mean_delta_p: 0.03, n: 10 };
        assert_eq!(calibrate_beta(&s, cpa).unwrap(), 100.0);
        let s = PopulationStats { mean_p: 0.03, mean_delta_p: 0.0, n: 10 };
        assert!(matches!(calibrate_beta(&s, cpa), Err(CalibrationError::NonPositiveMeanLift(_))));
    }

    #[test]
    fn equal_attribution_on_paper_pair_is_forced_split() {
        let pop = paper_pair();
        let r = calibrate_equal_attribution(&pop, 100.0, 0.001).unwrap();
        // Thresholds are 400 (user a) and 200/1.9 (user b); the best split
        // gives one user to each side.
        assert!(r.beta > 200.0 / 1.9 && r.beta < 400.0, "beta = {}", r.beta);
        assert!((r.residual - 0.02 / 0.06).abs() < 1e-12);
        assert!(!r.within_tolerance);
    }

    #[test]
    fn identical_users_split_exactly_iff_even() {
        let even: Vec<_> = (0..4).map(|i| GroundTruthUser::simple(i, 0.05, 0.02).unwrap()).collect();
        // All users share one threshold, so they move together: no split.
        let r = calibrate_equal_attribution(&even, 100.0, 1e-9).unwrap();
        assert!((r.residual - 1.0).abs() < 1e-12);
        // With a vanishing perturbation the symmetric population splits.
        let perturbed: Vec<_> =
            (0..4).map(|i| GroundTruthUser::simple(i, 0.05, 0.02 + i as f64 * 1e-12).unwrap()).collect();
        let r = calibrate_equal_attribution(&perturbed, 100.0, 1e-9).unwrap();
        assert!(r.residual < 1e-9);
        let odd: Vec<_> = (0..5).map(|i| GroundTruthUser::simple(i, 0.05, 0.02 + i as f64 * 1e-12).unwrap()).collect();
        let r = calibrate_equal_attribution(&odd, 100.0, 1e-9).unwrap();
        assert!((r.residual - 0.2).abs() < 1e-9);
    }

    #[test]
    fn equal_attribution_errors() {
        assert_eq!(calibrate_equal_attribution(&[], 1.0, 0.1), Err(CalibrationError::EmptyPopulation));
        let flat = vec![GroundTruthUser::simple(0, 0.1, 0.0).unwrap()];
        assert_eq!(calibrate_equal_attribution(&flat, 1.0, 0.1), Err(CalibrationError::NoPositiveLift));
    }

    fn random_population(n: usize, seed: u64) -> Vec<GroundTruthUser> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let p = rng.random_range(0.001..0.1);
                let r = rng.random_range(0.05..0.95);
                GroundTruthUser::simple(i as u64, p, p * r).unwrap()
            })
            .collect()
    }

    /// Lift-side attributed actions at a given beta, by direct comparison.
    fn lift_side_at(pop: &[GroundTruthUser], alpha: f64, beta: f64) -> f64 {
        pop.iter().filter(|u| alpha * u.p.value() < beta * u.delta_p).map(|u| u.p.value()).sum()
    }

    #[test]
    fn bisection_matches_exhaustive_scan() {
        for seed in 0..5 {
            let pop = random_population(1000, seed);
            let alpha = 100.0;
            let total: f64 = pop.iter().map(|u| u.p.value()).sum();
            let found = calibrate_equal_attribution(&pop, alpha, 0.01).unwrap();
            // Oracle: scan every gap between consecutive thresholds.
            let mut ts: Vec<f64> = pop.iter().map(|u| alpha * u.p.value() / u.delta_p).collect();
            ts.sort_by(f64::total_cmp);
            let mut best = f64::INFINITY;
            for w in ts.windows(2) {
                let beta = 0.5 * (w[0] + w[1]);
                let k = lift_side_at(&pop, alpha, beta);
                best = best.min(((total - k) - k).abs() / total);
            }
            assert!((found.residual - best).abs() < 1e-12, "seed {seed}: {} vs {best}", found.residual);
            assert!(found.residual <= 0.01);
            let k = lift_side_at(&pop, alpha, found.beta);
            assert!((((total - k) - k).abs() / total - found.residual).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_side_is_monotone_in_beta() {
        let pop = random_population(300, 9);
        let mut last = 0.0;
        for step in 0..2000 {
            let beta = 50.0 + step as f64;
            let k = lift_side_at(&pop, 100.0, beta);
            assert!(k >= last);
            last = k;
        }
    }

    #[test]
    fn rational_calibration_reduces_to_simple_with_full_credit() {
        let pop = random_population(200, 3);
        let ones = vec![1.0; pop.len()];
        let a = calibrate_equal_attribution(&pop, 100.0, 0.01).unwrap();
        let b = calibrate_equal_attribution_rational(&pop, &ones, Money::from_units(100), 0.01).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn bids_scale_with_alpha_and_beta(pv in 0.0f64..=1.0, dp in -0.5f64..=1.0, scale in 0.1f64..10.0, c in 1.0f64..20.0) {
            let base = value_bid(p(pv), scale).micros() as f64;
            let scaled = value_bid(p(pv), c * scale).micros() as f64;
            prop_assert!((scaled - c * base).abs() <= c * 0.5 + 1.0);
            let base = lift_bid(dp, scale).micros() as f64;
            let scaled = lift_bid(dp, c * scale).micros() as f64;
            prop_assert!((scaled - c * base).abs() <= c * 0.5 + 1.0);
        }

        #[test]
        fn winner_invariant_under_common_scaling(pv in 0.001f64..=1.0, ratio in 0.0f64..=1.0, alpha in 0.1f64..100.0, beta in 0.1f64..100.0, c in 0.01f64..100.0) {
            use crate::auction::{lemma1_winner, Lemma1Outcome};
            let dp = ratio * pv;
            let before = lemma1_winner(p(pv), dp, alpha, beta);
            prop_assume!(before != Lemma1Outcome::Tie);
            // Skip near-ties where the scaled products could round across each other.
            prop_assume!((alpha * pv - beta * dp).abs() > 1e-9 * (alpha * pv).max(beta * dp));
            prop_assert_eq!(before, lemma1_winner(p(pv), dp, c * alpha, c * beta));
        }
    }
}
