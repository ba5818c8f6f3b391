//! Second-price auction engine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::market::{BidderId, MarketError, Money, Probability};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionResult {
    pub winner: Option<BidderId>,
    pub clearing_price: Money,
    /// Every bid except the winner's, in submission order.
    pub losing_bids: Vec<(BidderId, Money)>,
}

impl AuctionResult {
    fn empty(bids: &[(BidderId, Money)]) -> Self {
        AuctionResult { winner: None, clearing_price: Money::ZERO, losing_bids: bids.to_vec() }
    }

    pub fn winning_bid(&self, bids: &[(BidderId, Money)]) -> Option<Money> {
        let w = self.winner?;
        bids.iter().find(|(b, _)| *b == w).map(|(_, m)| *m)
    }
}

/// Run a sealed-bid second-price auction.
///
/// The winner is the highest bidder strictly above `reserve` and pays
/// `max(second-highest bid, reserve)`. Ties at the top are broken uniformly
/// at random from `rng_seed`. With no bid above the reserve there is no
/// winner and the price is zero.
pub fn run_auction(bids: &[(BidderId, Money)], reserve: Money, rng_seed: u64) -> Result<AuctionResult, MarketError> {
    if let Some((_, m)) = bids.iter().find(|(_, m)| m.is_negative()) {
        return Err(MarketError::NegativeBid(*m));
    }
    let Some(top) = bids.iter().map(|(_, m)| *m).max() else {
        return Ok(AuctionResult::empty(bids));
    };
    if top <= reserve {
        return Ok(AuctionResult::empty(bids));
    }

    let leaders: Vec<usize> = (0..bids.len()).filter(|&i| bids[i].1 == top).collect();
    let win_idx = if leaders.len() == 1 {
        leaders[0]
    } else {
        let mut rng = rng_for(rng_seed, crate::seed::streams::AUCTION, 0);
        leaders[rng.random_range(0..leaders.len())]
    };

    let mut losing_bids = Vec::with_capacity(bids.len().saturating_sub(1));
    let mut second = Money::ZERO;
    for (i, &(bidder, amount)) in bids.iter().enumerate() {
        if i != win_idx {
            second = second.max(amount);
            losing_bids.push((bidder, amount));
        }
    }

    Ok(AuctionResult { winner: Some(bids[win_idx].0), clearing_price: second.max(reserve), losing_bids })
}

/// Outcome of the two-DSP comparison `alpha * p` vs `beta * delta_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lemma1Outcome {
    Dsp1,
    Dsp2,
    /// `alpha * p == beta * delta_p`: the outcome is decided by the auction's
    /// tie-break, not by the bid comparison.
    Tie,
}

impl Lemma1Outcome {
    pub fn bidder(self) -> Option<BidderId> {
        match self {
            Lemma1Outcome::Dsp1 => Some(BidderId::DSP1),
            Lemma1Outcome::Dsp2 => Some(BidderId::DSP2),
            Lemma1Outcome::Tie => None,
        }
    }
}

/// Which DSP wins a user when a value bidder (`alpha * p`) faces a lift
/// bidder (`beta * delta_p`) with no other candidates.
pub fn lemma1_winner(p: Probability, delta_p: f64, alpha: f64, beta: f64) -> Lemma1Outcome {
    debug_assert!(alpha > 0.0 && beta > 0.0);
    let value = alpha * p.value();
    let lift = beta * delta_p;
    if value > lift {
        Lemma1Outcome::Dsp1
    } else if value < lift {
        Lemma1Outcome::Dsp2
    } else {
        Lemma1Outcome::Tie
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OTHER: BidderId = BidderId::COMPETITOR;

    fn usd(x: f64) -> Money {
        Money::from_currency(x).unwrap()
    }

    #[test]
    fn example_one_user_a_is_won_at_second_price() {
        let r = run_auction(&[(BidderId::DSP1, usd(4.0)), (OTHER, usd(3.5))], Money::ZERO, 1).unwrap();
        assert_eq!(r.winner, Some(BidderId::DSP1));
        assert_eq!(r.clearing_price, usd(3.5));
        assert_eq!(r.losing_bids, vec![(OTHER, usd(3.5))]);
    }

    #[test]
    fn example_one_user_b_is_lost() {
        let r = run_auction(&[(BidderId::DSP1, usd(2.0)), (OTHER, usd(3.5))], Money::ZERO, 1).unwrap();
        assert_eq!(r.winner, Some(OTHER));
        assert_eq!(r.clearing_price, usd(2.0));
    }

    #[test]
    fn empty_auction() {
        let r = run_auction(&[], Money::ZERO, 0).unwrap();
        assert_eq!(r.winner, None);
        assert_eq!(r.clearing_price, Money::ZERO);
    }

    #[test]
    fn tie_at_top_is_seeded() {
        let bids = [(BidderId(10), usd(5.0)), (BidderId(11), usd(5.0))];
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let r1 = run_auction(&bids, Money::ZERO, seed).unwrap();
            let r2 = run_auction(&bids, Money::ZERO, seed).unwrap();
            assert_eq!(r1, r2);
            assert_eq!(r1.clearing_price, usd(5.0));
            seen.insert(r1.winner.unwrap());
        }
        assert_eq!(seen.len(), 2, "both tied bidders should win for some seed");
    }

    #[test]
    fn reserve_applies() {
        let bids = [(BidderId(1), usd(2.0)), (BidderId(2), usd(1.0))];
        let r = run_auction(&bids, usd(1.5), 0).unwrap();
        assert_eq!(r.clearing_price, usd(1.5));
        let r = run_auction(&bids, usd(2.0), 0).unwrap();
        assert_eq!(r.winner, None);
        // A lone zero bid never exceeds a zero reserve.
        let r = run_auction(&[(BidderId(1), Money::ZERO)], Money::ZERO, 0).unwrap();
        assert_eq!(r.winner, None);
    }

    #[test]
    fn negative_bid_rejected() {
        assert!(run_auction(&[(BidderId(1), Money::from_micros(-1))], Money::ZERO, 0).is_err());
    }

    #[test]
    fn lemma1_examples() {
        let p = |x| Probability::new(x).unwrap();
        assert_eq!(lemma1_winner(p(0.04), 0.01, 100.0, 100.0), Lemma1Outcome::Dsp1);
        assert_eq!(lemma1_winner(p(0.02), 0.019, 100.0, 200.0), Lemma1Outcome::Dsp2);
        assert_eq!(lemma1_winner(p(0.3), 0.0, 1.0, 1e9), Lemma1Outcome::Dsp1);
        assert_eq!(lemma1_winner(p(0.5), 0.25, 1.0, 2.0), Lemma1Outcome::Tie);
    }

    proptest! {
        #[test]
        fn clearing_price_bounded(
            raw in proptest::collection::vec(0i64..10_000_000, 0..8),
            reserve in 0i64..5_000_000,
            seed: u64,
        ) {
            let bids: Vec<_> = raw.iter().enumerate()
                .map(|(i, &m)| (BidderId(i as u32), Money::from_micros(m))).collect();
            let reserve = Money::from_micros(reserve);
            let r = run_auction(&bids, reserve, seed).unwrap();
            prop_assert_eq!(&r, &run_auction(&bids, reserve, seed).unwrap());
            match r.winner {
                Some(_) => {
                    let win = r.winning_bid(&bids).unwrap();
                    prop_assert!(win > reserve);
                    prop_assert!(r.clearing_price <= win);
                    prop_assert!(r.clearing_price >= reserve);
                    let second = r.losing_bids.iter().map(|b| b.1).max().unwrap_or(Money::ZERO);
                    prop_assert_eq!(r.clearing_price, second.max(reserve));
                    prop_assert!(bids.iter().all(|b| b.1 <= win));
                }
                None => prop_assert!(bids.iter().all(|b| b.1 <= reserve)),
            }
        }

        #[test]
        fn auction_agrees_with_lemma1(
            p in 0.0f64..=1.0, ratio in 0.0f64..=1.0,
            alpha in 0.1f64..500.0, beta in 0.1f64..2000.0, seed: u64,
        ) {
            let p = Probability::new(p).unwrap();
            let dp = ratio * p.value();
            let b1 = Money::bid_from_currency(alpha * p.value());
            let b2 = Money::bid_from_currency(beta * dp);
            prop_assume!(b1 != b2);
            let r = run_auction(&[(BidderId::DSP1, b1), (BidderId::DSP2, b2)], Money::ZERO, seed).unwrap();
            prop_assert_eq!(r.winner, lemma1_winner(p, dp, alpha, beta).bidder());
        }
    }
}
