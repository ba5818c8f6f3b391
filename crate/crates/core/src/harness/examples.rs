//! The two-user worked examples: a value bidder and a lift bidder facing a
//! fixed $3.5 competitor.

use serde::{Deserialize, Serialize};

use crate::auction::run_auction;
use crate::bidders::BidderConfig;
use crate::market::{BidderId, GroundTruthUser, Money};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub bidder: String,
    pub bids: Vec<Money>,
    /// Users whose impression this bidder wins.
    pub wins: Vec<usize>,
    pub expected_actions: f64,
    /// CPA times expected attributed actions.
    pub revenue: f64,
    pub inventory_cost: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub users: Vec<(f64, f64)>,
    pub competitor: Money,
    pub cpa: Money,
    pub value: ExampleRow,
    pub lift: ExampleRow,
}

pub const EXAMPLE_USERS: [(f64, f64); 2] = [(0.04, 0.01), (0.02, 0.019)];
pub const EXAMPLE_CPA: i64 = 100;
pub const EXAMPLE_COMPETITOR_MICROS: i64 = 3_500_000;
/// Makes the lift bids $2 and $3.8.
pub const EXAMPLE_BETA: f64 = 200.0;

fn row(name: &str, users: &[GroundTruthUser], bidder: &BidderConfig, competitor: Money, cpa: Money) -> ExampleRow {
    let mut r = ExampleRow {
        bidder: name.into(),
        bids: Vec::new(),
        wins: Vec::new(),
        expected_actions: 0.0,
        revenue: 0.0,
        inventory_cost: Money::ZERO,
    };
    for (i, u) in users.iter().enumerate() {
        let bid = bidder.bid(u.p, u.delta_p);
        r.bids.push(bid);
        let auction = run_auction(&[(BidderId::DSP1, bid), (BidderId::COMPETITOR, competitor)], Money::ZERO, i as u64)
            .expect("non-negative bids");
        let won = auction.winner == Some(BidderId::DSP1);
        r.expected_actions += u.action_rate(won);
        if won {
            r.wins.push(i);
            r.revenue += cpa.to_currency() * u.p.value();
            r.inventory_cost += auction.clearing_price;
        }
    }
    r
}

/// Expected actions, DSP revenue and inventory cost of both bidders on a
/// given two-user world.
pub fn examples_for(users: &[(f64, f64)]) -> ExampleReport {
    let population: Vec<GroundTruthUser> = users
        .iter()
        .enumerate()
        .map(|(i, &(p, dp))| GroundTruthUser::simple(i as u64, p, dp).expect("valid example users"))
        .collect();
    let cpa = Money::from_units(EXAMPLE_CPA);
    let competitor = Money::from_micros(EXAMPLE_COMPETITOR_MICROS);
    ExampleReport {
        users: users.to_vec(),
        competitor,
        cpa,
        value: row("value", &population, &BidderConfig::value(cpa.to_currency()), competitor, cpa),
        lift: row("lift", &population, &BidderConfig::lift(EXAMPLE_BETA), competitor, cpa),
    }
}

pub fn reproduce_examples() -> ExampleReport {
    examples_for(&EXAMPLE_USERS)
}

impl ExampleReport {
    pub fn table(&self) -> String {
        let mut s = String::from("bidder  bids            wins  expected_actions  revenue  inventory_cost\n");
        for r in [&self.value, &self.lift] {
            let bids: Vec<String> = r.bids.iter().map(|b| b.to_string()).collect();
            s += &format!(
                "{:<7} {:<15} {:<5} {:<17} ${:<7} {}\n",
                r.bidder,
                bids.join("/"),
                r.wins.len(),
                format_number(r.expected_actions),
                format_number(r.revenue),
                r.inventory_cost
            );
        }
        s
    }
}

/// Shortest decimal that rounds back within 1e-12 relative.
pub fn format_number(x: f64) -> String {
    for digits in 0..15 {
        let s = format!("{x:.digits$}");
        let back: f64 = s.parse().expect("formatted float");
        if (back - x).abs() <= 1e-12 * x.abs().max(1e-300) {
            return s;
        }
    }
    x.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn reproduces_both_examples() {
        let r = reproduce_examples();
        assert_eq!(r.value.bids, vec![Money::from_units(4), Money::from_units(2)]);
        assert_eq!(r.lift.bids, vec![Money::from_units(2), Money::from_micros(3_800_000)]);
        assert_eq!(r.value.wins, vec![0]);
        assert_eq!(r.lift.wins, vec![1]);
        assert!(rel(r.value.expected_actions, 0.041) < 1e-12);
        assert!(rel(r.lift.expected_actions, 0.05) < 1e-12);
        assert!(rel(r.value.revenue, 4.0) < 1e-12);
        assert!(rel(r.lift.revenue, 2.0) < 1e-12);
        assert_eq!(r.value.inventory_cost, Money::from_micros(3_500_000));
        assert_eq!(r.lift.inventory_cost, Money::from_micros(3_500_000));
    }

    #[test]
    fn swapping_users_keeps_totals() {
        let a = reproduce_examples();
        let b = examples_for(&[EXAMPLE_USERS[1], EXAMPLE_USERS[0]]);
        for (x, y) in [(&a.value, &b.value), (&a.lift, &b.lift)] {
            assert!(rel(x.expected_actions, y.expected_actions) < 1e-12);
            assert!(rel(x.revenue, y.revenue) < 1e-12);
            assert_eq!(x.inventory_cost, y.inventory_cost);
        }
    }

    #[test]
    fn table_prints_paper_figures() {
        let t = reproduce_examples().table();
        assert!(t.contains("0.041") && t.contains("0.05 "), "{t}");
        assert!(t.contains("$3.5"));
    }

    #[test]
    fn shortest_decimal() {
        assert_eq!(format_number(0.041), "0.041");
        assert_eq!(format_number(4.000000000000001), "4");
        assert_eq!(format_number(0.05), "0.05");
    }
}
