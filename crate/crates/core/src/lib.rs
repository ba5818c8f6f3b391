//! Value-based, lift-based and attribution-aware bidding for real-time
//! bidding markets.
//!
//! The crate bundles a second-price auction engine, the bidding strategies,
//! exact expected-value accounting of the value-vs-lift comparison, a
//! synthetic world and market simulator, an AR-lift prediction pipeline
//! (timeline sampling, features, gradient-boosted trees, isotonic
//! calibration) and the experiment harness that ties them together.

// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod auction;
pub mod bidders;
pub mod digest;
pub mod harness;
pub mod lift;
pub mod market;
pub mod seed;
pub mod world;

pub use auction::{lemma1_winner, run_auction, AuctionResult, Lemma1Outcome};
pub use bidders::{BidderConfig, BidderKind, PopulationStats};
pub use market::{
    AdvertiserId, BidRequest, BidderId, Campaign, GroundTruthUser, Money, Probability, RequestContext, RequestId,
    UserId,
};
