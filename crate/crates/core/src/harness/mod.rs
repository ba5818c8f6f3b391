//! The experiments: worked examples, theorem sweeps, the three-group A/B
//! protocol and model recovery.

pub mod abtest;
pub mod examples;
pub mod metrics;
pub mod recovery;
pub mod sweep;

pub use abtest::{run_abtest, run_replications, ABTestConfig, ABTestReport, BetaRule, BidSource, ReplicationSummary};
pub use examples::{reproduce_examples, ExampleReport, ExampleRow};
pub use metrics::{cost_per_imp_diff, inventory_cost_diff, lift_over_lift, relative_lift};
pub use recovery::{evaluate_recovery, training_log, RecoveryConfig, RecoveryReport, TrainingWorld};
pub use sweep::{verify_theorems, SweepConfig, VerificationSweepReport};
