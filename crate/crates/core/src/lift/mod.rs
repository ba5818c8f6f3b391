//! AR and AR-lift estimation from event logs: sample generation, features,
//! boosted trees, isotonic calibration and the counterfactual lift estimate.

pub mod evaluate;
pub mod features;
pub mod gbdt;
pub mod isotonic;
pub mod model;
pub mod sampling;

use thiserror::Error;

use crate::market::{AdvertiserId, UserId};

pub use evaluate::{auc, spearman, DecileRow};
pub use features::{
    counterfactual_features, extract_features, fold_context, schema_for_log, Demographics, FeatureSchema,
    FeatureVector, TimelineIndex,
};
pub use gbdt::{train_gbdt, GbdtModel, GbdtParams};
pub use isotonic::{fit_isotonic, IsotonicFit, IsotonicMap};
pub use model::{calibrate_isotonic, train_model, CalibratedModel, ModelEstimator, TrainConfig, TrainOutcome};
pub use sampling::{generate_samples, SampleSet, SamplingConfig, TrainingSample};

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("unknown user {0:?}")]
    UnknownUser(UserId),
    #[error("advertiser {0:?} is not in the feature schema")]
    UnknownAdvertiser(AdvertiserId),
    #[error("feature schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("the log has no ad requests")]
    NoRequests,
    #[error("training samples contain a single class")]
    SingleClass,
    #[error("no samples")]
    EmptySamples,
    #[error("insufficient positives: {found} < {required}")]
    InsufficientPositives { found: usize, required: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed model file: {0}")]
    Format(String),
}
