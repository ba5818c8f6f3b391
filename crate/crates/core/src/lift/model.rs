//! Calibrated AR model, its file format, and the training pipeline.
//!
//! The model file is JSON with a `format` tag, the feature schema and its
//! digest, the trees, the prior correction and the isotonic breakpoints.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::evaluate::{auc, decile_table, DecileRow};
use super::features::{
    counterfactual_features, features_from_events, fold_context, Demographics, FeatureSchema, FeatureVector,
    TimelineIndex,
};
use super::gbdt::{train_gbdt, GbdtModel, GbdtParams};
use super::isotonic::{fit_isotonic, IsotonicMap};
use super::sampling::{generate_samples, SampleSet, SamplingConfig, SamplingStats, TrainingSample};
use super::LiftError;
use crate::market::{AdvertiserId, BidRequest, GroundTruthUser, Probability, UserId};
use crate::seed::{derive_seed, streams};
use crate::world::eventlog::{EventKind, TimelineEvent};
use crate::world::market::{BidEstimator, Estimate};

pub const MODEL_FORMAT: &str = "liftbid-model/v1";

/// Boosted trees before calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct UncalibratedModel {
    pub schema: Arc<FeatureSchema>,
    pub gbdt: GbdtModel,
    /// Added to the tree score to undo negative downsampling.
    pub prior_correction: f64,
}

impl UncalibratedModel {
    pub fn score(&self, features: &FeatureVector) -> f64 {
        self.gbdt.score(&features.values) + self.prior_correction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub log_seed: u64,
    pub log_config_digest: String,
    /// Digest of the run configuration that produced the model, if any.
    pub config_digest: Option<String>,
    pub gbdt: GbdtParams,
    pub sampling: SamplingConfig,
    pub train_samples: usize,
    pub calibration_samples: usize,
    pub test_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub format: String,
    pub schema: FeatureSchema,
    pub schema_digest: String,
    pub advertiser: AdvertiserId,
    pub gbdt: GbdtModel,
    pub prior_correction: f64,
    pub isotonic: IsotonicMap,
    /// The calibration holdout had one class; the map is constant.
    pub degenerate_calibration: bool,
    pub metadata: Option<TrainingMetadata>,
}

impl CalibratedModel {
    fn check(&self, features: &FeatureVector) -> Result<(), LiftError> {
        if *features.schema != self.schema {
            return Err(LiftError::SchemaMismatch {
                expected: self.schema_digest.clone(),
                found: features.schema.digest(),
            });
        }
        Ok(())
    }

    pub fn score(&self, features: &FeatureVector) -> Result<f64, LiftError> {
        self.check(features)?;
        Ok(self.gbdt.score(&features.values) + self.prior_correction)
    }

    /// Calibrated `P(action | F)`.
    pub fn predict_ar(&self, features: &FeatureVector) -> Result<f64, LiftError> {
        Ok(self.isotonic.apply(self.score(features)?))
    }

    /// `P(action | F(s+(ad))) - P(action | F(s))`; may be negative.
    pub fn predict_lift(&self, features: &FeatureVector, ad: AdvertiserId) -> Result<f64, LiftError> {
        let exposed = counterfactual_features(features, ad)?;
        Ok(self.predict_ar(&exposed)? - self.predict_ar(features)?)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("model serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, LiftError> {
        let m: CalibratedModel = serde_json::from_slice(bytes).map_err(|e| LiftError::Format(e.to_string()))?;
        if m.format != MODEL_FORMAT {
            return Err(LiftError::Format(format!("unsupported format {:?}", m.format)));
        }
        let digest = m.schema.digest();
        if digest != m.schema_digest {
            return Err(LiftError::SchemaMismatch { expected: m.schema_digest, found: digest });
        }
        if m.gbdt.n_features != m.schema.len() {
            return Err(LiftError::Format("tree feature count differs from schema".into()));
        }
        if !m.isotonic.is_valid() {
            return Err(LiftError::Format("isotonic map is not monotone within [0, 1]".into()));
        }
        Ok(m)
    }

    /// Fail unless `expected` names this model's schema.
    pub fn require_schema(&self, expected: &FeatureSchema) -> Result<(), LiftError> {
        if *expected != self.schema {
            return Err(LiftError::SchemaMismatch { expected: expected.digest(), found: self.schema_digest.clone() });
        }
        Ok(())
    }
}

fn sample_weights(samples: &[TrainingSample], negative_weight: f64) -> Vec<f64> {
    samples.iter().map(|s| if s.label { 1.0 } else { negative_weight }).collect()
}

/// Fit the isotonic map on a holdout. Negatives carry `negative_weight`
/// (the inverse keep rate) so the map targets the undownsampled rate.
pub fn calibrate_isotonic(
    model: UncalibratedModel,
    advertiser: AdvertiserId,
    holdout: &[TrainingSample],
    negative_weight: f64,
) -> Result<CalibratedModel, LiftError> {
    if holdout.is_empty() {
        return Err(LiftError::EmptySamples);
    }
    let scores: Vec<f64> = holdout.iter().map(|s| model.score(&s.features)).collect();
    let labels: Vec<f64> = holdout.iter().map(|s| s.label as u8 as f64).collect();
    let weights = sample_weights(holdout, negative_weight);
    let fit = fit_isotonic(&scores, &labels, Some(&weights));
    let schema = (*model.schema).clone();
    Ok(CalibratedModel {
        format: MODEL_FORMAT.into(),
        schema_digest: schema.digest(),
        schema,
        advertiser,
        gbdt: model.gbdt,
        prior_correction: model.prior_correction,
        isotonic: fit.map,
        degenerate_calibration: fit.degenerate,
        metadata: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub sampling: SamplingConfig,
    pub gbdt: GbdtParams,
    /// Fractions of users held out for calibration and for testing.
    pub calibration_fraction: f64,
    pub test_fraction: f64,
    pub min_positives: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sampling: SamplingConfig::default(),
            gbdt: GbdtParams::default(),
            calibration_fraction: 0.2,
            test_fraction: 0.2,
            min_positives: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LiftError> {
        self.sampling.validate()?;
        self.gbdt.validate()?;
        let (c, t) = (self.calibration_fraction, self.test_fraction);
        if !(c > 0.0 && t >= 0.0 && c + t < 1.0) {
            return Err(LiftError::Config(
                "need calibration_fraction > 0, test_fraction >= 0 and their sum < 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Calibration,
    Test,
}

/// Users, not samples, are split, so no user straddles two sets.
pub fn split_of(user: UserId, config: &TrainConfig) -> Split {
    let u = (derive_seed(config.seed, streams::SAMPLING, user.0) >> 11) as f64 / (1u64 << 53) as f64;
    if u < config.test_fraction {
        Split::Test
    } else if u < config.test_fraction + config.calibration_fraction {
        Split::Calibration
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CalibratedModel,
    pub sampling: SamplingStats,
    /// Deciles over one sample per held-out user.
    pub calibration_table: Vec<DecileRow>,
    /// Deciles over every held-out sample; error bars ignore clustering.
    pub sample_calibration_table: Vec<DecileRow>,
    pub test_auc: Option<f64>,
    /// Positive samples whose user never had an impression of the advertiser.
    pub positives_from_unexposed_users: usize,
}

/// Samples, trees, isotonic calibration, and a decile table on the test
/// users (on the calibration users when there is no test split).
pub fn train_model(index: &TimelineIndex, config: &TrainConfig) -> Result<TrainOutcome, LiftError> {
    config.validate()?;
    let set: SampleSet = generate_samples(index, &config.sampling)?;
    let negative_weight = 1.0 / set.negative_keep_rate;
    let advertiser = index.header.advertiser;
    let never_exposed = |u: UserId| index.events(u).is_none_or(|ev| !ev.iter().any(|e| e.is_impression_of(advertiser)));
    let positives_from_unexposed_users = set.samples.iter().filter(|s| s.label && never_exposed(s.user_id)).count();
    let prior_correction = set.prior_correction();
    let schema = set.schema.clone();

    let (mut train, mut calib, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for s in set.samples {
        match split_of(s.user_id, config) {
            Split::Train => train.push(s),
            Split::Calibration => calib.push(s),
            Split::Test => test.push(s),
        }
    }
    let positives = train.iter().filter(|s| s.label).count();
    if positives < config.min_positives {
        return Err(LiftError::InsufficientPositives { found: positives, required: config.min_positives });
    }
    let rows: Vec<&[f64]> = train.iter().map(|s| s.features.values.as_slice()).collect();
    let labels: Vec<bool> = train.iter().map(|s| s.label).collect();
    let gbdt = train_gbdt(&rows, &labels, None, &config.gbdt, config.seed)?;
    let uncalibrated = UncalibratedModel { schema, gbdt, prior_correction };
    let mut model = calibrate_isotonic(uncalibrated, advertiser, &calib, negative_weight)?;
    model.metadata = Some(TrainingMetadata {
        seed: config.seed,
        log_seed: index.header.seed,
        log_config_digest: index.header.config_digest.clone(),
        config_digest: None,
        gbdt: config.gbdt.clone(),
        sampling: config.sampling.clone(),
        train_samples: train.len(),
        calibration_samples: calib.len(),
        test_samples: test.len(),
    });

    let eval = if test.is_empty() { &calib } else { &test };
    let table = |rows: &[&TrainingSample],
                 weight: &dyn Fn(&TrainingSample) -> f64|
     -> Result<Vec<DecileRow>, LiftError> {
        let predicted: Vec<f64> = rows.iter().map(|s| model.predict_ar(&s.features)).collect::<Result<_, _>>()?;
        let labels: Vec<bool> = rows.iter().map(|s| s.label).collect();
        let weights: Vec<f64> = rows.iter().map(|s| weight(s) * if s.label { 1.0 } else { negative_weight }).collect();
        Ok(decile_table(&predicted, &labels, &weights))
    };
    // Samples of one user are correlated, while binomial error bars assume
    // independent trials. The calibration check therefore uses the first
    // sample drawn for each held-out user, weighted by the user's request
    // count so the mix of users matches the sampling distribution.
    let requests =
        |u: UserId| index.events(u).map_or(0, |ev| ev.iter().filter(|e| e.kind == EventKind::AdRequest).count()) as f64;
    let mut seen = std::collections::HashSet::new();
    let independent: Vec<&TrainingSample> = eval.iter().filter(|s| seen.insert(s.user_id)).collect();
    let calibration_table = table(&independent, &|s| requests(s.user_id))?;
    let sample_calibration_table = table(&eval.iter().collect::<Vec<_>>(), &|_| 1.0)?;
    let scores: Vec<f64> = eval.iter().map(|s| model.score(&s.features)).collect::<Result<_, _>>()?;
    let labels: Vec<bool> = eval.iter().map(|s| s.label).collect();
    let test_auc = auc(&scores, &labels);
    Ok(TrainOutcome {
        model,
        sampling: set.stats,
        calibration_table,
        sample_calibration_table,
        test_auc,
        positives_from_unexposed_users,
    })
}

/// Prices requests with a trained model: `p` is the predicted AR with one
/// more impression, `delta_p` the predicted lift.
#[derive(Debug, Clone)]
pub struct ModelEstimator {
    pub model: Arc<CalibratedModel>,
    schema: Arc<FeatureSchema>,
    pub feature_window_seconds: i64,
}

impl ModelEstimator {
    pub fn new(model: Arc<CalibratedModel>, feature_window_seconds: i64) -> Self {
        let schema = Arc::new(model.schema.clone());
        ModelEstimator { model, schema, feature_window_seconds }
    }

    pub fn features(&self, user: &GroundTruthUser, history: &[TimelineEvent], request: &BidRequest) -> FeatureVector {
        let f = features_from_events(
            &self.schema,
            Demographics::from(&user.behavior),
            history,
            request.timestamp,
            self.feature_window_seconds,
        );
        fold_context(&f, &request.context)
    }
}

impl BidEstimator for ModelEstimator {
    fn estimate(&self, user: &GroundTruthUser, history: &[TimelineEvent], request: &BidRequest) -> Estimate {
        let f = self.features(user, history, request);
        let ad = self.model.advertiser;
        let base = self.model.predict_ar(&f).expect("schema owned by the estimator");
        let exposed = counterfactual_features(&f, ad).and_then(|x| self.model.predict_ar(&x)).unwrap_or(base);
        Estimate { p: Probability::saturating(exposed), delta_p: exposed - base }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_model(schema: &Arc<FeatureSchema>) -> CalibratedModel {
        let un = UncalibratedModel {
            schema: schema.clone(),
            gbdt: GbdtModel { n_features: schema.len(), base_score: -1.0, trees: vec![] },
            prior_correction: 0.0,
        };
        let holdout: Vec<TrainingSample> = (0..4)
            .map(|i| TrainingSample {
                user_id: UserId(i),
                ts: 0,
                label: i == 0,
                features: FeatureVector::empty(schema.clone()),
            })
            .collect();
        calibrate_isotonic(un, AdvertiserId(1), &holdout, 1.0).unwrap()
    }

    #[test]
    fn constant_model_has_zero_lift() {
        let schema = Arc::new(FeatureSchema::new(vec![1], 2, 1));
        let m = constant_model(&schema);
        let f = FeatureVector::empty(schema.clone());
        assert_eq!(m.predict_ar(&f).unwrap(), 0.25);
        assert_eq!(m.predict_lift(&f, AdvertiserId(1)).unwrap(), 0.0);
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let schema = Arc::new(FeatureSchema::new(vec![1], 2, 1));
        let m = constant_model(&schema);
        let other = FeatureVector::empty(Arc::new(FeatureSchema::new(vec![1, 2], 2, 1)));
        assert!(matches!(m.predict_ar(&other), Err(LiftError::SchemaMismatch { .. })));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let schema = Arc::new(FeatureSchema::new(vec![1], 2, 1));
        let m = constant_model(&schema);
        let bytes = m.to_json();
        assert_eq!(CalibratedModel::from_json(&bytes).unwrap(), m);
        let mut tampered = m.clone();
        tampered.schema_digest = "0000".into();
        assert!(matches!(CalibratedModel::from_json(&tampered.to_json()), Err(LiftError::SchemaMismatch { .. })));
        assert!(matches!(CalibratedModel::from_json(b"{}"), Err(LiftError::Format(_))));
    }

    #[test]
    fn user_split_respects_fractions() {
        let cfg = TrainConfig::default();
        let n = 20_000;
        let test = (0..n).filter(|&u| split_of(UserId(u), &cfg) == Split::Test).count() as f64 / n as f64;
        let calib = (0..n).filter(|&u| split_of(UserId(u), &cfg) == Split::Calibration).count() as f64 / n as f64;
        assert!((test - 0.2).abs() < 0.02 && (calib - 0.2).abs() < 0.02);
    }
}
