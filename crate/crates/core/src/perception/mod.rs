//! The target model and the per-capture quality estimators.

pub mod checkpoint;
pub mod features;
pub mod model;
pub mod scorers;

pub use features::{extract_features, FeatureVector, FEATURE_DIM};
pub use model::{train, ClassifierModel, TrainHyper};
pub use scorers::{
    confidence, score, score_ash, score_knn, score_react, score_vim, Evaluated, QualityScore, ScorerId, ALL_SCORERS,
};
