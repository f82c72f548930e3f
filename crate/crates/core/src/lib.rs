//! End-to-end toolkit for screening Parkinson's disease from clinical
//! assessment batteries.
//!
//! The pipeline runs in four stages, each usable on its own:
//!
//! 1. [`survey`] converts raw questionnaire/examination responses into
//!    engineered feature matrices (reverse-coded items, composite scores,
//!    severity-direction alignment).
//! 2. [`dataset`] cleans, normalizes, and splits feature matrices with
//!    stratified train/test and k-fold plans.
//! 3. [`models`] + [`eval`] train class-weight-aware classifiers (CART,
//!    balanced random forest, second-order boosted trees, weighted logistic
//!    regression, KNN) under grid-searched stratified cross-validation.
//! 4. [`explain`] computes exact per-feature Shapley attributions for the
//!    tree ensembles, with class-conditional global aggregation and local
//!    waterfall breakdowns.
//!
//! [`synth`] generates schema-faithful synthetic cohorts with planted class
//! signal so the whole pipeline can be exercised without access-controlled
//! clinical data, and [`report`] renders metric tables and SVG figures.

pub mod dataset;
pub mod eval;
pub mod explain;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod survey;
pub mod synth;

mod util;

pub use dataset::{CohortLabel, FeatureMatrix, NormalizationParams, SplitPlan};
pub use eval::{FoldReport, GridSpec, MetricSet};
pub use explain::{Attribution, GlobalContribution};
pub use models::{
    ClassWeights, EnsembleKind, Hyperparams, ModelFamily, TrainedModel, TreeEnsemble, TreeNode,
};
pub use survey::{Battery, InstrumentSpec, ItemSpec, ResponseRecord, ScoringRule};
pub use synth::{CohortPlan, EffectSpec};
