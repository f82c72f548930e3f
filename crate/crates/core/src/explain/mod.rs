//! Exact, locally additive Shapley attributions for tree ensembles, with a
//! subset-enumeration oracle, class-conditional global aggregation, and
//! local waterfall extraction.
//!
//! Bagged ensembles are attributed in probability space (leaf values are
//! probabilities and the ensemble is linear in them); boosted ensembles are
//! attributed in margin space, where additivity is exact. Positive values
//! push the prediction toward PD, negative toward HC.

mod brute;
mod treeshap;

pub use brute::{brute_force_shapley, MAX_BRUTE_FORCE_FEATURES};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::CohortLabel;
use crate::models::{EnsembleKind, TreeEnsemble, TreeNode};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("row has {found} features, ensemble expects {expected}")]
    FeatureCountMismatch { expected: usize, found: usize },
    #[error("feature {0} is missing (NaN) in the explained row")]
    MissingFeature(String),
    #[error("model integrity: node with non-positive cover {0}")]
    NonPositiveCover(f64),
    #[error("ensemble has no trees")]
    EmptyEnsemble,
    #[error("{n_features} features would need {evaluations} subset evaluations; brute force is capped at {max} features", max = MAX_BRUTE_FORCE_FEATURES)]
    TooManyFeatures { n_features: usize, evaluations: u128 },
    #[error("attribution sets must share one feature list")]
    InconsistentFeatures,
    #[error("{attributions} attributions but {labels} labels")]
    LabelLengthMismatch { attributions: usize, labels: usize },
    #[error("global aggregation requires PD/HC labels, found {0}")]
    LabelNotBinary(String),
    #[error("no attributions to aggregate")]
    EmptyAttributions,
    #[error("top_k must be at least 1")]
    InvalidTopK,
}

/// Output space an attribution lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSpace {
    /// Bagged ensembles: baseline, contributions, and prediction are
    /// probabilities.
    Probability,
    /// Boosted ensembles: everything is in log-odds units.
    Margin,
}

/// Per-sample attribution: `base_value + sum(phi) = prediction` (local
/// accuracy) within 1e-9.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attribution {
    pub participant_id: String,
    pub base_value: f64,
    pub phi: Vec<(String, f64)>,
    pub prediction: f64,
    pub space: OutputSpace,
}

impl Attribution {
    pub fn phi_for(&self, feature: &str) -> Option<f64> {
        self.phi
            .iter()
            .find(|(name, _)| name == feature)
            .map(|(_, v)| *v)
    }

    pub fn phi_sum(&self) -> f64 {
        self.phi.iter().map(|(_, v)| v).sum()
    }
}

/// Mean absolute contribution of one feature, split by cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalContribution {
    pub feature: String,
    pub mean_abs_hc: f64,
    pub mean_abs_pd: f64,
}

impl GlobalContribution {
    pub fn total(&self) -> f64 {
        self.mean_abs_hc + self.mean_abs_pd
    }
}

/// Ranked global contributions plus any degenerate-class warnings.
#[derive(Debug, Clone)]
pub struct GlobalSummary {
    pub ranked: Vec<GlobalContribution>,
    pub warnings: Vec<String>,
}

/// Ordered local explanation: the `top_k` largest |phi| entries plus the
/// collapsed remainder, reconstructing the prediction from the baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Waterfall {
    pub participant_id: String,
    pub base_value: f64,
    pub prediction: f64,
    pub space: OutputSpace,
    pub entries: Vec<(String, f64)>,
    pub remainder: f64,
}

fn tree_expectation(node: &TreeNode) -> Result<f64, ExplainError> {
    match node {
        TreeNode::Leaf { value, cover } => {
            if *cover <= 0.0 {
                return Err(ExplainError::NonPositiveCover(*cover));
            }
            Ok(*value)
        }
        TreeNode::Split { left, right, .. } => {
            let lc = left.cover();
            let rc = right.cover();
            if lc <= 0.0 || rc <= 0.0 {
                return Err(ExplainError::NonPositiveCover(lc.min(rc)));
            }
            let le = tree_expectation(left)?;
            let re = tree_expectation(right)?;
            Ok((lc * le + rc * re) / (lc + rc))
        }
    }
}

/// The ensemble's baseline: per tree, the cover-weighted average of leaf
/// values (the path-dependent expectation); averaged over trees for bagged
/// ensembles, summed onto the base score (margin space) for boosted ones.
pub fn expected_value(ensemble: &TreeEnsemble) -> Result<f64, ExplainError> {
    if ensemble.trees.is_empty() {
        return Err(ExplainError::EmptyEnsemble);
    }
    let sum: f64 = ensemble
        .trees
        .iter()
        .map(tree_expectation)
        .sum::<Result<f64, _>>()?;
    Ok(match ensemble.kind {
        EnsembleKind::Bagged => sum / ensemble.trees.len() as f64,
        EnsembleKind::Boosted => ensemble.base_score + sum,
    })
}

/// Exact Shapley attribution of `x` under path-dependent conditional
/// expectations. For bagged ensembles phi is the per-tree average, so the
/// attribution lives directly in probability space; boosted ensembles are
/// attributed in margin space.
pub fn treeshap(
    ensemble: &TreeEnsemble,
    participant_id: &str,
    x: &[f64],
) -> Result<Attribution, ExplainError> {
    let m = ensemble.feature_names.len();
    if x.len() != m {
        return Err(ExplainError::FeatureCountMismatch {
            expected: m,
            found: x.len(),
        });
    }
    if let Some(j) = x.iter().position(|v| v.is_nan()) {
        return Err(ExplainError::MissingFeature(
            ensemble.feature_names[j].clone(),
        ));
    }
    let base_value = expected_value(ensemble)?;
    let scale = match ensemble.kind {
        EnsembleKind::Bagged => 1.0 / ensemble.trees.len() as f64,
        EnsembleKind::Boosted => 1.0,
    };
    let mut phi = vec![0.0; m];
    for tree in &ensemble.trees {
        treeshap::accumulate_tree_shap(tree, x, &mut phi, scale);
    }
    let prediction = ensemble.margin(x);
    let space = match ensemble.kind {
        EnsembleKind::Bagged => OutputSpace::Probability,
        EnsembleKind::Boosted => OutputSpace::Margin,
    };
    Ok(Attribution {
        participant_id: participant_id.to_string(),
        base_value,
        phi: ensemble
            .feature_names
            .iter()
            .cloned()
            .zip(phi)
            .collect(),
        prediction,
        space,
    })
}

/// Attributes many rows in parallel (the model is read-only).
pub fn treeshap_batch(
    ensemble: &TreeEnsemble,
    ids: &[String],
    rows: &[Vec<f64>],
) -> Result<Vec<Attribution>, ExplainError> {
    ids.par_iter()
        .zip(rows.par_iter())
        .map(|(id, row)| treeshap(ensemble, id, row))
        .collect()
}

/// Class-conditional global aggregation: per feature, the mean |phi| over HC
/// samples and over PD samples, ranked descending by their sum. An empty
/// class contributes 0 with a warning.
pub fn global_contributions(
    attributions: &[Attribution],
    labels: &[CohortLabel],
) -> Result<GlobalSummary, ExplainError> {
    if attributions.is_empty() {
        return Err(ExplainError::EmptyAttributions);
    }
    if attributions.len() != labels.len() {
        return Err(ExplainError::LabelLengthMismatch {
            attributions: attributions.len(),
            labels: labels.len(),
        });
    }
    let features: Vec<&str> = attributions[0]
        .phi
        .iter()
        .map(|(name, _)| name.as_str())
        .collect();
    let m = features.len();
    let mut abs_sum = [vec![0.0f64; m], vec![0.0f64; m]];
    let mut counts = [0usize; 2];
    for (attribution, label) in attributions.iter().zip(labels) {
        let class = label
            .binary()
            .ok_or_else(|| ExplainError::LabelNotBinary(label.as_str().to_string()))?
            as usize;
        if attribution.phi.len() != m
            || attribution
                .phi
                .iter()
                .zip(&features)
                .any(|((name, _), expected)| name != expected)
        {
            return Err(ExplainError::InconsistentFeatures);
        }
        counts[class] += 1;
        for (slot, (_, value)) in abs_sum[class].iter_mut().zip(&attribution.phi) {
            *slot += value.abs();
        }
    }
    let mut warnings = Vec::new();
    for (class, name) in [(0usize, "HC"), (1usize, "PD")] {
        if counts[class] == 0 {
            warnings.push(format!(
                "no {name} samples among the attributions; {name} means reported as 0"
            ));
        }
    }
    let mean = |class: usize, j: usize| {
        if counts[class] == 0 {
            0.0
        } else {
            abs_sum[class][j] / counts[class] as f64
        }
    };
    let mut ranked: Vec<GlobalContribution> = (0..m)
        .map(|j| GlobalContribution {
            feature: features[j].to_string(),
            mean_abs_hc: mean(0, j),
            mean_abs_pd: mean(1, j),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.total()
            .total_cmp(&a.total())
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(GlobalSummary { ranked, warnings })
}

/// Orders contributions by |phi| descending and collapses everything beyond
/// `top_k` into one remainder term; baseline + entries + remainder
/// reconstructs the prediction exactly.
pub fn local_waterfall(attribution: &Attribution, top_k: usize) -> Result<Waterfall, ExplainError> {
    if top_k == 0 {
        return Err(ExplainError::InvalidTopK);
    }
    let mut ordered: Vec<(String, f64)> = attribution.phi.clone();
    ordered.sort_by(|a, b| {
        b.1.abs()
            .total_cmp(&a.1.abs())
            .then_with(|| a.0.cmp(&b.0))
    });
    let keep = top_k.min(ordered.len());
    let remainder = ordered[keep..].iter().map(|(_, v)| v).sum();
    ordered.truncate(keep);
    Ok(Waterfall {
        participant_id: attribution.participant_id.clone(),
        base_value: attribution.base_value,
        prediction: attribution.prediction,
        space: attribution.space,
        entries: ordered,
        remainder,
    })
}

#[cfg(test)]
mod tests;
