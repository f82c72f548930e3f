//! Brute-force Shapley values by feature-subset enumeration: the
//! independent oracle for the path-recursion implementation. Cost is
//! O(2^M) conditional-expectation evaluations, so it refuses more than 15
//! features.

use crate::models::{EnsembleKind, TreeEnsemble, TreeNode};

use super::ExplainError;

pub const MAX_BRUTE_FORCE_FEATURES: usize = 15;

/// Conditional expectation of one tree given the features in `mask`:
/// on-path descent for conditioned features, cover-weighted branching for
/// the rest.
fn descend_conditional(node: &TreeNode, x: &[f64], mask: u32) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature_index,
            threshold,
            left,
            right,
            ..
        } => {
            if mask & (1 << feature_index) != 0 {
                if x[*feature_index] <= *threshold {
                    descend_conditional(left, x, mask)
                } else {
                    descend_conditional(right, x, mask)
                }
            } else {
                let lc = left.cover();
                let rc = right.cover();
                (lc * descend_conditional(left, x, mask) + rc * descend_conditional(right, x, mask))
                    / (lc + rc)
            }
        }
    }
}

/// Ensemble value function v(S) for the subset encoded in `mask`.
fn subset_value(ensemble: &TreeEnsemble, x: &[f64], mask: u32) -> f64 {
    let sum: f64 = ensemble
        .trees
        .iter()
        .map(|t| descend_conditional(t, x, mask))
        .sum();
    match ensemble.kind {
        EnsembleKind::Bagged => sum / ensemble.trees.len() as f64,
        EnsembleKind::Boosted => ensemble.base_score + sum,
    }
}

/// Exact Shapley values by enumerating every feature subset:
/// `phi_i = sum_S |S|! (M-|S|-1)! / M! * [v(S+i) - v(S)]`.
pub fn brute_force_shapley(ensemble: &TreeEnsemble, x: &[f64]) -> Result<Vec<f64>, ExplainError> {
    let m = ensemble.feature_names.len();
    if x.len() != m {
        return Err(ExplainError::FeatureCountMismatch {
            expected: m,
            found: x.len(),
        });
    }
    if m > MAX_BRUTE_FORCE_FEATURES {
        return Err(ExplainError::TooManyFeatures {
            n_features: m,
            evaluations: 1u128 << m,
        });
    }
    let mut factorial = [1.0f64; MAX_BRUTE_FORCE_FEATURES + 1];
    for i in 1..=MAX_BRUTE_FORCE_FEATURES {
        factorial[i] = factorial[i - 1] * i as f64;
    }

    let n_masks = 1usize << m;
    let values: Vec<f64> = (0..n_masks)
        .map(|mask| subset_value(ensemble, x, mask as u32))
        .collect();

    let mut phi = vec![0.0; m];
    for (feature, phi_value) in phi.iter_mut().enumerate() {
        let bit = 1u32 << feature;
        for mask in 0..n_masks as u32 {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = factorial[s] * factorial[m - s - 1] / factorial[m];
            *phi_value += weight * (values[(mask | bit) as usize] - values[mask as usize]);
        }
    }
    Ok(phi)
}
