//! Weighted CART: greedy binary splits minimizing weighted Gini impurity.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{check_rows, ModelError, TreeNode};

/// Tolerance window for split selection. Candidates whose impurity is within
/// this window of the minimum are considered tied, and the tie-break picks
/// the lowest (feature_index, threshold); this keeps the choice stable under
/// floating-point summation noise.
const SPLIT_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct CartConfig {
    /// 0 = unlimited.
    pub max_depth: usize,
    /// Minimum weighted sample count per child.
    pub min_samples_leaf: f64,
    /// Number of features drawn per split; 0 = all features.
    pub features_per_split: usize,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            max_depth: 0,
            min_samples_leaf: 1.0,
            features_per_split: 0,
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Weighted Gini impurity of a node with weight `w` and positive weight `wp`.
fn gini(w: f64, wp: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p = wp / w;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Enumerates every candidate split of `feature` over the node's samples:
/// thresholds are midpoints between consecutive distinct sorted values, and
/// children must each carry at least `min_leaf` weight.
fn candidate_splits_for_feature(
    x: &[Vec<f64>],
    y: &[u8],
    w: &[f64],
    idx: &[usize],
    feature: usize,
    min_leaf: f64,
    out: &mut Vec<SplitChoice>,
) {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
    let total_w: f64 = order.iter().map(|&i| w[i]).sum();
    let total_wp: f64 = order.iter().filter(|&&i| y[i] == 1).map(|&i| w[i]).sum();

    let mut left_w = 0.0;
    let mut left_wp = 0.0;
    for pair in 0..order.len() - 1 {
        let i = order[pair];
        left_w += w[i];
        if y[i] == 1 {
            left_wp += w[i];
        }
        let value = x[i][feature];
        let next = x[order[pair + 1]][feature];
        if value == next {
            continue;
        }
        let right_w = total_w - left_w;
        if left_w < min_leaf || right_w < min_leaf {
            continue;
        }
        let right_wp = total_wp - left_wp;
        let impurity = (left_w * gini(left_w, left_wp) + right_w * gini(right_w, right_wp)) / total_w;
        out.push(SplitChoice {
            feature,
            threshold: (value + next) / 2.0,
            impurity,
        });
    }
}

/// Picks the best split over the given features: minimum weighted post-split
/// impurity, ties (within [`SPLIT_TIE_TOL`]) broken by lowest
/// (feature_index, threshold).
fn best_split(
    x: &[Vec<f64>],
    y: &[u8],
    w: &[f64],
    idx: &[usize],
    features: &[usize],
    min_leaf: f64,
) -> Option<SplitChoice> {
    let mut candidates = Vec::new();
    for &feature in features {
        candidate_splits_for_feature(x, y, w, idx, feature, min_leaf, &mut candidates);
    }
    let min = candidates
        .iter()
        .map(|c| c.impurity)
        .min_by(f64::total_cmp)?;
    // Candidates are generated in ascending (feature, threshold) order, so
    // the first one inside the window is the tie-break winner.
    candidates.into_iter().find(|c| c.impurity <= min + SPLIT_TIE_TOL)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    x: &[Vec<f64>],
    y: &[u8],
    w: &[f64],
    idx: Vec<usize>,
    depth: usize,
    cfg: &CartConfig,
    n_features: usize,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> TreeNode {
    let cover: f64 = idx.iter().map(|&i| w[i]).sum();
    let pos: f64 = idx.iter().filter(|&&i| y[i] == 1).map(|&i| w[i]).sum();
    let leaf = |cover: f64| TreeNode::Leaf {
        value: pos / cover,
        cover,
    };

    let pure = idx.iter().all(|&i| y[i] == y[idx[0]]);
    let depth_reached = cfg.max_depth > 0 && depth >= cfg.max_depth;
    if pure || depth_reached {
        return leaf(cover);
    }

    let features: Vec<usize> = match rng {
        Some(rng) if cfg.features_per_split > 0 && cfg.features_per_split < n_features => {
            let mut all: Vec<usize> = (0..n_features).collect();
            let (sampled, _) = all.partial_shuffle(rng, cfg.features_per_split);
            let mut sampled = sampled.to_vec();
            sampled.sort_unstable();
            sampled
        }
        _ => (0..n_features).collect(),
    };

    let Some(split) = best_split(x, y, w, &idx, &features, cfg.min_samples_leaf) else {
        return leaf(cover);
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| x[i][split.feature] <= split.threshold);
    let left = grow(x, y, w, left_idx, depth + 1, cfg, n_features, rng);
    let right = grow(x, y, w, right_idx, depth + 1, cfg, n_features, rng);
    // Parent cover is defined as the sum of child covers so the bookkeeping
    // invariant holds exactly despite floating-point summation.
    TreeNode::Split {
        feature_index: split.feature,
        threshold: split.threshold,
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Fits a weighted classification tree. Leaf values are the weighted
/// positive-class fraction; covers are weighted sample counts. When the
/// config asks for per-split feature subsampling an RNG must be supplied.
pub fn fit_cart(
    x: &[Vec<f64>],
    y: &[u8],
    sample_weights: &[f64],
    cfg: &CartConfig,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<TreeNode, ModelError> {
    let n_features = check_rows(x)?;
    if x.len() != y.len() || x.len() != sample_weights.len() {
        return Err(ModelError::InvalidParams(format!(
            "{} rows, {} labels, {} weights",
            x.len(),
            y.len(),
            sample_weights.len()
        )));
    }
    if x.iter().flatten().any(|v| v.is_nan()) {
        return Err(ModelError::MissingValues);
    }
    if let Some(w) = sample_weights.iter().find(|w| **w <= 0.0) {
        return Err(ModelError::InvalidParams(format!(
            "sample weight {w} not positive"
        )));
    }
    if cfg.features_per_split > 0 && cfg.features_per_split < n_features && rng.is_none() {
        return Err(ModelError::InvalidParams(
            "feature subsampling requires an RNG".to_string(),
        ));
    }
    let idx: Vec<usize> = (0..x.len()).collect();
    Ok(grow(x, y, sample_weights, idx, 0, cfg, n_features, &mut rng))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exhaustive split search used as an independent test oracle: evaluates
    //! every (feature, midpoint) candidate with direct two-pass arithmetic
    //! and applies the same windowed lowest-(feature, threshold) tie-break.

    pub struct BruteSplit {
        pub feature: usize,
        pub threshold: f64,
        pub impurity: f64,
    }

    #[allow(clippy::needless_range_loop)]
    pub fn brute_force_best_split(
        x: &[Vec<f64>],
        y: &[u8],
        w: &[f64],
        min_leaf: f64,
    ) -> Option<BruteSplit> {
        let n = x.len();
        let d = x[0].len();
        let mut candidates: Vec<BruteSplit> = Vec::new();
        for feature in 0..d {
            let mut values: Vec<f64> = (0..n).map(|i| x[i][feature]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for pair in values.windows(2) {
                let threshold = (pair[0] + pair[1]) / 2.0;
                let mut left_w = 0.0;
                let mut left_wp = 0.0;
                let mut right_w = 0.0;
                let mut right_wp = 0.0;
                for i in 0..n {
                    if x[i][feature] <= threshold {
                        left_w += w[i];
                        if y[i] == 1 {
                            left_wp += w[i];
                        }
                    } else {
                        right_w += w[i];
                        if y[i] == 1 {
                            right_wp += w[i];
                        }
                    }
                }
                if left_w < min_leaf || right_w < min_leaf {
                    continue;
                }
                let gini = |w: f64, wp: f64| {
                    let p = wp / w;
                    1.0 - p * p - (1.0 - p) * (1.0 - p)
                };
                let impurity = (left_w * gini(left_w, left_wp) + right_w * gini(right_w, right_wp))
                    / (left_w + right_w);
                candidates.push(BruteSplit {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
        let min = candidates
            .iter()
            .map(|c| c.impurity)
            .min_by(f64::total_cmp)?;
        candidates
            .into_iter()
            .find(|c| c.impurity <= min + super::SPLIT_TIE_TOL)
    }
}
