//! Second-order logistic-loss boosting with positive-class gradient/hessian
//! scaling (`scale_pos_weight`).

use crate::util::sigmoid;

use super::{check_rows, EnsembleKind, Hyperparams, ModelError, TreeEnsemble, TreeNode};

/// Tie window for split gains; see the CART module for the rationale.
const GAIN_TIE_TOL: f64 = 1e-12;

struct GainSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct NodeStats {
    grad: f64,
    hess: f64,
    weight: f64,
}

fn leaf_value(stats: &NodeStats, learning_rate: f64, lambda: f64) -> f64 {
    -learning_rate * stats.grad / (stats.hess + lambda)
}

/// Standard second-order split gain
/// `0.5 * [G_L^2/(H_L+l) + G_R^2/(H_R+l) - (G_L+G_R)^2/(H_L+H_R+l)]`.
fn split_gain(left: &NodeStats, right: &NodeStats, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(left.grad, left.hess) + score(right.grad, right.hess)
        - score(left.grad + right.grad, left.hess + right.hess))
}

#[allow(clippy::needless_range_loop)]
fn best_split(
    x: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    w: &[f64],
    idx: &[usize],
    lambda: f64,
    min_leaf: f64,
) -> Option<GainSplit> {
    let d = x[0].len();
    let total: NodeStats = NodeStats {
        grad: idx.iter().map(|&i| grad[i]).sum(),
        hess: idx.iter().map(|&i| hess[i]).sum(),
        weight: idx.iter().map(|&i| w[i]).sum(),
    };
    let mut candidates: Vec<GainSplit> = Vec::new();
    for feature in 0..d {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let mut left = NodeStats {
            grad: 0.0,
            hess: 0.0,
            weight: 0.0,
        };
        for pair in 0..order.len() - 1 {
            let i = order[pair];
            left.grad += grad[i];
            left.hess += hess[i];
            left.weight += w[i];
            let value = x[i][feature];
            let next = x[order[pair + 1]][feature];
            if value == next {
                continue;
            }
            let right = NodeStats {
                grad: total.grad - left.grad,
                hess: total.hess - left.hess,
                weight: total.weight - left.weight,
            };
            if left.weight < min_leaf || right.weight < min_leaf {
                continue;
            }
            candidates.push(GainSplit {
                feature,
                threshold: (value + next) / 2.0,
                gain: split_gain(&left, &right, lambda),
            });
        }
    }
    let max = candidates.iter().map(|c| c.gain).max_by(f64::total_cmp)?;
    if max <= GAIN_TIE_TOL {
        return None;
    }
    candidates.into_iter().find(|c| c.gain >= max - GAIN_TIE_TOL)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    x: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    w: &[f64],
    idx: Vec<usize>,
    depth: usize,
    params: &Hyperparams,
) -> TreeNode {
    let stats = NodeStats {
        grad: idx.iter().map(|&i| grad[i]).sum(),
        hess: idx.iter().map(|&i| hess[i]).sum(),
        weight: idx.iter().map(|&i| w[i]).sum(),
    };
    let leaf = TreeNode::Leaf {
        value: leaf_value(&stats, params.learning_rate, params.l2_lambda),
        cover: stats.weight,
    };
    if params.max_depth > 0 && depth >= params.max_depth {
        return leaf;
    }
    let Some(split) = best_split(
        x,
        grad,
        hess,
        w,
        &idx,
        params.l2_lambda,
        params.min_samples_leaf,
    ) else {
        return leaf;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| x[i][split.feature] <= split.threshold);
    let left = grow(x, grad, hess, w, left_idx, depth + 1, params);
    let right = grow(x, grad, hess, w, right_idx, depth + 1, params);
    TreeNode::Split {
        feature_index: split.feature,
        threshold: split.threshold,
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn weighted_logloss(margins: &[f64], y: &[u8], w: &[f64]) -> f64 {
    let total_w: f64 = w.iter().sum();
    let loss: f64 = margins
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&m, &label), &wi)| {
            // log(1 + exp(-z*m)) with z = +-1, computed stably.
            let z = if label == 1 { m } else { -m };
            wi * ((-z.abs()).exp().ln_1p() + (-z).max(0.0))
        })
        .sum();
    loss / total_w
}

/// Fits the boosted ensemble and returns the per-round weighted training
/// loss alongside it (index 0 is the loss of the constant base score).
pub fn fit_gbm_traced(
    x: &[Vec<f64>],
    y: &[u8],
    params: &Hyperparams,
    spw: f64,
) -> Result<(TreeEnsemble, Vec<f64>), ModelError> {
    check_rows(x)?;
    if y.iter().all(|&v| v == y[0]) {
        return Err(ModelError::SingleClass);
    }
    if params.learning_rate <= 0.0 || params.l2_lambda < 0.0 {
        return Err(ModelError::InvalidParams(format!(
            "learning_rate {} must be positive and l2_lambda {} nonnegative",
            params.learning_rate, params.l2_lambda
        )));
    }
    if !spw.is_finite() || spw <= 0.0 {
        return Err(ModelError::InvalidParams(format!(
            "scale_pos_weight {spw} not positive"
        )));
    }
    let n = x.len();
    let w: Vec<f64> = y.iter().map(|&l| if l == 1 { spw } else { 1.0 }).collect();
    let pos_w: f64 = y.iter().filter(|&&l| l == 1).map(|_| spw).sum();
    let total_w: f64 = w.iter().sum();
    let p0 = pos_w / total_w;
    let base_score = (p0 / (1.0 - p0)).ln();

    let mut margins = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut losses = vec![weighted_logloss(&margins, y, &w)];
    for stage in 0..params.n_trees {
        let mut grad = Vec::with_capacity(n);
        let mut hess = Vec::with_capacity(n);
        for i in 0..n {
            if !margins[i].is_finite() {
                return Err(ModelError::NonFiniteMargin { stage });
            }
            let p = sigmoid(margins[i]);
            let (mut g, mut h) = (p - y[i] as f64, p * (1.0 - p));
            if y[i] == 1 {
                g *= spw;
                h *= spw;
            }
            grad.push(g);
            hess.push(h);
        }
        let tree = grow(x, &grad, &hess, &w, (0..n).collect(), 0, params);
        for (margin, row) in margins.iter_mut().zip(x) {
            *margin += tree.predict(row);
        }
        if margins.iter().any(|m| !m.is_finite()) {
            return Err(ModelError::NonFiniteMargin { stage });
        }
        losses.push(weighted_logloss(&margins, y, &w));
        trees.push(tree);
    }
    Ok((
        TreeEnsemble {
            trees,
            kind: EnsembleKind::Boosted,
            base_score,
            feature_names: Vec::new(),
        },
        losses,
    ))
}

/// Stagewise logistic-loss boosting; see [`fit_gbm_traced`] for the variant
/// that also reports the training-loss trajectory.
pub fn fit_gbm(
    x: &[Vec<f64>],
    y: &[u8],
    params: &Hyperparams,
    spw: f64,
) -> Result<TreeEnsemble, ModelError> {
    fit_gbm_traced(x, y, params, spw).map(|(ensemble, _)| ensemble)
}
