//! Exact Shapley attribution for a single tree in polynomial time.
//!
//! Implements the path-weight recursion over unique features on the
//! root-leaf path: each path element tracks the fraction of feature subsets
//! flowing down when its feature is excluded (`zero_fraction`,
//! cover-proportional) or included (`one_fraction`, 1 on the hot branch, 0
//! on the cold branch), and `pweight` holds the accumulated permutation
//! weights per path length.

use crate::models::TreeNode;

#[derive(Clone, Copy, Default)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

/// Appends one feature's fractions to the path and folds its weight into the
/// permutation-weight table.
fn extend(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: Option<usize>) {
    path[depth] = PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..depth).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / (depth + 1) as f64;
        path[i].pweight = zero * path[i].pweight * (depth - i) as f64 / (depth + 1) as f64;
    }
}

/// Removes the path element at `index`, restoring the weight table to the
/// state before that feature was extended.
fn unwind(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * (depth + 1) as f64 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].pweight * zero * (depth - i) as f64 / (depth + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (depth + 1) as f64 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

/// Total permutation weight the path would carry without the element at
/// `index` (the [`unwind`] computation, without mutating the path).
fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let mut total = 0.0;
    if one != 0.0 {
        let mut next_one = path[depth].pweight;
        for i in (0..depth).rev() {
            let tmp = next_one / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (depth - i) as f64;
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].pweight / (zero * (depth - i) as f64);
        }
    }
    total * (depth + 1) as f64
}

struct Frame<'a> {
    x: &'a [f64],
    phi: &'a mut [f64],
    scale: f64,
}

fn recurse(
    frame: &mut Frame<'_>,
    node: &TreeNode,
    mut path: Vec<PathElement>,
    depth: usize,
    parent_zero: f64,
    parent_one: f64,
    parent_feature: Option<usize>,
) {
    while path.len() < depth + 1 {
        path.push(PathElement::default());
    }
    extend(&mut path, depth, parent_zero, parent_one, parent_feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..=depth {
                let weight = unwound_sum(&path, depth, i);
                let element = path[i];
                frame.phi[element.feature.expect("non-root path element")] += weight
                    * (element.one_fraction - element.zero_fraction)
                    * value
                    * frame.scale;
            }
        }
        TreeNode::Split {
            feature_index,
            threshold,
            left,
            right,
            ..
        } => {
            let (hot, cold) = if frame.x[*feature_index] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let total_cover = left.cover() + right.cover();
            let hot_zero = hot.cover() / total_cover;
            let cold_zero = cold.cover() / total_cover;

            let mut depth = depth;
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            // A feature met twice on one path keeps a single Shapley slot:
            // unwind the earlier occurrence and fold its fractions into the
            // new one.
            if let Some(k) = (1..=depth).find(|&k| path[k].feature == Some(*feature_index)) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, depth, k);
                depth -= 1;
            }

            recurse(
                frame,
                hot,
                path.clone(),
                depth + 1,
                hot_zero * incoming_zero,
                incoming_one,
                Some(*feature_index),
            );
            recurse(
                frame,
                cold,
                path,
                depth + 1,
                cold_zero * incoming_zero,
                0.0,
                Some(*feature_index),
            );
        }
    }
}

/// Accumulates `scale` times this tree's exact Shapley values at `x` into
/// `phi`.
pub(super) fn accumulate_tree_shap(tree: &TreeNode, x: &[f64], phi: &mut [f64], scale: f64) {
    let path = Vec::with_capacity(tree.depth() + 2);
    let mut frame = Frame { x, phi, scale };
    recurse(&mut frame, tree, path, 0, 1.0, 1.0, None);
}
