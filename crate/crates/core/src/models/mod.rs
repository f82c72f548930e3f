//! From-scratch binary classifiers with native class weighting: weighted
//! CART, balanced random forest, second-order logistic-loss boosted trees,
//! weighted logistic regression, and KNN.
//!
//! All tree learners populate per-node `cover` (weighted sample count) so
//! the explain module can evaluate path-dependent expectations.

mod cart;
mod forest;
mod gbm;
mod knn;
mod logreg;

pub use cart::{fit_cart, CartConfig};
pub use forest::fit_random_forest;
pub use gbm::{fit_gbm, fit_gbm_traced};
pub use knn::{fit_knn, KnnModel};
pub use logreg::{fit_logreg, logistic_gradient, logistic_loss, LogisticModel};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::sigmoid;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("class count for {0} is zero")]
    ZeroClassCount(&'static str),
    #[error("k={k} exceeds the {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("row has {found} features, model expects {expected}")]
    FeatureCountMismatch { expected: usize, found: usize },
    #[error("non-finite margin at boosting stage {stage}")]
    NonFiniteMargin { stage: usize },
    #[error("gradient descent diverged (loss rose for {0} consecutive steps); try a smaller learning_rate")]
    Divergence(usize),
    #[error("training matrix contains missing values")]
    MissingValues,
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("model deserialization: {0}")]
    Format(String),
}

/// One node of a fitted decision tree. `cover` is the weighted count of
/// training samples that reached the node.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
        cover: f64,
    },
    Split {
        feature_index: usize,
        threshold: f64,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Leaf { cover, .. } | TreeNode::Split { cover, .. } => *cover,
        }
    }

    /// Descends to the leaf for `x` (left when `x[feature] <= threshold`)
    /// and returns its value.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Verifies cover bookkeeping: every cover positive and every internal
    /// node's cover equal to the sum of its children's.
    pub fn check_covers(&self) -> Result<(), ModelError> {
        match self {
            TreeNode::Leaf { cover, .. } => {
                if *cover > 0.0 {
                    Ok(())
                } else {
                    Err(ModelError::Format(format!("leaf cover {cover} not positive")))
                }
            }
            TreeNode::Split {
                cover, left, right, ..
            } => {
                if *cover <= 0.0 {
                    return Err(ModelError::Format(format!(
                        "split cover {cover} not positive"
                    )));
                }
                if *cover != left.cover() + right.cover() {
                    return Err(ModelError::Format(format!(
                        "split cover {} != {} + {}",
                        cover,
                        left.cover(),
                        right.cover()
                    )));
                }
                left.check_covers()?;
                right.check_covers()
            }
        }
    }
}

/// Flat per-node record used by the on-disk model format: internal nodes set
/// `feature`/`threshold`/`left`/`right`, leaves set `value`. Indices point
/// into the tree's node list (node 0 is the root).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub cover: f64,
}

impl TreeNode {
    /// Flattens the tree into preorder node records.
    pub fn to_records(&self) -> Vec<NodeRecord> {
        fn walk(node: &TreeNode, out: &mut Vec<NodeRecord>) -> usize {
            let slot = out.len();
            out.push(NodeRecord {
                feature: None,
                threshold: None,
                left: None,
                right: None,
                value: None,
                cover: node.cover(),
            });
            match node {
                TreeNode::Leaf { value, .. } => out[slot].value = Some(*value),
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    out[slot].feature = Some(*feature_index);
                    out[slot].threshold = Some(*threshold);
                    let l = walk(left, out);
                    let r = walk(right, out);
                    out[slot].left = Some(l);
                    out[slot].right = Some(r);
                }
            }
            slot
        }
        let mut out = Vec::with_capacity(self.n_nodes());
        walk(self, &mut out);
        out
    }

    /// Rebuilds a tree from flat records (inverse of [`TreeNode::to_records`]).
    pub fn from_records(records: &[NodeRecord]) -> Result<TreeNode, ModelError> {
        fn build(records: &[NodeRecord], index: usize) -> Result<TreeNode, ModelError> {
            let record = records
                .get(index)
                .ok_or_else(|| ModelError::Format(format!("node index {index} out of range")))?;
            match (record.value, record.feature) {
                (Some(value), None) => Ok(TreeNode::Leaf {
                    value,
                    cover: record.cover,
                }),
                (None, Some(feature_index)) => {
                    let threshold = record
                        .threshold
                        .ok_or_else(|| ModelError::Format("split without threshold".into()))?;
                    let left = record
                        .left
                        .ok_or_else(|| ModelError::Format("split without left child".into()))?;
                    let right = record
                        .right
                        .ok_or_else(|| ModelError::Format("split without right child".into()))?;
                    Ok(TreeNode::Split {
                        feature_index,
                        threshold,
                        cover: record.cover,
                        left: Box::new(build(records, left)?),
                        right: Box::new(build(records, right)?),
                    })
                }
                _ => Err(ModelError::Format(format!(
                    "node {index} is neither leaf nor split"
                ))),
            }
        }
        if records.is_empty() {
            return Err(ModelError::Format("empty node list".into()));
        }
        build(records, 0)
    }
}

/// How an ensemble combines its trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Prediction is the mean of leaf values (random forest); leaves hold
    /// positive-class probabilities.
    Bagged,
    /// Prediction is `sigmoid(base_score + sum of leaf values)` (boosting);
    /// leaves hold margin increments.
    Boosted,
}

/// Shared representation for bagged and boosted tree ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub trees: Vec<TreeNode>,
    pub kind: EnsembleKind,
    pub base_score: f64,
    pub feature_names: Vec<String>,
}

impl TreeEnsemble {
    /// Raw additive output: mean of leaf values for bagged ensembles,
    /// `base_score + sum of leaf values` for boosted ones.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::Bagged => {
                let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
                sum / self.trees.len() as f64
            }
            EnsembleKind::Boosted => {
                self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
            }
        }
    }

    /// Positive-class probability.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::Bagged => self.margin(x),
            EnsembleKind::Boosted => sigmoid(self.margin(x)),
        }
    }
}

/// Validates a rectangular training matrix and returns its width.
pub(crate) fn check_rows(x: &[Vec<f64>]) -> Result<usize, ModelError> {
    let Some(first) = x.first() else {
        return Err(ModelError::EmptyTrainingSet);
    };
    let expected = first.len();
    for row in x {
        if row.len() != expected {
            return Err(ModelError::FeatureCountMismatch {
                expected,
                found: row.len(),
            });
        }
    }
    Ok(expected)
}

/// Per-class sample weights. PD (positive) weighting enters tree impurity,
/// leaf values, and the logistic loss; KNN has no native mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub neg: f64,
    pub pos: f64,
}

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights { neg: 1.0, pos: 1.0 };

    pub fn for_label(&self, y: u8) -> f64 {
        if y == 1 {
            self.pos
        } else {
            self.neg
        }
    }
}

/// The "balanced" weighting: `w_c = (n_neg + n_pos) / (2 * n_c)`, so each
/// class contributes to the loss in inverse proportion to its frequency.
pub fn balanced_weights(n_neg: usize, n_pos: usize) -> Result<ClassWeights, ModelError> {
    if n_neg == 0 {
        return Err(ModelError::ZeroClassCount("negative class"));
    }
    if n_pos == 0 {
        return Err(ModelError::ZeroClassCount("positive class"));
    }
    let total = (n_neg + n_pos) as f64;
    Ok(ClassWeights {
        neg: total / (2.0 * n_neg as f64),
        pos: total / (2.0 * n_pos as f64),
    })
}

/// Boosting imbalance ratio `n_neg / n_pos`, applied multiplicatively to the
/// gradient and hessian of every positive sample.
pub fn scale_pos_weight(n_neg: usize, n_pos: usize) -> Result<f64, ModelError> {
    if n_pos == 0 {
        return Err(ModelError::ZeroClassCount("positive class"));
    }
    Ok(n_neg as f64 / n_pos as f64)
}

/// Hyperparameters shared across model families; each family reads the
/// fields that concern it. `max_depth = 0` means unlimited and
/// `features_per_split = 0` means the family default (`ceil(sqrt(d))` for
/// the forest, all features for boosting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: f64,
    pub features_per_split: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub k_neighbors: usize,
    pub lr_l2: f64,
    pub lr_max_iter: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 6,
            min_samples_leaf: 1.0,
            features_per_split: 0,
            learning_rate: 0.1,
            l2_lambda: 1.0,
            k_neighbors: 5,
            lr_l2: 0.1,
            lr_max_iter: 10_000,
            bootstrap: true,
            seed: 0,
        }
    }
}

/// Classifier families evaluated by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    LogisticRegression,
    Knn,
    RandomForest,
    Gbm,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::LogisticRegression,
        ModelFamily::Knn,
        ModelFamily::RandomForest,
        ModelFamily::Gbm,
    ];

    /// Short identifier used in CLI flags and artifact file names.
    pub fn key(&self) -> &'static str {
        match self {
            ModelFamily::LogisticRegression => "lr",
            ModelFamily::Knn => "knn",
            ModelFamily::RandomForest => "rf",
            ModelFamily::Gbm => "gbm",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ModelFamily::LogisticRegression => "Logistic Regression",
            ModelFamily::Knn => "KNN",
            ModelFamily::RandomForest => "Random Forest",
            ModelFamily::Gbm => "Gradient Boosting",
        }
    }

    pub fn parse(s: &str) -> Option<ModelFamily> {
        match s {
            "lr" => Some(ModelFamily::LogisticRegression),
            "knn" => Some(ModelFamily::Knn),
            "rf" => Some(ModelFamily::RandomForest),
            "gbm" => Some(ModelFamily::Gbm),
            _ => None,
        }
    }

    /// Whether the fitted model is a tree ensemble that the explain module
    /// can attribute.
    pub fn explainable(&self) -> bool {
        matches!(self, ModelFamily::RandomForest | ModelFamily::Gbm)
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// A fitted model of any family, scoring rows to positive-class
/// probabilities.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    LogisticRegression(LogisticModel),
    Knn(KnnModel),
    Tree(TreeEnsemble),
}

impl TrainedModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            TrainedModel::LogisticRegression(m) => m.predict_proba(x),
            TrainedModel::Knn(m) => m.predict_proba(x),
            TrainedModel::Tree(m) => m.predict_proba(x),
        }
    }

    pub fn predict_proba_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn as_tree(&self) -> Option<&TreeEnsemble> {
        match self {
            TrainedModel::Tree(ensemble) => Some(ensemble),
            _ => None,
        }
    }
}

/// Fits the requested family, deriving class weights (balanced weighting or
/// `scale_pos_weight`) from the training labels.
pub fn train_model(
    family: ModelFamily,
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: &[String],
    params: &Hyperparams,
) -> Result<TrainedModel, ModelError> {
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let n_neg = y.len() - n_pos;
    match family {
        ModelFamily::LogisticRegression => {
            let weights = balanced_weights(n_neg, n_pos)?;
            Ok(TrainedModel::LogisticRegression(fit_logreg(
                x, y, weights, params,
            )?))
        }
        ModelFamily::Knn => Ok(TrainedModel::Knn(fit_knn(x, y, params.k_neighbors)?)),
        ModelFamily::RandomForest => {
            let weights = balanced_weights(n_neg, n_pos)?;
            let mut ensemble = fit_random_forest(x, y, params, weights)?;
            ensemble.feature_names = feature_names.to_vec();
            Ok(TrainedModel::Tree(ensemble))
        }
        ModelFamily::Gbm => {
            let spw = scale_pos_weight(n_neg, n_pos)?;
            let mut ensemble = fit_gbm(x, y, params, spw)?;
            ensemble.feature_names = feature_names.to_vec();
            Ok(TrainedModel::Tree(ensemble))
        }
    }
}
