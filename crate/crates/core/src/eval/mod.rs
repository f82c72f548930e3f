//! Model selection and reporting: grid search under stratified k-fold CV
//! optimizing F1, held-out evaluation, fold aggregation, and out-of-fold
//! confusion matrices.
//!
//! Every fold refits the full pipeline: min-max normalization and class
//! weights are derived from the fold's training rows only, never from
//! validation or test data.

mod metrics;

pub use metrics::{average_precision, compute_metrics, confusion_counts, roc_auc, MetricSet};


use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    apply_minmax, fit_minmax, stratified_kfold, DataError, FeatureMatrix, SplitPlan,
};
use crate::models::{train_model, Hyperparams, ModelError, ModelFamily};

/// Decision threshold used for hard labels throughout.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth and scores differ in length ({truth} vs {scores})")]
    LengthMismatch { truth: usize, scores: usize },
    #[error("empty evaluation set")]
    Empty,
    #[error("ground truth holds a single class; rank metrics undefined")]
    SingleClassTruth,
    #[error("ground truth holds a single class; rank metrics undefined (accuracy {accuracy:.4}, precision {precision:.4}, recall {recall:.4}, f1 {f1:.4} still computed)")]
    SingleClass {
        accuracy: f64,
        precision: f64,
        recall: f64,
        f1: f64,
    },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("every grid cell failed:\n{}", .0.join("\n"))]
    AllCellsFailed(Vec<String>),
    #[error("fold aggregation needs at least 2 reports, got {0}")]
    NeedTwoReports(usize),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-fold evaluation outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_index: usize,
    pub metrics: MetricSet,
    pub confusion: [[usize; 2]; 2],
}

/// Mean and sample standard deviation (n-1) of each metric over folds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub mean: MetricSet,
    pub std: MetricSet,
}

/// Renders a metric as `mean ± std` with four decimals, e.g.
/// `0.9866 ± 0.0091`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.4} \u{b1} {std:.4}")
}

/// Aggregates fold metrics into mean ± sample standard deviation.
pub fn aggregate_folds(reports: &[FoldReport]) -> Result<AggregateMetrics, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::NeedTwoReports(reports.len()));
    }
    let n = reports.len() as f64;
    let mut mean = [0.0f64; 6];
    for report in reports {
        for (slot, (_, value)) in mean.iter_mut().zip(report.metrics.values()) {
            *slot += value / n;
        }
    }
    let mut var = [0.0f64; 6];
    for report in reports {
        for (i, (_, value)) in report.metrics.values().into_iter().enumerate() {
            var[i] += (value - mean[i]).powi(2) / (n - 1.0);
        }
    }
    let set = |v: &[f64; 6]| MetricSet {
        accuracy: v[0],
        precision: v[1],
        recall: v[2],
        f1: v[3],
        roc_auc: v[4],
        pr_auc: v[5],
    };
    Ok(AggregateMetrics {
        mean: set(&mean),
        std: set(&var.map(f64::sqrt)),
    })
}

/// Parameter lists per hyperparameter for one model family; the Cartesian
/// product in declared order forms the search grid. Empty lists fall back to
/// the family default.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub family: ModelFamily,
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub min_samples_leaf: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub l2_lambda: Vec<f64>,
    pub lr_l2: Vec<f64>,
    pub k_neighbors: Vec<usize>,
}

impl GridSpec {
    pub fn empty(family: ModelFamily) -> Self {
        Self {
            family,
            n_trees: Vec::new(),
            max_depth: Vec::new(),
            min_samples_leaf: Vec::new(),
            learning_rate: Vec::new(),
            l2_lambda: Vec::new(),
            lr_l2: Vec::new(),
            k_neighbors: Vec::new(),
        }
    }

    /// The default search grid shipped for each family (editable via the run
    /// config; `max_depth` 0 means unlimited).
    pub fn default_for(family: ModelFamily) -> Self {
        let mut grid = Self::empty(family);
        match family {
            ModelFamily::RandomForest => {
                grid.n_trees = vec![100, 300];
                grid.max_depth = vec![6, 12, 0];
                grid.min_samples_leaf = vec![1.0, 5.0];
            }
            ModelFamily::Gbm => {
                grid.n_trees = vec![100, 200];
                grid.learning_rate = vec![0.1, 0.3];
                grid.max_depth = vec![3, 5];
            }
            ModelFamily::LogisticRegression => {
                grid.lr_l2 = vec![0.01, 0.1, 1.0];
            }
            ModelFamily::Knn => {
                grid.k_neighbors = vec![3, 5, 11];
            }
        }
        grid
    }

    /// Expands the grid into concrete hyperparameter cells, in declared
    /// order (first list varies slowest). Only the lists relevant to the
    /// family participate; the rest come from [`Hyperparams::default`].
    pub fn expand(&self, seed: u64) -> Vec<Hyperparams> {
        let base = Hyperparams {
            seed,
            ..Hyperparams::default()
        };
        let or = |list: &[usize], fallback: usize| -> Vec<usize> {
            if list.is_empty() {
                vec![fallback]
            } else {
                list.to_vec()
            }
        };
        let or_f = |list: &[f64], fallback: f64| -> Vec<f64> {
            if list.is_empty() {
                vec![fallback]
            } else {
                list.to_vec()
            }
        };
        let mut cells = Vec::new();
        match self.family {
            ModelFamily::RandomForest => {
                for &n_trees in &or(&self.n_trees, base.n_trees) {
                    for &max_depth in &or(&self.max_depth, base.max_depth) {
                        for &min_samples_leaf in &or_f(&self.min_samples_leaf, base.min_samples_leaf)
                        {
                            cells.push(Hyperparams {
                                n_trees,
                                max_depth,
                                min_samples_leaf,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
            ModelFamily::Gbm => {
                for &n_trees in &or(&self.n_trees, base.n_trees) {
                    for &learning_rate in &or_f(&self.learning_rate, base.learning_rate) {
                        for &max_depth in &or(&self.max_depth, 3) {
                            cells.push(Hyperparams {
                                n_trees,
                                learning_rate,
                                max_depth,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
            ModelFamily::LogisticRegression => {
                for &lr_l2 in &or_f(&self.lr_l2, base.lr_l2) {
                    cells.push(Hyperparams {
                        lr_l2,
                        ..base.clone()
                    });
                }
            }
            ModelFamily::Knn => {
                for &k_neighbors in &or(&self.k_neighbors, base.k_neighbors) {
                    cells.push(Hyperparams {
                        k_neighbors,
                        ..base.clone()
                    });
                }
            }
        }
        cells
    }
}

/// Normalizes inside the fold, trains, and scores the held-out rows.
fn fit_fold(
    family: ModelFamily,
    params: &Hyperparams,
    matrix: &FeatureMatrix,
    train_idx: &[usize],
    valid_idx: &[usize],
) -> Result<(Vec<u8>, Vec<f64>), EvalError> {
    let train = matrix.select_rows(train_idx);
    let valid = matrix.select_rows(valid_idx);
    let norm = fit_minmax(&train)?;
    let train_scaled = apply_minmax(&norm, &train)?;
    let valid_scaled = apply_minmax(&norm, &valid)?;
    let y_train = train_scaled.binary_labels()?;
    let model = train_model(
        family,
        train_scaled.rows(),
        &y_train,
        train_scaled.feature_names(),
        params,
    )?;
    let scores = model.predict_proba_all(valid_scaled.rows());
    Ok((valid_scaled.binary_labels()?, scores))
}

/// Outcome of one grid cell: the mean validation F1 across folds, or the
/// error that made the cell unusable.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub params: Hyperparams,
    pub mean_f1: Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: Hyperparams,
    pub best_mean_f1: f64,
    pub cells: Vec<CellResult>,
}

/// Exhaustive grid search: every cell is scored by mean validation F1 over
/// the same stratified folds, the argmax wins, and ties go to the cell that
/// appears earlier in the grid expansion.
pub fn grid_search_cv(
    family: ModelFamily,
    grid: &GridSpec,
    train: &FeatureMatrix,
    plan: &SplitPlan,
) -> Result<GridSearchOutcome, EvalError> {
    let cells = grid.expand(plan.seed);
    if cells.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let folds = stratified_kfold(train, plan)?;
    let results: Vec<CellResult> = cells
        .into_par_iter()
        .map(|params| {
            let mut f1_sum = 0.0;
            let mut failure: Option<String> = None;
            for (train_idx, valid_idx) in &folds {
                match fit_fold(family, &params, train, train_idx, valid_idx)
                    .and_then(|(y, s)| compute_metrics(&y, &s, DEFAULT_THRESHOLD))
                {
                    Ok(m) => f1_sum += m.f1,
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            let mean_f1 = match failure {
                None => Ok(f1_sum / folds.len() as f64),
                Some(e) => Err(e),
            };
            CellResult { params, mean_f1 }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, cell) in results.iter().enumerate() {
        if let Ok(f1) = cell.mean_f1 {
            let better = match best {
                None => true,
                Some((_, best_f1)) => f1 > best_f1,
            };
            if better {
                best = Some((i, f1));
            }
        }
    }
    match best {
        Some((i, f1)) => Ok(GridSearchOutcome {
            best: results[i].params.clone(),
            best_mean_f1: f1,
            cells: results,
        }),
        None => Err(EvalError::AllCellsFailed(
            results
                .iter()
                .map(|c| {
                    format!(
                        "{:?}: {}",
                        c.params,
                        c.mean_f1.as_ref().err().cloned().unwrap_or_default()
                    )
                })
                .collect(),
        )),
    }
}

/// Full metric sets per fold at fixed hyperparameters (used to report
/// mean ± std at the selected cell).
pub fn cross_val_metrics(
    family: ModelFamily,
    params: &Hyperparams,
    matrix: &FeatureMatrix,
    plan: &SplitPlan,
) -> Result<Vec<FoldReport>, EvalError> {
    let folds = stratified_kfold(matrix, plan)?;
    folds
        .par_iter()
        .enumerate()
        .map(|(fold_index, (train_idx, valid_idx))| {
            let (y, scores) = fit_fold(family, params, matrix, train_idx, valid_idx)?;
            let metrics = compute_metrics(&y, &scores, DEFAULT_THRESHOLD)?;
            Ok(FoldReport {
                fold_index,
                metrics,
                confusion: confusion_counts(&y, &scores, DEFAULT_THRESHOLD),
            })
        })
        .collect()
}

/// One refit on the full training matrix, one evaluation on the held-out
/// test matrix (normalization fitted on the training rows).
pub fn evaluate_heldout(
    family: ModelFamily,
    best: &Hyperparams,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
) -> Result<MetricSet, EvalError> {
    let norm = fit_minmax(train)?;
    let train_scaled = apply_minmax(&norm, train)?;
    let test_scaled = apply_minmax(&norm, test)?;
    let y_train = train_scaled.binary_labels()?;
    let model = train_model(
        family,
        train_scaled.rows(),
        &y_train,
        train_scaled.feature_names(),
        best,
    )?;
    let scores = model.predict_proba_all(test_scaled.rows());
    compute_metrics(
        &test_scaled.binary_labels()?,
        &scores,
        DEFAULT_THRESHOLD,
    )
}

/// Out-of-fold scores for every row: each sample is predicted exactly once,
/// by the fold model that never saw it. Returned in matrix row order.
pub fn oof_scores(
    family: ModelFamily,
    params: &Hyperparams,
    matrix: &FeatureMatrix,
    plan: &SplitPlan,
) -> Result<Vec<f64>, EvalError> {
    let folds = stratified_kfold(matrix, plan)?;
    let per_fold: Vec<(Vec<usize>, Vec<f64>)> = folds
        .par_iter()
        .map(|(train_idx, valid_idx)| {
            let (_, scores) = fit_fold(family, params, matrix, train_idx, valid_idx)?;
            Ok((valid_idx.clone(), scores))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut all = vec![f64::NAN; matrix.n_samples()];
    for (valid_idx, scores) in per_fold {
        for (i, s) in valid_idx.into_iter().zip(scores) {
            all[i] = s;
        }
    }
    debug_assert!(all.iter().all(|s| !s.is_nan()));
    Ok(all)
}

/// Out-of-fold confusion matrix with rows (true HC, true PD) normalized to
/// sum to 1, plus the raw counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OofConfusion {
    pub counts: [[usize; 2]; 2],
    pub normalized: [[f64; 2]; 2],
}

pub fn oof_confusion(
    family: ModelFamily,
    params: &Hyperparams,
    matrix: &FeatureMatrix,
    plan: &SplitPlan,
) -> Result<OofConfusion, EvalError> {
    let scores = oof_scores(family, params, matrix, plan)?;
    let y = matrix.binary_labels()?;
    let counts = confusion_counts(&y, &scores, DEFAULT_THRESHOLD);
    Ok(OofConfusion {
        counts,
        normalized: normalize_rows(counts),
    })
}

pub fn normalize_rows(counts: [[usize; 2]; 2]) -> [[f64; 2]; 2] {
    counts.map(|row| {
        let total = (row[0] + row[1]) as f64;
        if total == 0.0 {
            [0.0, 0.0]
        } else {
            [row[0] as f64 / total, row[1] as f64 / total]
        }
    })
}
