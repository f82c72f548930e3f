//! Threshold metrics, rank-based ROC-AUC, and average-precision PR-AUC.

use super::EvalError;

/// The reported metric set; all values in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub pr_auc: f64,
}

impl MetricSet {
    pub fn values(&self) -> [(&'static str, f64); 6] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("roc_auc", self.roc_auc),
            ("pr_auc", self.pr_auc),
        ]
    }
}

/// Confusion counts with rows = true class (0 = HC, 1 = PD) and columns =
/// predicted class.
pub fn confusion_counts(y_true: &[u8], scores: &[f64], threshold: f64) -> [[usize; 2]; 2] {
    let mut counts = [[0usize; 2]; 2];
    for (&label, &score) in y_true.iter().zip(scores) {
        let predicted = usize::from(score >= threshold);
        counts[label as usize][predicted] += 1;
    }
    counts
}

/// Mann-Whitney ROC-AUC via average ranks, crediting ties with 1/2.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    let n = y_true.len();
    let n_pos = y_true.iter().filter(|&&l| l == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average 1-based rank.
        let rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = (0..n).filter(|&i| y_true[i] == 1).map(|i| ranks[i]).sum();
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(auc)
}

/// PR-AUC as average precision: the step-wise sum of precision * delta-recall
/// over descending distinct score thresholds, without interpolation.
pub fn average_precision(y_true: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    let n = y_true.len();
    let n_pos = y_true.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == n {
        return Err(EvalError::SingleClassTruth);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if y_true[idx] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// Computes the full metric set at the given decision threshold. When the
/// ground truth holds a single class the rank metrics are undefined and the
/// error carries the threshold metrics that are still well-defined.
pub fn compute_metrics(
    y_true: &[u8],
    scores: &[f64],
    threshold: f64,
) -> Result<MetricSet, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            scores: scores.len(),
        });
    }
    if y_true.is_empty() {
        return Err(EvalError::Empty);
    }
    let counts = confusion_counts(y_true, scores, threshold);
    let tp = counts[1][1] as f64;
    let fp = counts[0][1] as f64;
    let fne = counts[1][0] as f64;
    let tn = counts[0][0] as f64;
    let accuracy = (tp + tn) / y_true.len() as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fne > 0.0 { tp / (tp + fne) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    match (roc_auc(y_true, scores), average_precision(y_true, scores)) {
        (Ok(roc), Ok(ap)) => Ok(MetricSet {
            accuracy,
            precision,
            recall,
            f1,
            roc_auc: roc,
            pr_auc: ap,
        }),
        _ => Err(EvalError::SingleClass {
            accuracy,
            precision,
            recall,
            f1,
        }),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent recomputations used by tests: ROC-AUC over all
    //! (positive, negative) pairs and average precision by per-threshold
    //! recounting.

    pub fn pairwise_roc_auc(y_true: &[u8], scores: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in y_true.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in y_true.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    pub fn threshold_sweep_ap(y_true: &[u8], scores: &[f64]) -> f64 {
        let n_pos = y_true.iter().filter(|&&l| l == 1).count();
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        thresholds.reverse();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let mut tp = 0usize;
            let mut fp = 0usize;
            for (&label, &score) in y_true.iter().zip(scores) {
                if score >= t {
                    if label == 1 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let recall = tp as f64 / n_pos as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap
    }
}
