//! Class-weighted L2-regularized logistic regression, fitted by full-batch
//! gradient descent.

use crate::util::sigmoid;

use super::{check_rows, ClassWeights, Hyperparams, ModelError};

/// Consecutive loss increases before training aborts as divergent.
const DIVERGENCE_PATIENCE: usize = 10;
/// Gradient L2-norm at which training stops.
const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }
}

/// Mean class-weighted logistic loss plus the L2 penalty
/// `0.5 * l2 * ||w||^2` (bias unpenalized).
pub fn logistic_loss(
    x: &[Vec<f64>],
    y: &[u8],
    cw: ClassWeights,
    l2: f64,
    weights: &[f64],
    bias: f64,
) -> f64 {
    let n = x.len() as f64;
    let data: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &label)| {
            let z: f64 = weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + bias;
            let signed = if label == 1 { z } else { -z };
            cw.for_label(label) * ((-signed.abs()).exp().ln_1p() + (-signed).max(0.0))
        })
        .sum();
    let penalty = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    data / n + penalty
}

/// Analytic gradient of [`logistic_loss`]; returns (d/dweights, d/dbias).
pub fn logistic_gradient(
    x: &[Vec<f64>],
    y: &[u8],
    cw: ClassWeights,
    l2: f64,
    weights: &[f64],
    bias: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = weights.len();
    let mut grad_w = vec![0.0; d];
    let mut grad_b = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + bias;
        let residual = cw.for_label(label) * (sigmoid(z) - label as f64);
        for (g, v) in grad_w.iter_mut().zip(row) {
            *g += residual * v;
        }
        grad_b += residual;
    }
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (grad_w, grad_b / n)
}

/// Minimizes the class-weighted L2-regularized logistic loss to gradient-norm
/// tolerance 1e-6 or `lr_max_iter` steps. The step size is
/// `learning_rate / L` with `L` a Lipschitz bound on the gradient, so the
/// default multiplier 1.0 always descends; larger multipliers can trigger
/// the divergence error.
pub fn fit_logreg(
    x: &[Vec<f64>],
    y: &[u8],
    cw: ClassWeights,
    params: &Hyperparams,
) -> Result<LogisticModel, ModelError> {
    let d = check_rows(x)?;
    if y.iter().all(|&v| v == y[0]) {
        return Err(ModelError::SingleClass);
    }
    if params.learning_rate <= 0.0 || params.lr_l2 < 0.0 {
        return Err(ModelError::InvalidParams(format!(
            "learning_rate {} must be positive and lr_l2 {} nonnegative",
            params.learning_rate, params.lr_l2
        )));
    }
    let n = x.len();
    let l2 = params.lr_l2;

    // L = max_w cw * sum ||(x, 1)||^2 / (4n) + l2 bounds the gradient's
    // Lipschitz constant for the weighted loss.
    let max_cw = cw.neg.max(cw.pos);
    let sum_sq: f64 = x
        .iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .sum();
    let lipschitz = max_cw * sum_sq / (4.0 * n as f64) + l2;
    let step = params.learning_rate / lipschitz;

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut prev_loss = logistic_loss(x, y, cw, l2, &weights, bias);
    let mut rising = 0usize;
    for _ in 0..params.lr_max_iter {
        let (grad_w, grad_b) = logistic_gradient(x, y, cw, l2, &weights, bias);
        let norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if norm <= GRAD_TOL {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        bias -= step * grad_b;
        let loss = logistic_loss(x, y, cw, l2, &weights, bias);
        if loss > prev_loss {
            rising += 1;
            if rising >= DIVERGENCE_PATIENCE {
                return Err(ModelError::Divergence(DIVERGENCE_PATIENCE));
            }
        } else {
            rising = 0;
        }
        prev_loss = loss;
    }
    Ok(LogisticModel { weights, bias })
}
