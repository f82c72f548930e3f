//! K-nearest-neighbors scorer. No native class weighting; evaluated as-is on
//! stratified data.

use super::{check_rows, ModelError};

#[derive(Debug, Clone)]
pub struct KnnModel {
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
    k: usize,
}

pub fn fit_knn(x: &[Vec<f64>], y: &[u8], k: usize) -> Result<KnnModel, ModelError> {
    check_rows(x)?;
    if k == 0 || k > x.len() {
        return Err(ModelError::KTooLarge { k, n: x.len() });
    }
    Ok(KnnModel {
        x: x.to_vec(),
        y: y.to_vec(),
        k,
    })
}

impl KnnModel {
    /// Fraction of positive labels among the k nearest training points by
    /// Euclidean distance; distance ties break toward the lower training
    /// index.
    pub fn predict_proba(&self, query: &[f64]) -> f64 {
        let mut by_distance: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row
                    .iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let positives = by_distance[..self.k]
            .iter()
            .filter(|&&(_, i)| self.y[i] == 1)
            .count();
        positives as f64 / self.k as f64
    }
}
