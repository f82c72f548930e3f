//! Balanced random forest: bagged CART trees with per-split feature
//! subsampling and class weights applied as per-sample weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::util::derive_seed;

use super::{check_rows, CartConfig, ClassWeights, EnsembleKind, Hyperparams, ModelError, TreeEnsemble};

/// Fits `n_trees` CART trees on bootstrap resamples. Every tree draws its
/// own RNG stream from the master seed, so the ensemble is identical for a
/// given seed no matter how many threads fit it.
pub fn fit_random_forest(
    x: &[Vec<f64>],
    y: &[u8],
    params: &Hyperparams,
    weights: ClassWeights,
) -> Result<TreeEnsemble, ModelError> {
    let d = check_rows(x)?;
    if y.iter().all(|&v| v == y[0]) {
        return Err(ModelError::SingleClass);
    }
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParams("n_trees must be positive".into()));
    }
    let features_per_split = match params.features_per_split {
        0 => (d as f64).sqrt().ceil() as usize,
        m if m <= d => m,
        m => {
            return Err(ModelError::InvalidParams(format!(
                "features_per_split {m} exceeds {d} features"
            )))
        }
    };
    let cfg = CartConfig {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        features_per_split,
    };
    let n = x.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
            let indices: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let xb: Vec<Vec<f64>> = indices.iter().map(|&i| x[i].clone()).collect();
            let yb: Vec<u8> = indices.iter().map(|&i| y[i]).collect();
            let wb: Vec<f64> = yb.iter().map(|&label| weights.for_label(label)).collect();
            super::fit_cart(&xb, &yb, &wb, &cfg, Some(&mut rng))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(TreeEnsemble {
        trees,
        kind: EnsembleKind::Bagged,
        base_score: 0.0,
        feature_names: Vec::new(),
    })
}
