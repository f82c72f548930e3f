//! Shared fixtures for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pdscreen::models::{balanced_weights, fit_random_forest, Hyperparams, TreeEnsemble};
use pdscreen::survey::{Battery, ResponseRecord};
use pdscreen::synth::{generate_cohort, CohortPlan};

/// Dense random binary-classification data with a linear-ish signal on the
/// first two features.
pub fn random_training_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let y: Vec<u8> = x
        .iter()
        .map(|row| u8::from(row[0] + 0.6 * row[1] + rng.random_range(-0.35..0.35) > 0.8))
        .collect();
    (x, y)
}

/// A fitted forest plus a query row, for attribution benchmarks.
pub fn fitted_forest(
    n: usize,
    d: usize,
    n_trees: usize,
    max_depth: usize,
    seed: u64,
) -> (TreeEnsemble, Vec<f64>) {
    let (x, y) = random_training_data(n, d, seed);
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    let weights = balanced_weights(n - n_pos, n_pos).expect("both classes present");
    let params = Hyperparams {
        n_trees,
        max_depth,
        seed,
        ..Hyperparams::default()
    };
    let mut ensemble = fit_random_forest(&x, &y, &params, weights).expect("fit");
    ensemble.feature_names = (0..d).map(|j| format!("f{j}")).collect();
    let query = x[0].clone();
    (ensemble, query)
}

/// A default-battery synthetic response cohort.
pub fn synthetic_responses(n_pd: usize, n_hc: usize, seed: u64) -> Vec<ResponseRecord> {
    let plan = CohortPlan {
        n_pd,
        n_hc,
        ..CohortPlan::default_plan(seed)
    };
    generate_cohort(&plan, Battery::default_battery().instruments()).expect("generate")
}
