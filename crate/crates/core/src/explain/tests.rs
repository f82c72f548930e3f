use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::models::{
    balanced_weights, fit_gbm, fit_random_forest, EnsembleKind, Hyperparams, TreeEnsemble,
    TreeNode,
};

fn leaf(value: f64, cover: f64) -> TreeNode {
    TreeNode::Leaf { value, cover }
}

fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> TreeNode {
    TreeNode::Split {
        feature_index: feature,
        threshold,
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn bagged(trees: Vec<TreeNode>, n_features: usize) -> TreeEnsemble {
    TreeEnsemble {
        trees,
        kind: EnsembleKind::Bagged,
        base_score: 0.0,
        feature_names: (0..n_features).map(|j| format!("f{j}")).collect(),
    }
}

/// Fits a small random forest on random data; the workhorse for oracle
/// agreement tests.
fn random_forest_instance(
    rng: &mut ChaCha8Rng,
    max_trees: usize,
    max_depth: usize,
    max_features: usize,
) -> (TreeEnsemble, Vec<f64>) {
    loop {
        let n = rng.random_range(12..=30);
        let d = rng.random_range(2..=max_features);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let params = Hyperparams {
            n_trees: rng.random_range(1..=max_trees),
            max_depth: rng.random_range(1..=max_depth),
            min_samples_leaf: 1.0,
            seed: rng.random(),
            ..Hyperparams::default()
        };
        let n_pos = y.iter().filter(|&&v| v == 1).count();
        let weights = balanced_weights(n - n_pos, n_pos).unwrap();
        let mut ensemble = fit_random_forest(&x, &y, &params, weights).unwrap();
        ensemble.feature_names = (0..d).map(|j| format!("f{j}")).collect();
        let query: Vec<f64> = (0..d).map(|_| rng.random_range(-1.2..1.2)).collect();
        return (ensemble, query);
    }
}

#[test]
fn expected_value_of_single_leaf_is_its_value() {
    let ensemble = bagged(vec![leaf(0.7, 5.0)], 1);
    assert_eq!(expected_value(&ensemble).unwrap(), 0.7);
}

#[test]
fn expected_value_weights_leaves_by_cover() {
    let stump = split(0, 0.5, leaf(0.0, 3.0), leaf(1.0, 1.0));
    let ensemble = bagged(vec![stump], 1);
    assert_eq!(expected_value(&ensemble).unwrap(), 0.25);
}

#[test]
fn expected_value_equals_mean_training_prediction_for_training_covers() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 40;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect();
    let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] > 0.5)).collect();
    let params = Hyperparams {
        n_trees: 7,
        bootstrap: false,
        max_depth: 3,
        seed: 5,
        ..Hyperparams::default()
    };
    let mut ensemble =
        fit_random_forest(&x, &y, &params, crate::models::ClassWeights::UNIT).unwrap();
    ensemble.feature_names = vec!["a".to_string(), "b".to_string()];
    let baseline = expected_value(&ensemble).unwrap();
    let mean_pred: f64 = x.iter().map(|r| ensemble.predict_proba(r)).sum::<f64>() / n as f64;
    assert!((baseline - mean_pred).abs() < 1e-12);
}

#[test]
fn zero_cover_node_is_a_model_integrity_error() {
    let bad = bagged(vec![split(0, 0.5, leaf(0.0, 0.0), leaf(1.0, 1.0))], 1);
    assert!(matches!(
        expected_value(&bad),
        Err(ExplainError::NonPositiveCover(_))
    ));
}

#[test]
fn unused_feature_gets_exactly_zero() {
    let stump = split(0, 0.5, leaf(0.0, 3.0), leaf(1.0, 1.0));
    let ensemble = bagged(vec![stump], 3);
    let attribution = treeshap(&ensemble, "p", &[0.9, 0.4, -2.0]).unwrap();
    assert_eq!(attribution.phi_for("f1"), Some(0.0));
    assert_eq!(attribution.phi_for("f2"), Some(0.0));
}

#[test]
fn single_stump_two_player_shapley_by_hand() {
    // Covers (3, 1), leaves (0, 1); x goes right. Baseline 0.25, prediction
    // 1, so the split feature carries +0.75.
    let stump = split(0, 0.5, leaf(0.0, 3.0), leaf(1.0, 1.0));
    let ensemble = bagged(vec![stump], 2);
    let attribution = treeshap(&ensemble, "p", &[0.9, 0.0]).unwrap();
    assert!((attribution.phi_for("f0").unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(attribution.phi_for("f1"), Some(0.0));
    assert!((attribution.base_value - 0.25).abs() < 1e-12);
    assert!((attribution.prediction - 1.0).abs() < 1e-12);
}

#[test]
fn stump_sign_convention_follows_leaf_ordering() {
    // Falling on the higher-valued leaf must produce positive phi.
    let stump = split(0, 0.0, leaf(0.2, 2.0), leaf(0.8, 2.0));
    let ensemble = bagged(vec![stump], 1);
    let high = treeshap(&ensemble, "p", &[1.0]).unwrap();
    assert!(high.phi_for("f0").unwrap() > 0.0);
    let low = treeshap(&ensemble, "p", &[-1.0]).unwrap();
    assert!(low.phi_for("f0").unwrap() < 0.0);
}

#[test]
fn treeshap_matches_brute_force_on_random_forests() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..25 {
        let (ensemble, query) = random_forest_instance(&mut rng, 4, 4, 6);
        let fast = treeshap(&ensemble, "p", &query).unwrap();
        let brute = brute_force_shapley(&ensemble, &query).unwrap();
        for ((name, phi), expected) in fast.phi.iter().zip(&brute) {
            assert!(
                (phi - expected).abs() < 1e-9,
                "{name}: {phi} vs {expected}"
            );
        }
    }
}

#[test]
fn treeshap_matches_brute_force_on_boosted_ensembles() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..10 {
        let n = 25;
        let d = 4;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let params = Hyperparams {
            n_trees: 3,
            max_depth: 3,
            learning_rate: 0.3,
            ..Hyperparams::default()
        };
        let mut ensemble = fit_gbm(&x, &y, &params, 2.0).unwrap();
        ensemble.feature_names = (0..d).map(|j| format!("f{j}")).collect();
        let query: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = treeshap(&ensemble, "p", &query).unwrap();
        assert_eq!(fast.space, OutputSpace::Margin);
        let brute = brute_force_shapley(&ensemble, &query).unwrap();
        for ((_, phi), expected) in fast.phi.iter().zip(&brute) {
            assert!((phi - expected).abs() < 1e-9);
        }
        // Local accuracy in margin space.
        assert!((fast.base_value + fast.phi_sum() - ensemble.margin(&query)).abs() < 1e-9);
    }
}

#[test]
fn local_accuracy_holds_on_random_forests() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (ensemble, query) = random_forest_instance(&mut rng, 5, 4, 8);
        let attribution = treeshap(&ensemble, "p", &query).unwrap();
        let reconstructed = attribution.base_value + attribution.phi_sum();
        let prediction = ensemble.predict_proba(&query);
        assert!(
            (reconstructed - prediction).abs() < 1e-9,
            "{reconstructed} vs {prediction}"
        );
        assert_eq!(attribution.prediction, prediction);
    }
}

#[test]
fn local_accuracy_holds_on_deep_unlimited_trees() {
    // Unlimited depth grows long paths with repeated features, exercising
    // the duplicate-feature unwind far beyond the oracle-sized trees.
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let n = 300;
    let d = 8;
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
    let params = Hyperparams {
        n_trees: 10,
        max_depth: 0,
        min_samples_leaf: 1.0,
        seed: 17,
        ..Hyperparams::default()
    };
    let mut ensemble =
        fit_random_forest(&x, &y, &params, crate::models::ClassWeights { neg: 1.4, pos: 0.7 })
            .unwrap();
    ensemble.feature_names = (0..d).map(|j| format!("f{j}")).collect();
    let max_depth = ensemble.trees.iter().map(|t| t.depth()).max().unwrap();
    assert!(max_depth >= 8, "expected deep trees, got depth {max_depth}");
    for _ in 0..50 {
        let query: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let attribution = treeshap(&ensemble, "q", &query).unwrap();
        let gap =
            (attribution.base_value + attribution.phi_sum() - ensemble.predict_proba(&query)).abs();
        assert!(gap < 1e-9, "deep-tree local accuracy off by {gap}");
    }
}

#[test]
fn missing_feature_value_is_rejected_by_name() {
    let stump = split(1, 0.5, leaf(0.0, 3.0), leaf(1.0, 1.0));
    let ensemble = bagged(vec![stump], 2);
    let err = treeshap(&ensemble, "p", &[0.1, f64::NAN]).unwrap_err();
    assert!(matches!(err, ExplainError::MissingFeature(ref name) if name == "f1"));
}

#[test]
fn brute_force_satisfies_efficiency_axiom() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let (ensemble, query) = random_forest_instance(&mut rng, 3, 3, 5);
        let phi = brute_force_shapley(&ensemble, &query).unwrap();
        let total: f64 = phi.iter().sum();
        let expected = ensemble.predict_proba(&query) - expected_value(&ensemble).unwrap();
        assert!((total - expected).abs() < 1e-9);
    }
}

#[test]
fn brute_force_satisfies_symmetry_axiom() {
    // Two trees playing identical roles on features 0 and 1; a query with
    // equal values must credit both features equally.
    let tree_a = split(0, 0.0, leaf(0.1, 2.0), leaf(0.9, 2.0));
    let tree_b = split(1, 0.0, leaf(0.1, 2.0), leaf(0.9, 2.0));
    let ensemble = bagged(vec![tree_a, tree_b], 2);
    let phi = brute_force_shapley(&ensemble, &[0.6, 0.6]).unwrap();
    assert!((phi[0] - phi[1]).abs() < 1e-12);
    let fast = treeshap(&ensemble, "p", &[0.6, 0.6]).unwrap();
    assert!((fast.phi[0].1 - fast.phi[1].1).abs() < 1e-12);
}

#[test]
fn brute_force_refuses_oversized_feature_spaces() {
    let stump = split(0, 0.5, leaf(0.0, 1.0), leaf(1.0, 1.0));
    let ensemble = bagged(vec![stump], 16);
    let err = brute_force_shapley(&ensemble, &[0.0; 16]).unwrap_err();
    match err {
        ExplainError::TooManyFeatures {
            n_features,
            evaluations,
        } => {
            assert_eq!(n_features, 16);
            assert_eq!(evaluations, 65536);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn global_contributions_zero_attributions_stay_zero() {
    let attribution = Attribution {
        participant_id: "p".to_string(),
        base_value: 0.5,
        phi: vec![("a".to_string(), 0.0), ("b".to_string(), 0.0)],
        prediction: 0.5,
        space: OutputSpace::Probability,
    };
    let summary =
        global_contributions(&[attribution], &[CohortLabel::Pd]).unwrap();
    assert!(summary.ranked.iter().all(|c| c.total() == 0.0));
    assert_eq!(summary.warnings.len(), 1, "HC class is empty");
}

#[test]
fn global_contributions_match_hand_arithmetic() {
    let mk = |id: &str, a: f64, b: f64| Attribution {
        participant_id: id.to_string(),
        base_value: 0.0,
        phi: vec![("a".to_string(), a), ("b".to_string(), b)],
        prediction: a + b,
        space: OutputSpace::Probability,
    };
    let attributions = vec![mk("hc", -0.2, 0.1), mk("pd", 0.4, -0.3)];
    let labels = vec![CohortLabel::Hc, CohortLabel::Pd];
    let summary = global_contributions(&attributions, &labels).unwrap();
    assert!(summary.warnings.is_empty());
    // feature a: hc mean 0.2, pd mean 0.4 (total 0.6); feature b: 0.1 / 0.3.
    assert_eq!(summary.ranked[0].feature, "a");
    assert!((summary.ranked[0].mean_abs_hc - 0.2).abs() < 1e-15);
    assert!((summary.ranked[0].mean_abs_pd - 0.4).abs() < 1e-15);
    assert_eq!(summary.ranked[1].feature, "b");
    assert!((summary.ranked[1].total() - 0.4).abs() < 1e-15);
}

#[test]
fn global_contributions_reject_non_binary_labels() {
    let attribution = Attribution {
        participant_id: "p".to_string(),
        base_value: 0.0,
        phi: vec![("a".to_string(), 1.0)],
        prediction: 1.0,
        space: OutputSpace::Probability,
    };
    assert!(matches!(
        global_contributions(&[attribution], &[CohortLabel::Prodromal]),
        Err(ExplainError::LabelNotBinary(_))
    ));
}

#[test]
fn waterfall_reconstructs_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let m = rng.random_range(1..=12);
        let phi: Vec<(String, f64)> = (0..m)
            .map(|j| (format!("f{j}"), rng.random_range(-1.0..1.0)))
            .collect();
        let base_value = rng.random_range(-1.0..1.0);
        let prediction = base_value + phi.iter().map(|(_, v)| v).sum::<f64>();
        let attribution = Attribution {
            participant_id: "p".to_string(),
            base_value,
            phi,
            prediction,
            space: OutputSpace::Margin,
        };
        let top_k = rng.random_range(1..=m + 2);
        let waterfall = local_waterfall(&attribution, top_k).unwrap();
        let reconstructed = waterfall.base_value
            + waterfall.entries.iter().map(|(_, v)| v).sum::<f64>()
            + waterfall.remainder;
        assert!((reconstructed - prediction).abs() < 1e-9);
        if top_k >= m {
            assert_eq!(waterfall.remainder, 0.0);
            assert_eq!(waterfall.entries.len(), m);
        } else {
            assert_eq!(waterfall.entries.len(), top_k);
        }
        // Entries are ordered by decreasing magnitude.
        for pair in waterfall.entries.windows(2) {
            assert!(pair[0].1.abs() >= pair[1].1.abs() - 1e-15);
        }
    }
}

#[test]
fn waterfall_requires_positive_top_k() {
    let attribution = Attribution {
        participant_id: "p".to_string(),
        base_value: 0.0,
        phi: vec![("a".to_string(), 0.5)],
        prediction: 0.5,
        space: OutputSpace::Probability,
    };
    assert!(matches!(
        local_waterfall(&attribution, 0),
        Err(ExplainError::InvalidTopK)
    ));
}
