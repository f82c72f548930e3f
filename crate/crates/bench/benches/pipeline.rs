use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use pdscreen::eval::roc_auc;
use pdscreen::explain::{brute_force_shapley, treeshap};
use pdscreen::models::{fit_cart, fit_gbm, CartConfig};
use pdscreen::survey::{score_battery, Battery};

use pdscreen_bench::{fitted_forest, random_training_data, synthetic_responses};

fn bench_tree_fitting(c: &mut Criterion) {
    let (x, y) = random_training_data(400, 50, 1);
    let weights = vec![1.0; x.len()];
    c.bench_function("cart_fit_400x50_depth6", |b| {
        b.iter(|| {
            fit_cart(
                black_box(&x),
                black_box(&y),
                &weights,
                &CartConfig {
                    max_depth: 6,
                    min_samples_leaf: 1.0,
                    features_per_split: 0,
                },
                None,
            )
            .unwrap()
        })
    });
    c.bench_function("gbm_fit_400x50_30rounds", |b| {
        b.iter(|| {
            let params = pdscreen::models::Hyperparams {
                n_trees: 30,
                max_depth: 3,
                learning_rate: 0.1,
                ..Default::default()
            };
            fit_gbm(black_box(&x), black_box(&y), &params, 2.0).unwrap()
        })
    });
}

fn bench_attribution(c: &mut Criterion) {
    let (forest, query) = fitted_forest(300, 40, 100, 6, 3);
    c.bench_function("treeshap_100trees_40features", |b| {
        b.iter(|| treeshap(black_box(&forest), "q", black_box(&query)).unwrap())
    });
    let (small, small_query) = fitted_forest(60, 10, 5, 4, 5);
    c.bench_function("brute_force_shapley_5trees_10features", |b| {
        b.iter(|| brute_force_shapley(black_box(&small), black_box(&small_query)).unwrap())
    });
}

fn bench_metrics(c: &mut Criterion) {
    let (x, y) = random_training_data(10_000, 2, 7);
    let scores: Vec<f64> = x.iter().map(|r| r[0]).collect();
    c.bench_function("roc_auc_10k", |b| {
        b.iter(|| roc_auc(black_box(&y), black_box(&scores)).unwrap())
    });
}

fn bench_scoring(c: &mut Criterion) {
    let records = synthetic_responses(80, 20, 11);
    let battery = Battery::default_battery();
    c.bench_function("score_battery_100_participants", |b| {
        b.iter_batched(
            || records.clone(),
            |records| score_battery(battery.instruments(), black_box(&records)).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(
    benches,
    bench_tree_fitting,
    bench_attribution,
    bench_metrics,
    bench_scoring
);
criterion_main!(benches);
