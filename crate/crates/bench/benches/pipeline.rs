use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::hint::black_box;

use anaxnet_bench::fixture;
use anaxnet_core::adjacency::{accumulate_stats, jaccard_matrix};
use anaxnet_core::eval::roc_auc;
use anaxnet_core::model::{backward, forward, init_params, ModelConfig};
use anaxnet_core::tensor::matmul;
use anaxnet_core::Matrix;

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("matmul");
    for &n in &[32usize, 128] {
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        group.bench_function(format!("{n}x{n}"), |bencher| {
            bencher.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn bench_forward_backward(c: &mut Criterion) {
    let (spec, records, adjacency) = fixture(1, 2);
    let config = ModelConfig::with_dims(spec.regions, spec.feature_dim, spec.label_count, 3);
    let params = init_params(&config).unwrap();
    let record = &records[0];

    c.bench_function("forward_desk_dims", |bencher| {
        bencher.iter(|| {
            forward(
                black_box(&record.features),
                &record.mask,
                &adjacency.normalized,
                &params,
            )
            .unwrap()
        })
    });

    let trace = forward(&record.features, &record.mask, &adjacency.normalized, &params).unwrap();
    c.bench_function("backward_desk_dims", |bencher| {
        bencher.iter(|| backward(black_box(&trace), &record.labels, &params).unwrap())
    });
}

fn bench_adjacency(c: &mut Criterion) {
    let (spec, records, _) = fixture(2000, 4);
    let labels: Vec<Matrix> = records.iter().map(|r| r.labels.clone()).collect();
    c.bench_function("jaccard_2000_images", |bencher| {
        bencher.iter_batched(
            || labels.clone(),
            |labels| {
                let stats =
                    accumulate_stats(spec.regions, spec.label_count, labels.iter()).unwrap();
                jaccard_matrix(black_box(&stats))
            },
            BatchSize::LargeInput,
        )
    });
}

fn bench_auc(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
    let labels: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..=1u8)).collect();
    c.bench_function("roc_auc_10k", |bencher| {
        bencher.iter(|| roc_auc(black_box(&scores), black_box(&labels)).unwrap())
    });
}

criterion_group!(benches, bench_matmul, bench_forward_backward, bench_adjacency, bench_auc);
criterion_main!(benches);
