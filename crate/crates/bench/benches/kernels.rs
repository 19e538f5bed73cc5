use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use norank_core::data::{generate_blobs, generate_random};
use norank_core::decomp::{cp_als, tucker_hooi, AlsOptions};
use norank_core::encoder::{backward, forward_batch, init_params};
use norank_core::losses::{sample_non_neighbor_pairs, total_loss, LossConfig};
use norank_core::metrics::{internal_metrics, kmeans, knn_indices, neighborhood_metrics};
use norank_core::mining::semi_hard_mine;
use std::hint::black_box;

fn decompositions(c: &mut Criterion) {
    let t = generate_random(16, &[16, 16], 2, 1).unwrap().to_tensor();
    let opts = AlsOptions::default();
    c.bench_function("cp_als 16^3 rank 5", |b| b.iter(|| cp_als(black_box(&t), 5, &opts).unwrap()));
    c.bench_function("tucker_hooi 16^3 rank 5", |b| b.iter(|| tucker_hooi(black_box(&t), &[5, 5, 5], &opts).unwrap()));
}

fn encoder_step(c: &mut Criterion) {
    let ds = generate_blobs(64, 256, 4, 3.0, 2).unwrap();
    let params = init_params(256, &[128, 64], 32, false, 3).unwrap();
    let neighbors = knn_indices(&ds.x, 10).unwrap();
    let cfg = LossConfig::default();
    c.bench_function("forward+loss+backward batch 64", |b| {
        b.iter(|| {
            let trace = forward_batch(&params, &ds.x).unwrap();
            let triplets = semi_hard_mine(&trace.z, &ds.labels, cfg.margin, 0).unwrap();
            let pairs = sample_non_neighbor_pairs(&neighbors, 20 * 64, 0);
            let (_, g) = total_loss(&trace.z, &triplets.triplets, &neighbors, Some(&pairs), &cfg).unwrap();
            backward(&params, &trace, &g).unwrap()
        })
    });
}

fn metrics(c: &mut Criterion) {
    let ds = generate_blobs(300, 16, 4, 4.0, 4).unwrap();
    let emb = ds.x.select_rows(&(0..300).collect::<Vec<_>>());
    c.bench_function("kmeans n=300 k=4", |b| b.iter(|| kmeans(black_box(&ds.x), 4, 0, 10).unwrap()));
    c.bench_function("internal metrics n=300", |b| b.iter(|| internal_metrics(black_box(&ds.x), &ds.labels).unwrap()));
    c.bench_function("trustworthiness/continuity n=300", |b| {
        b.iter_batched(|| emb.clone(), |e| neighborhood_metrics(&ds.x, &e, 10).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, decompositions, encoder_step, metrics);
criterion_main!(benches);
