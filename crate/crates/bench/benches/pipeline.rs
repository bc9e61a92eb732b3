use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use toponav_bench::{chain_map, descriptors, hard_map, teach, world};
use toponav_core::sim::RouteSpec;
use toponav_core::{best_match, build_map, optimize, Pose, SimilarityScore, ThresholdConfig};

fn bench_best_match(c: &mut Criterion) {
    let mut group = c.benchmark_group("best_match");
    for &n in &[16usize, 128, 1024] {
        let cands = descriptors(n, 512);
        let q = cands[n / 2].clone();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| best_match(black_box(&q), black_box(&cands), None).unwrap())
        });
    }
    group.finish();
}

fn bench_shortest_path(c: &mut Criterion) {
    let mut group = c.benchmark_group("shortest_path");
    for &n in &[32usize, 256] {
        let m = chain_map(n, 8);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| m.shortest_path(black_box(0), black_box(n - 1)).unwrap())
        });
    }
    group.finish();
}

fn bench_build(c: &mut Criterion) {
    let (_, run) = teach(0, &RouteSpec::hard());
    c.bench_function("build_map/hard", |b| {
        b.iter(|| build_map(black_box(&run.frames), ThresholdConfig::default()).unwrap())
    });
    let m = hard_map(0);
    c.bench_function("optimize/hard", |b| {
        b.iter(|| optimize(black_box(&m), SimilarityScore::new(0.95), SimilarityScore::new(0.8)).unwrap())
    });
}

fn bench_render(c: &mut Criterion) {
    let w = world(0);
    let p = Pose::new(3.0, 1.0, 0.4);
    c.bench_function("descriptor_at/512", |b| b.iter(|| w.descriptor_at(black_box(&p))));
}

criterion_group!(benches, bench_best_match, bench_shortest_path, bench_build, bench_render);
criterion_main!(benches);
