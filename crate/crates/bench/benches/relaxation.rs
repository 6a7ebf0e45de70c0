use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use orthoreg::measures::correlation_tril;
use orthoreg::relaxation::{build_exemption_mask, expected_relaxed_pairs};
use orthoreg_bench::random_kernel;

fn monte_carlo(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo");
    for (f, b) in [(64, 64), (412, 100)] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{f}/{b}")),
            &(f, b),
            |bench, &(f, b)| {
                bench.iter(|| expected_relaxed_pairs(black_box(f), b, 10_000, 0).unwrap())
            },
        );
    }
    group.finish();
}

fn masks(c: &mut Criterion) {
    let k = random_kernel(256, 2304, 3);
    let tril = correlation_tril(&k).unwrap();
    c.bench_function("exemption_mask/256", |b| {
        b.iter(|| build_exemption_mask(black_box(&tril), 60, 60))
    });
}

criterion_group!(benches, monte_carlo, masks);
criterion_main!(benches);
