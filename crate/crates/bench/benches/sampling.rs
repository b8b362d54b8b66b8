use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fiberlat_bench::{grid, params};
use fiberlat_core::FiberSampler;

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sampling");
    for n in [16u32, 32] {
        let eps = 1.0 / n as f64;
        let (p, g) = (params(eps), grid(eps));
        let sampler = FiberSampler::new(&p, 7, false);
        group.bench_with_input(BenchmarkId::new("naive", n), &g, |b, g| {
            b.iter(|| black_box(sampler.sample_naive(g).unwrap().len()))
        });
    }
    for n in [16u32, 32, 64, 128] {
        let eps = 1.0 / n as f64;
        let (p, g) = (params(eps), grid(eps));
        let sampler = FiberSampler::new(&p, 7, false);
        group.bench_with_input(BenchmarkId::new("shells", n), &g, |b, g| {
            b.iter(|| black_box(sampler.sample_shells(g).unwrap().len()))
        });
    }
    group.finish();
}

criterion_group!(benches, sampling);
criterion_main!(benches);
