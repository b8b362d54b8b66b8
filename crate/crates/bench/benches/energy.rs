use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fiberlat_bench::fixture;
use fiberlat_core::potential::{Cauchy, Projection};
use fiberlat_core::{gradient, solve_general, solve_quadratic, total_energy, Problem, SolverOptions};

fn evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy");
    for n in [32u32, 64] {
        let f = fixture(1.0 / n as f64, 3);
        group.bench_function(BenchmarkId::new("total", n), |b| {
            b.iter(|| black_box(total_energy(&f.displacement, &f.force, &f.fibers, &Projection).unwrap()))
        });
        group.bench_function(BenchmarkId::new("gradient", n), |b| {
            b.iter(|| black_box(gradient(&f.displacement, &f.force, &f.fibers, &Cauchy).unwrap()))
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    let f = fixture(1.0 / 32.0, 3);
    let options = SolverOptions::default();
    group.bench_function("quadratic/32", |b| {
        let problem = Problem::new(&f.force, &f.fibers, &Projection).unwrap();
        b.iter(|| black_box(solve_quadratic(&problem, &options).unwrap().iterations))
    });
    group.bench_function("general-cauchy/32", |b| {
        let problem = Problem::new(&f.force, &f.fibers, &Cauchy).unwrap();
        b.iter(|| black_box(solve_general(&problem, &options).unwrap().iterations))
    });
    group.finish();
}

criterion_group!(benches, evaluation, solvers);
criterion_main!(benches);
