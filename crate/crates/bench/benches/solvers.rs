use std::hint::black_box;

use chargelot::exact::{
    bounds, erlang_b, stationary_distribution, stationary_distribution_with, SolveMethod, SolverOptions,
};
use chargelot::fluid::{fluid_fixed_point, fluid_fixed_point_bisection};
use chargelot::ModelParams;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("stationary_distribution");
    for k in [10usize, 50, 100] {
        let p = ModelParams::new(k as f64, 1.0, 1.0, k, k as f64 / 2.0).unwrap();
        group.bench_with_input(BenchmarkId::new("direct", k), &p, |b, p| {
            b.iter(|| stationary_distribution(black_box(p)).unwrap())
        });
    }
    let p = ModelParams::new(50.0, 1.0, 1.0, 50, 25.0).unwrap();
    let opts = SolverOptions { method: SolveMethod::Iterative, ..SolverOptions::default() };
    group.bench_function("iterative/50", |b| b.iter(|| stationary_distribution_with(black_box(&p), &opts).unwrap()));
    group.finish();
}

fn closed_forms(c: &mut Criterion) {
    let p = ModelParams::new(60.0, 1.0, 1.0, 50, 30.0).unwrap();
    c.bench_function("bounds/K50", |b| b.iter(|| bounds(black_box(&p)).unwrap()));
    c.bench_function("erlang_b/K1000", |b| b.iter(|| erlang_b(black_box(1000), black_box(950.0))));
    c.bench_function("fluid/closed_form", |b| b.iter(|| fluid_fixed_point(black_box(&p)).unwrap()));
    c.bench_function("fluid/bisection", |b| b.iter(|| fluid_fixed_point_bisection(black_box(&p)).unwrap()));
}

criterion_group!(benches, exact, closed_forms);
criterion_main!(benches);
