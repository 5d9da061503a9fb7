use std::hint::black_box;

use chargelot::diffusion::{simulate_sde, DiffusionSpec, SdeConfig};
use chargelot::fluid::DistributionSpec;
use chargelot::{simulate_general, simulate_markovian, ModelParams, RunLength, SimConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn config() -> SimConfig {
    SimConfig { run_length: RunLength::Horizon(200.0), replications: 4, ..SimConfig::default() }
}

fn simulators(c: &mut Criterion) {
    let p = ModelParams::new(10.0, 1.0, 1.0, 10, 5.0).unwrap();
    let cfg = config();
    let mut group = c.benchmark_group("des");
    group.sample_size(20);
    group.bench_function("markovian/K10", |b| b.iter(|| simulate_markovian(black_box(&p), &cfg).unwrap()));
    let (park, charge) = (DistributionSpec::exponential(1.0), DistributionSpec::deterministic(1.0));
    group.bench_function("general/K10", |b| {
        b.iter(|| simulate_general(black_box(10.0), 10, 5.0, &park, &charge, &cfg).unwrap())
    });
    group.finish();
}

fn sde(c: &mut Criterion) {
    let spec = DiffusionSpec::new(0.0, 1.0, 1.0, 1.0).unwrap();
    let cfg = SdeConfig { horizon: 100.0, ..SdeConfig::default() };
    let mut group = c.benchmark_group("sde");
    group.sample_size(20);
    group.bench_function("euler_maruyama/1e5_steps", |b| {
        b.iter(|| simulate_sde(black_box(&spec), (0.0, 0.0), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, simulators, sde);
criterion_main!(benches);
