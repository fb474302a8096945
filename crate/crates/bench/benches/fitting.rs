use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mogfit_core::{
    em_fit, optimal_power, relative_entropy, select_size, DistributionSpec, EmConfig, PowerSearchConfig,
    QuadratureConfig, SizeSearchConfig,
};

fn divergence(c: &mut Criterion) {
    let x = DistributionSpec::lognormal(0.0, 1.0).unwrap();
    let y = DistributionSpec::gaussian(1.5, 4.0).unwrap();
    let cfg = QuadratureConfig::default();
    c.bench_function("relative_entropy/lognormal_vs_gaussian", |b| {
        b.iter(|| relative_entropy(black_box(&x), black_box(&y), &cfg).unwrap())
    });
}

fn power(c: &mut Criterion) {
    let x = DistributionSpec::exponential(1.0).unwrap();
    let (search, cfg) = (PowerSearchConfig::default(), QuadratureConfig::default());
    c.bench_function("optimal_power/exponential", |b| {
        b.iter(|| optimal_power(black_box(&x), &search, &cfg).unwrap())
    });
}

fn em(c: &mut Criterion) {
    let cfg = EmConfig::default();
    let exp = DistributionSpec::exponential(1.0).unwrap();
    let tri = DistributionSpec::triangular(0.0, 0.3, 1.0).unwrap();
    let mut group = c.benchmark_group("em_fit");
    group.sample_size(20);
    group.bench_function("exponential_m2", |b| b.iter(|| em_fit(black_box(&exp), 2, &cfg).unwrap()));
    group.bench_function("triangular_m2", |b| b.iter(|| em_fit(black_box(&tri), 2, &cfg).unwrap()));
    group.finish();
}

fn size(c: &mut Criterion) {
    let cfg = EmConfig::default();
    let exp = DistributionSpec::exponential(1.0).unwrap();
    let search = SizeSearchConfig::from_ratio(0.1).unwrap();
    let mut group = c.benchmark_group("select_size");
    group.sample_size(10);
    group.bench_function("exponential_kn_0.1", |b| b.iter(|| select_size(black_box(&exp), &cfg, &search).unwrap()));
    group.finish();
}

criterion_group!(benches, divergence, power, em, size);
criterion_main!(benches);
