use std::hint::black_box;

use bmmpp::canonical::moments_to_model;
use bmmpp::counting::count_distribution;
use bmmpp::descriptors::{describe, moment_set};
use bmmpp::fit::{empirical_moments, fit_moments};
use bmmpp::likelihood::loglik;
use bmmpp::queue::{queue_length_at_departures, service_rate_for};
use bmmpp::{FitConfig, QueueSpec, RhoKind};
use bmmpp_bench::{model_k2, trace_k2};
use criterion::{criterion_group, criterion_main, Criterion};

fn descriptors(c: &mut Criterion) {
    let m = model_k2();
    c.bench_function("describe", |b| b.iter(|| describe(black_box(&m)).unwrap()));
    let ms = moment_set(&m).unwrap();
    c.bench_function("moments_to_model", |b| b.iter(|| moments_to_model(black_box(&ms), 2).unwrap()));
}

fn fitting(c: &mut Criterion) {
    let em = empirical_moments(&trace_k2(20_000), 2).unwrap();
    let cfg = FitConfig { multistart: 20, ..FitConfig::default() };
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    g.bench_function("sequential_k2_20_starts", |b| b.iter(|| fit_moments(black_box(&em), 2, &cfg).unwrap()));
    g.finish();
}

fn likelihood(c: &mut Criterion) {
    let m = model_k2();
    let tr = trace_k2(10_000);
    c.bench_function("loglik_10k", |b| b.iter(|| loglik(black_box(&m), &tr).unwrap()));
}

fn queue(c: &mut Criterion) {
    let m = model_k2();
    let spec = QueueSpec::with_service_rate(service_rate_for(&m, 0.8, RhoKind::Customer).unwrap());
    c.bench_function("queue_rho_0.8", |b| b.iter(|| queue_length_at_departures(black_box(&m), &spec).unwrap()));
}

fn counting(c: &mut Criterion) {
    let m = model_k2();
    c.bench_function("count_t10", |b| b.iter(|| count_distribution(black_box(&m), 10.0, 1e-10).unwrap()));
}

criterion_group!(benches, descriptors, fitting, likelihood, queue, counting);
criterion_main!(benches);
