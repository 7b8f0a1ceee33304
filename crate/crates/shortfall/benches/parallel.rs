//! Threaded versus sequential execution of the two hot batch workloads:
//! scenario generation and regularized ensemble solves. The `parallel`
//! feature routes `map_indexed` through rayon; `map_indexed_seq` is the
//! fixed baseline, so comparing the two quantifies the pool's benefit on
//! the current machine.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shortfall::exec;
use shortfall::montecarlo::generate_scenarios_stream;
use shortfall::portfolio_opt::optimize_regularized_es;

fn generate(i: usize) -> f64 {
    let m = generate_scenarios_stream(100, 200, 5, i as u64).unwrap();
    m.entry(0, 0)
}

fn realize(i: usize) -> f64 {
    let m = generate_scenarios_stream(25, 50, 5, i as u64).unwrap();
    optimize_regularized_es(&m, 0.7, 0.1, 1.0).unwrap().q0
}

fn bench_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario_generation");
    group.sample_size(20).measurement_time(Duration::from_secs(5));
    for &n in &[16usize, 64] {
        group.bench_with_input(BenchmarkId::new("threaded", n), &n, |b, &n| {
            b.iter(|| exec::map_indexed(n, generate))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| exec::map_indexed_seq(n, generate))
        });
    }
    group.finish();
}

fn bench_realizations(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble_realizations");
    group.sample_size(10).measurement_time(Duration::from_secs(8));
    for &n in &[4usize, 16] {
        group.bench_with_input(BenchmarkId::new("threaded", n), &n, |b, &n| {
            b.iter(|| exec::map_indexed(n, realize))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| exec::map_indexed_seq(n, realize))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_generation, bench_realizations);
criterion_main!(benches);
