use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mumimo::linalg::{weighted_logdet, LogdetWorkspace};
use mumimo::majorization::min_majorizing_vector;
use mumimo::throughput::uniform_gains;
use mumimo::{asymptotic_throughput, mc_throughput, solve_power, PowerSolverOptions};
use mumimo_bench::{desk_config, desk_fading, split_gaussian, spread_vector};

fn logdet(c: &mut Criterion) {
    let mut group = c.benchmark_group("weighted_logdet");
    for &(rows, cols) in &[(50usize, 10usize), (50, 40), (100, 100)] {
        let (re, im) = split_gaussian(rows, cols, 1);
        let w = vec![1.5; cols];
        let mut ws = LogdetWorkspace::default();
        group.bench_function(format!("{rows}x{cols}"), |b| {
            b.iter(|| weighted_logdet(black_box(&re), black_box(&im), rows, cols, &w, 0.5, &mut ws))
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let cfg = desk_config(40, 20, 30.0);
    let gains = uniform_gains(&cfg, 1.0, 1.0, 1.0);
    c.bench_function("mc_throughput/200_trials", |b| {
        b.iter(|| mc_throughput(&cfg, black_box(&gains), 20, 200, 3).unwrap())
    });
}

fn power(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_power");
    group.sample_size(10);
    for &(k, at) in &[(10usize, 20usize), (40, 20)] {
        let cfg = desk_config(k, at, 40.0);
        let fading = desk_fading(k, 5);
        let opts = PowerSolverOptions { inner_iterations: 30, ..PowerSolverOptions::default() };
        group.bench_function(format!("K{k}_aT{at}"), |b| b.iter(|| solve_power(&cfg, black_box(&fading), &opts).unwrap()));
    }
    group.finish();
}

fn majorization(c: &mut Criterion) {
    let y = spread_vector(80);
    c.bench_function("min_majorizing_vector/80", |b| b.iter(|| min_majorizing_vector(black_box(&y), 60).unwrap()));
}

fn quadrature(c: &mut Criterion) {
    let cfg = desk_config(50, 30, -18.0);
    c.bench_function("asymptotic_throughput", |b| {
        b.iter(|| asymptotic_throughput(black_box(&cfg), 1.0, 1.0, 1.0).unwrap())
    });
}

criterion_group!(kernels, logdet, monte_carlo, power, majorization, quadrature);
criterion_main!(kernels);
