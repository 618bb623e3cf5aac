use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sdsynth_core::numerics::{
    beta_quantile, discretize_pair, solve_discrete_lyapunov, spectrum, Matrix,
};

/// Deterministic dense test matrix scaled so its spectral radius stays below one.
fn test_matrix(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        let v = ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5;
        v / n as f64
    })
}

fn bench_spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectrum");
    for n in [4, 11, 30] {
        let m = test_matrix(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| spectrum(black_box(m)).unwrap())
        });
    }
    group.finish();
}

fn bench_discretize(c: &mut Criterion) {
    let mut group = c.benchmark_group("discretize_pair");
    for n in [4, 11] {
        let a = test_matrix(n) * 10.0;
        let b = Matrix::from_fn(n, 2, |i, j| (i + j) as f64 * 0.1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(a, b), |bench, (a, b)| {
            bench.iter(|| discretize_pair(black_box(a), black_box(b), 0.1).unwrap())
        });
    }
    group.finish();
}

fn bench_lyapunov(c: &mut Criterion) {
    let g = test_matrix(11);
    let q = Matrix::identity(11, 11);
    c.bench_function("lyapunov/11", |b| {
        b.iter(|| solve_discrete_lyapunov(black_box(&g), black_box(&q)).unwrap())
    });
}

fn bench_beta_quantile(c: &mut Criterion) {
    c.bench_function("beta_quantile", |b| {
        b.iter(|| beta_quantile(black_box(0.005), black_box(451.0), black_box(51.0)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_spectrum,
    bench_discretize,
    bench_lyapunov,
    bench_beta_quantile
);
criterion_main!(benches);
