use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use toeplitz_lab::interval_maps::{best_dyadic_approximation, MeasurePreservingMap};
use toeplitz_lab::majorize::horn_construct;
use toeplitz_lab::sphere_domain::{x1, x2, QuadratureRule};
use toeplitz_lab::spectra::eigenvalues;
use toeplitz_lab::toeplitz::assemble;

fn bench_assemble(c: &mut Criterion) {
    let symbol = x1();
    let rule = QuadratureRule::for_rank(32).unwrap();
    c.bench_function("assemble x1 m=32", |b| {
        b.iter(|| assemble(black_box(&symbol), 32, &rule).unwrap())
    });
}

fn bench_eigenvalues(c: &mut Criterion) {
    let rule = QuadratureRule::for_rank(64).unwrap();
    let t = assemble(&x2(), 64, &rule).unwrap();
    c.bench_function("eigenvalues x2 m=64", |b| {
        b.iter(|| eigenvalues(black_box(t.entries()), 1e-9).unwrap())
    });
}

fn bench_assignment(c: &mut Criterion) {
    let phi = MeasurePreservingMap::baker();
    let mut group = c.benchmark_group("assignment");
    group.sample_size(10);
    group.bench_function("baker m=127", |b| {
        b.iter(|| best_dyadic_approximation(black_box(&phi), 127).unwrap())
    });
    group.finish();
}

fn bench_horn(c: &mut Criterion) {
    let n = 64;
    let lambda: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64).powi(2)).collect();
    let mean = lambda.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = lambda.iter().map(|l| 0.5 * (l + mean)).collect();
    c.bench_function("horn n=64", |b| {
        b.iter(|| horn_construct(black_box(&lambda), black_box(&d), 1e-9).unwrap())
    });
}

criterion_group!(benches, bench_assemble, bench_eigenvalues, bench_assignment, bench_horn);
criterion_main!(benches);
