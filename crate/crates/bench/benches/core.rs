use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cubic_core::kernel::{evolve_measure_grid, example2_kernel, KernelOptions, MeasureGrid};
use cubic_core::{evolve, CubicTensor, SimplexVector, TransitionFamily};

/// A deterministic symmetric tensor with non-trivial rows.
fn tensor(n: usize) -> CubicTensor {
    CubicTensor::from_fn(n, |i, j, k, l| {
        let key = (i + 1) * (j + 1) * (k + 1) + i + j + k;
        let w = |m: usize| 1.0 + ((key * 7 + m * 13) % 11) as f64;
        w(l) / (0..n).map(w).sum::<f64>()
    })
    .unwrap()
}

fn bench_evolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("evolve");
    for n in [3, 8, 16] {
        let t = tensor(n);
        let x = SimplexVector::uniform(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| evolve(black_box(&t), black_box(&x)).unwrap())
        });
    }
    group.finish();
}

fn bench_compose(c: &mut Criterion) {
    let x0 = SimplexVector::new(vec![0.2, 0.3, 0.5]).unwrap();
    c.bench_function("compose_step/n3_gap5", |b| {
        b.iter(|| {
            let fam = TransitionFamily::new(tensor(3), x0.clone()).unwrap();
            fam.compose_step(black_box(0), black_box(5)).unwrap()
        })
    });
}

fn bench_measure(c: &mut Criterion) {
    let k = example2_kernel();
    let opts = KernelOptions::default();
    let point = MeasureGrid::point_mass(0.0, 0.0);
    let spread = evolve_measure_grid(&k, &point, 0.0, 1.0, &opts).unwrap().grid;
    let mut group = c.benchmark_group("evolve_measure_grid");
    group.sample_size(10);
    group.bench_function("point_mass", |b| {
        b.iter(|| evolve_measure_grid(&k, black_box(&point), 0.0, 2.0, &opts).unwrap())
    });
    group.bench_function("grid_64", |b| {
        b.iter(|| evolve_measure_grid(&k, black_box(&spread), 1.0, 2.5, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_evolve, bench_compose, bench_measure);
criterion_main!(benches);
