use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use faer::c64;
use kgscatter::definitize::{almost_analytic_extension, hs_functional_calculus, HsConfig};
use kgscatter::linalg::{self, CMat};
use kgscatter::par;
use kgscatter::scenario::stock;
use kgscatter::smooth::Bump;

fn generator(points: usize) -> CMat {
    stock("bound_state_well").unwrap().with_points(points).build().unwrap().generator
}

/// Pool widths to compare; `1` is the sequential path.
fn widths() -> Vec<usize> {
    let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    vec![1, max.max(2)]
}

fn resolvent_sum(c: &mut Criterion) {
    let a = generator(32);
    let n = a.nrows();
    let nodes: Vec<c64> = (0..512).map(|k| c64::new(-3.0 + 6.0 * k as f64 / 512.0, 0.05)).collect();
    let mut group = c.benchmark_group("resolvent_sum");
    for width in widths() {
        group.bench_with_input(BenchmarkId::from_parameter(width), &width, |b, &width| {
            b.iter(|| {
                par::with_threads(Some(width), || {
                    par::sum_matrices(nodes.len(), n, n, |i, acc| {
                        let shifted = linalg::scale(&linalg::identity(n), nodes[i]) - &a;
                        *acc += linalg::inverse(&shifted).unwrap();
                    })
                })
            })
        });
    }
    group.finish();
}

fn functional_calculus(c: &mut Criterion) {
    let a = generator(24);
    let f = Bump { center: 1.2, radius: 0.5, amplitude: 1.0 };
    let ext = almost_analytic_extension(&f, &[], HsConfig::default()).unwrap();
    let mut group = c.benchmark_group("hs_functional_calculus");
    group.sample_size(10);
    for width in widths() {
        group.bench_with_input(BenchmarkId::from_parameter(width), &width, |b, &width| {
            b.iter(|| par::with_threads(Some(width), || hs_functional_calculus(black_box(&a), &f, &ext).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, resolvent_sum, functional_calculus);
criterion_main!(benches);
