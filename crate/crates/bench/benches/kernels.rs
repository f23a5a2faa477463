use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dlab_bench::{compression, golden, pair, perturbed};
use dlab_core::dilation::{choose_window, dilate_pair};
use dlab_core::mrange::{support_level1, ucp_membership, dual_directions, MAX_ITER, MEMBERSHIP_TOL};
use dlab_core::reverse::reverse_dilate_pair;
use dlab_core::torus::{certify_density, subgroup_ball};
use dlab_core::tuples::random_unitary_tuple;
use dlab_core::{dilate_full, utag_pipeline, PhaseMatrix, Truncation};

fn pair_dilation(c: &mut Criterion) {
    let mut g = c.benchmark_group("dilate_pair");
    for m in [4usize, 8, 16] {
        let (u, v, q) = pair(m, 0.01);
        let n = choose_window(0.01).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| dilate_pair(black_box(&u), black_box(&v), q, 2 * n + 2, Some(n)).unwrap())
        });
    }
    g.finish();
}

fn full_dilation(c: &mut Criterion) {
    let theta = PhaseMatrix::rational_upper(3, &[(1, 2), (1, 2), (0, 1)]).unwrap();
    let u = perturbed(&theta, 0.01);
    c.bench_function("dilate_full_d3", |b| {
        b.iter(|| dilate_full(black_box(&u), &theta, Truncation::default()).unwrap())
    });
    let theta = PhaseMatrix::rational_upper(2, &[(1, 4)]).unwrap();
    let u = perturbed(&theta, 0.02);
    c.bench_function("utag_pipeline_d2", |b| {
        b.iter(|| utag_pipeline(black_box(&u), &theta, Truncation { ring: Some(16), window: None }).unwrap())
    });
}

fn reverse_step(c: &mut Criterion) {
    let (u, v, q) = pair(4, 0.05);
    c.bench_function("reverse_dilate_pair_l8", |b| {
        b.iter(|| reverse_dilate_pair(black_box(&u), black_box(&v), q, 8, 8, Some(3)).unwrap())
    });
}

fn torus_density(c: &mut Criterion) {
    let q = golden();
    let mut g = c.benchmark_group("certify_density");
    g.sample_size(10);
    for (n, eta) in [(12usize, 0.45), (64, 0.1)] {
        let cloud = subgroup_ball(&q, n).unwrap();
        g.bench_with_input(BenchmarkId::new("golden", n), &eta, |b, &eta| {
            b.iter(|| certify_density(black_box(&cloud), eta).unwrap())
        });
    }
    g.finish();
}

fn matrix_range(c: &mut Criterion) {
    let a = random_unitary_tuple(2, 6, &mut dlab_bench::rng(3));
    let dirs = dual_directions(2, 64);
    c.bench_function("support_level1_64", |b| {
        b.iter(|| dirs.iter().map(|d| support_level1(&a, d).unwrap()).sum::<f64>())
    });
    let x = compression(&a, 2);
    let mut g = c.benchmark_group("ucp_membership");
    g.sample_size(10);
    g.bench_function("compression_6_to_2", |b| {
        b.iter(|| ucp_membership(&a, black_box(&x), MEMBERSHIP_TOL, MAX_ITER, 0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, pair_dilation, full_dilation, reverse_step, torus_density, matrix_range);
criterion_main!(benches);
