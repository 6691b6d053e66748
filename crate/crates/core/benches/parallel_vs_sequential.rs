use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use julia_gasket::cell_complex::build_level;
use julia_gasket::dirichlet_form::harmonic_extension_with;
use julia_gasket::geometry::{embed_levels, render_with, RenderConfig, DEFAULT_TOL};
use julia_gasket::preimage::{solve_preimages_batch, DEFAULT_TOL as ROOT_TOL};
use julia_gasket::renormalization::general_scan;
use julia_gasket::{Complex64, ConductanceModel, Execution, GluingTable, MapSpec};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_render(c: &mut Criterion) {
    let spec = MapSpec::sierpinski();
    let cfg = RenderConfig::square(&spec, 256, 200);
    let mut group = c.benchmark_group("render_256");
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| render_with(&spec, black_box(&cfg), mode).unwrap())
        });
    }
    group.finish();
}

fn bench_preimages(c: &mut Criterion) {
    let spec = MapSpec::sierpinski();
    let targets: Vec<Complex64> = (0..2000)
        .map(|k| Complex64::from_polar(0.5 + (k % 7) as f64 * 0.2, k as f64 * 0.37))
        .collect();
    let mut group = c.benchmark_group("preimage_batch_2000");
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| solve_preimages_batch(&spec, black_box(&targets), ROOT_TOL, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_embedding(c: &mut Criterion) {
    let spec = MapSpec::sierpinski();
    let table = GluingTable::sg_dynamical_gluing();
    let mut group = c.benchmark_group("embed_level_5");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| embed_levels(&spec, &table, 5, DEFAULT_TOL, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("renorm_scan");
    for points in [1_000, 10_000] {
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, points), &points, |b, &p| {
                b.iter(|| general_scan(black_box([10.0, 1.0, 1.0]), p, mode).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_harmonic(c: &mut Criterion) {
    let table = GluingTable::sg_dynamical_gluing();
    let model = ConductanceModel::standard(&table);
    let (g0, g1) = (
        build_level(&table, 7).unwrap(),
        build_level(&table, 8).unwrap(),
    );
    let u: Vec<f64> = (0..g0.vertex_count())
        .map(|k| (k as f64 * 0.1).sin())
        .collect();
    let mut group = c.benchmark_group("harmonic_extension_7_to_8");
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| harmonic_extension_with(&g0, &g1, &model, black_box(&u), mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_render,
    bench_preimages,
    bench_embedding,
    bench_scan,
    bench_harmonic
);
criterion_main!(benches);
