use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use phasemac::registration::{phantom, Axis};
use phasemac::{
    mac_run, resample_volume, sine_mac_experiment, BackendId, MacCellConfig, RigidTransform,
    SineExperiment, VoxelType,
};

fn bench_mac(c: &mut Criterion) {
    let cfg = MacCellConfig::default();
    let mut group = c.benchmark_group("mac_run");
    for n in [16usize, 128, 512] {
        let x: Vec<f64> = (0..n).map(|k| 0.3 * ((k as f64) * 0.1).sin()).collect();
        let w = vec![cfg.weight_per_tick() * 10.0; n];
        for backend in [BackendId::Ideal, BackendId::VcoCell] {
            group.bench_with_input(BenchmarkId::new(backend.to_string(), n), &n, |b, _| {
                b.iter(|| mac_run(backend, &cfg, black_box(&x), black_box(&w)).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_sine(c: &mut Criterion) {
    let cfg = MacCellConfig::default();
    let exp = SineExperiment::default();
    c.bench_function("sine_experiment_512", |b| {
        b.iter(|| sine_mac_experiment(black_box(&cfg), &exp).unwrap())
    });
}

fn bench_resample(c: &mut Criterion) {
    let cfg = MacCellConfig::default();
    let vol = phantom(16, VoxelType::U8).unwrap();
    let m =
        RigidTransform::rotation(Axis::Z, 0.2).then(&RigidTransform::translation([1.0, -2.0, 0.5]));
    let mut group = c.benchmark_group("resample_16");
    group.sample_size(10);
    for backend in [BackendId::Ideal, BackendId::VcoCell] {
        group.bench_function(backend.to_string(), |b| {
            b.iter(|| resample_volume(&vol, &m, backend, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_mac, bench_sine, bench_resample);
criterion_main!(benches);
