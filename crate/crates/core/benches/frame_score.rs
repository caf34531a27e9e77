use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pcq_core::synth::{generate_scene, scenes};
use pcq_core::{project_frame, Engine, ExecPolicy, GridConfig, IntensityParams, PolarPoint, SensorProfile, WeightScheme};

fn street_points(n: usize) -> (SensorProfile, Vec<PolarPoint>) {
    let profile = SensorProfile::lidar1().with_resolution(128, 1024).unwrap();
    let mut points: Vec<PolarPoint> = generate_scene(&scenes::street(&profile), 5)
        .unwrap()
        .valid_points()
        .copied()
        .collect();
    points.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    points.truncate(n);
    (profile, points)
}

/// Project plus score of one frame, sequential against the worker pool.
fn frame(c: &mut Criterion) {
    let mut group = c.benchmark_group("frame");
    group.measurement_time(Duration::from_secs(8));
    group.sample_size(20);
    let params = IntensityParams::default();
    for n in [25_000, 100_000] {
        let (profile, points) = street_points(n);
        let cfg = GridConfig::new(8, 32).unwrap();
        group.throughput(Throughput::Elements(n as u64));
        for (label, policy) in [("sequential", ExecPolicy::sequential()), ("parallel", ExecPolicy::default())] {
            let engine = Engine::new(policy);
            group.bench_with_input(BenchmarkId::new(label, n), &points, |b, pts| {
                b.iter(|| {
                    let grid = project_frame(pts, &profile, cfg);
                    black_box(engine.score_grid(&grid, WeightScheme::default(), params))
                })
            });
        }
    }
    group.finish();
}

/// Scoring only, over grid shapes that change the per-cell size.
fn grid_shape(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_shape");
    group.sample_size(20);
    let (profile, points) = street_points(100_000);
    for (v, h) in [(4, 16), (8, 32), (16, 64)] {
        let grid = project_frame(&points, &profile, GridConfig::new(v, h).unwrap());
        for (label, policy) in [("sequential", ExecPolicy::sequential()), ("parallel", ExecPolicy::default())] {
            let engine = Engine::new(policy);
            group.bench_with_input(BenchmarkId::new(label, format!("{v}x{h}")), &grid, |b, g| {
                b.iter(|| black_box(engine.score_grid(g, WeightScheme::default(), IntensityParams::default())))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, frame, grid_shape);
criterion_main!(benches);
