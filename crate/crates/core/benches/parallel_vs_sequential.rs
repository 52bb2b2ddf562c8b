//! Sequential against rayon execution for every data-parallel stage.
//!
//! Without the `parallel` feature both variants run the sequential path, which
//! gives a baseline for the dispatch overhead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spraygate_core::detector::{cluster_detect_with, ClusterParams};
use spraygate_core::filter::{
    dror_filter_with, dsor_filter_with, threshold_mask, DrorParams, DsorParams, FilterMethod, Threshold,
};
use spraygate_core::gate::GateConfig;
use spraygate_core::pipeline::{run_pipeline, PipelineConfig};
use spraygate_core::sim::{generate_frames, SceneConfig};
use spraygate_core::spatial::{knn_mean_distance_with, SpatialIndex};
use spraygate_core::{ExecMode, Point, PointCloud};

const MODES: [(&str, ExecMode); 2] = [
    ("sequential", ExecMode::Sequential),
    ("parallel", ExecMode::Parallel),
];

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-20.0..80.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-0.2..3.0),
                rng.random(),
            )
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

fn threshold(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let scores: Vec<f32> = (0..100_000).map(|_| rng.random_range(-3.0..7.0)).collect();
    let tau = Threshold::new(2.3).unwrap();
    let mut group = c.benchmark_group("threshold_100k");
    for (name, mode) in MODES {
        group.bench_function(name, |b| b.iter(|| threshold_mask(black_box(&scores), tau, mode)));
    }
    group.finish();
}

fn neighbourhood_filters(c: &mut Criterion) {
    let cloud = random_cloud(30_000, 1);
    let mut group = c.benchmark_group("filters_30k");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new("dsor", name), |b| {
            b.iter(|| dsor_filter_with(black_box(&cloud), &DsorParams::default(), mode).unwrap())
        });
        group.bench_function(BenchmarkId::new("dror", name), |b| {
            b.iter(|| dror_filter_with(black_box(&cloud), &DrorParams::default(), mode).unwrap())
        });
        let index = SpatialIndex::build(&cloud);
        group.bench_function(BenchmarkId::new("knn_mean_k5", name), |b| {
            b.iter(|| knn_mean_distance_with(black_box(&index), 5, mode).unwrap())
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let frame = &generate_frames(&SceneConfig::default(), 1, 0, ExecMode::Sequential).unwrap()[0];
    let mut group = c.benchmark_group("cluster_detect");
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| cluster_detect_with(black_box(&frame.cloud), &ClusterParams::default(), mode).unwrap())
        });
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let template = SceneConfig {
        lead_distance: 10.0,
        lead_distance_spread: 35.0,
        vary_speed: true,
        ..Default::default()
    };
    let frames = generate_frames(&template, 50, 0, ExecMode::Parallel).unwrap();
    let cfg = PipelineConfig {
        filter: FilterMethod::Threshold(Threshold::new(2.3).unwrap()),
        gate: Some(GateConfig::default()),
        ..Default::default()
    };
    let mut group = c.benchmark_group("pipeline_50_frames");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| run_pipeline(black_box(&frames), &cfg, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, threshold, neighbourhood_filters, clustering, pipeline);
criterion_main!(benches);
