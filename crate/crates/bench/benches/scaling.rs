use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wavecast::occupancy::{occupancy, KernelLaunchConfig};
use wavecast::predict::predict_iteration;
use wavecast::wavescale::scale_kernel_with;
use wavecast::{Equation, ModelStore, PredictorConfig};
use wavecast_bench::resnet_trace;

fn kernel_scaling(c: &mut Criterion) {
    let (registry, trace, _) = resnet_trace(32);
    let origin = registry.get("P4000").unwrap();
    let dest = registry.get("V100").unwrap();
    let kernel = trace.kernels().next().unwrap().clone();
    let mut group = c.benchmark_group("scale_kernel");
    for eq in [Equation::Simplified, Equation::Exact] {
        group.bench_function(format!("{eq:?}"), |b| {
            b.iter(|| scale_kernel_with(eq, black_box(&kernel), origin, dest, 0.7).unwrap())
        });
    }
    group.finish();

    let launch = KernelLaunchConfig::new(100_000, 256)
        .with_registers(64)
        .with_shared_mem(16 * 1024);
    c.bench_function("occupancy", |b| {
        b.iter(|| occupancy(black_box(&launch), dest).unwrap())
    });
}

fn iteration_prediction(c: &mut Criterion) {
    let models = ModelStore::new();
    let config = PredictorConfig {
        fallback_wave_scaling: true,
        ..PredictorConfig::default()
    };
    let mut group = c.benchmark_group("predict_iteration");
    for batch in [16, 64] {
        let (registry, trace, cache) = resnet_trace(batch);
        let dest = registry.get("T4").unwrap().clone();
        group.bench_with_input(BenchmarkId::from_parameter(batch), &trace, |b, trace| {
            b.iter(|| predict_iteration(trace, &registry, &dest, &models, &cache, &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernel_scaling, iteration_prediction);
criterion_main!(benches);
