use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ndarray::Array2;
use wavecast::OperationKind;
use wavecast_bench::conv2d_model;

fn inference(c: &mut Criterion) {
    let model = conv2d_model(8, 1024);
    let inputs = OperationKind::Conv2d.feature_count();
    let one: Vec<f64> = (0..inputs).map(|i| 1.0 + i as f64).collect();
    c.bench_function("forward/8x1024", |b| {
        b.iter(|| model.forward(black_box(&one)).unwrap())
    });

    let mut group = c.benchmark_group("predict_batch/8x1024");
    for rows in [64usize, 512] {
        let x = Array2::from_shape_fn((rows, inputs), |(r, c)| (r + c) as f64 * 0.5);
        group.throughput(Throughput::Elements(rows as u64));
        group.bench_with_input(BenchmarkId::from_parameter(rows), &x, |b, x| {
            b.iter(|| model.predict_batch(x.view()).unwrap())
        });
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let model = conv2d_model(2, 256);
    let inputs = OperationKind::Conv2d.feature_count();
    let x = Array2::from_shape_fn((512, inputs), |(r, c)| ((r * 7 + c) % 13) as f64);
    let y = ndarray::Array1::from_shape_fn(512, |r| 1.0 + r as f64 * 0.01);
    c.bench_function("loss_and_gradient/2x256/512", |b| {
        b.iter(|| model.loss_and_gradient(x.view(), y.view()).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = criterion::Criterion::default().sample_size(20);
    targets = inference, gradient
}
criterion_main!(benches);
