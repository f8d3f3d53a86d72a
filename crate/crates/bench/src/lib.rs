//! Shared inputs for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavecast::mlp::TargetSpace;
use wavecast::oracle::AnalyticOracle;
use wavecast::trace::{resnet_like, synthesize_trace, SynthOptions};
use wavecast::{IterationTrace, MetricsCache, MlpModel, OperationKind, Registry, TrainConfig};

/// A synthesized residual-CNN trace on the P4000 with its metrics cache.
pub fn resnet_trace(batch: u32) -> (Registry, IterationTrace, MetricsCache) {
    let registry = Registry::bundled();
    let origin = registry.get("P4000").expect("bundled GPU").clone();
    let trace = synthesize_trace(
        &resnet_like(batch),
        &origin,
        1,
        &AnalyticOracle::default(),
        SynthOptions::default(),
    )
    .expect("bundled template");
    let cache = MetricsCache::from_trace(&trace);
    (registry, trace, cache)
}

/// An untrained conv2d predictor with `layers` hidden layers of `width` units.
pub fn conv2d_model(layers: usize, width: usize) -> MlpModel {
    let config = TrainConfig {
        hidden_layers: layers,
        hidden_width: width,
        ..TrainConfig::default()
    };
    let sizes = config.layer_sizes(OperationKind::Conv2d.feature_count());
    MlpModel::new_random(
        OperationKind::Conv2d,
        &sizes,
        TargetSpace::Linear,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
}
