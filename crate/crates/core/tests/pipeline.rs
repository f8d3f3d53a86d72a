use std::fs::File;

use wavecast::mlp::{generate_dataset, save_model, train, Coverage, TrainConfig};
use wavecast::oracle::AnalyticOracle;
use wavecast::predict::{predict_iteration, MODEL_EXTENSION};
use wavecast::trace::{lstm_like, synthesize_trace, SynthOptions};
use wavecast::{
    MetricsCache, ModelStore, OperationKind, PredictError, PredictionPath, PredictorConfig, Registry,
};

fn small_config() -> TrainConfig {
    TrainConfig {
        hidden_layers: 2,
        hidden_width: 32,
        epochs: 5,
        batch_size: 64,
        ..TrainConfig::default()
    }
}

#[test]
fn trained_models_drive_varying_ops() {
    let reg = Registry::bundled();
    let gpus: Vec<_> = ["P4000", "T4"]
        .iter()
        .map(|n| reg.get(n).unwrap().clone())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    for kind in [OperationKind::Lstm, OperationKind::Bmm, OperationKind::Linear] {
        let samples =
            generate_dataset(kind, 60, 3, &gpus, Coverage::EveryGpu, &AnalyticOracle::default()).unwrap();
        let trained = train(kind, &samples, &small_config()).unwrap();
        let path = dir.path().join(format!("{kind}.{MODEL_EXTENSION}"));
        save_model(File::create(path).unwrap(), &trained.model).unwrap();
    }
    let models = ModelStore::load_dir(dir.path()).unwrap();
    assert_eq!(models.len(), 3);

    let trace = synthesize_trace(
        &lstm_like(8),
        &gpus[0],
        1,
        &AnalyticOracle::default(),
        SynthOptions::default(),
    )
    .unwrap();
    let cache = MetricsCache::from_trace(&trace);
    let report = predict_iteration(
        &trace,
        &reg,
        &gpus[1],
        &models,
        &cache,
        &PredictorConfig::default(),
    )
    .unwrap();

    let paths: Vec<_> = report
        .per_op
        .iter()
        .map(|p| (p.op_name.as_str(), p.path))
        .collect();
    assert_eq!(
        paths,
        [
            ("dropout", PredictionPath::WaveScaling),
            ("lstm", PredictionPath::Mlp),
            ("bmm", PredictionPath::Mlp),
            ("softmax", PredictionPath::WaveScaling),
            ("linear", PredictionPath::Mlp),
            ("adam_step", PredictionPath::WaveScaling),
        ]
    );
    assert!(report
        .per_op
        .iter()
        .all(|p| p.predicted_time_ms > 0.0 && p.warning.is_none()));
    let sum = report.per_op.iter().fold(0.0, |acc, p| acc + p.predicted_time_ms);
    assert_eq!(report.iteration_time_ms, sum);
    assert_eq!(report.cost_normalized_throughput, Some(report.throughput / 0.35));
}

#[test]
fn missing_models_are_reported_together() {
    let reg = Registry::bundled();
    let origin = reg.get("V100").unwrap();
    let trace = synthesize_trace(
        &lstm_like(4),
        origin,
        2,
        &AnalyticOracle::default(),
        SynthOptions::default(),
    )
    .unwrap();
    let err = predict_iteration(
        &trace,
        &reg,
        reg.get("2070").unwrap(),
        &ModelStore::new(),
        &MetricsCache::from_trace(&trace),
        &PredictorConfig::default(),
    )
    .unwrap_err();
    match err {
        PredictError::Operations(failures) => {
            let indices: Vec<_> = failures.iter().map(|(i, _)| *i).collect();
            assert_eq!(indices, [1, 2, 4]);
        }
        other => panic!("unexpected {other:?}"),
    }
}
