//! Iteration-time prediction on a destination GPU.
//!
//! Kernel-alike operations are wave-scaled kernel by kernel; kernel-varying
//! operations go through the per-operation MLP. Per-operation results are
//! summed in trace order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwspec::{GpuSpec, Registry, RegistryError};
use crate::mlp::{load_model, MlpError, MlpModel};
use crate::ops::{OpConfig, OperationKind, OpsError};
use crate::roofline::{arithmetic_intensity, select_gamma};
use crate::trace::{cache_lookup, IterationTrace, MetricsCache, OperationRecord};
use crate::wavescale::{scale_kernel_with, Equation, WaveScaleError};

/// File extension of saved models inside a models directory.
pub const MODEL_EXTENSION: &str = "wcm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpClass {
    KernelAlike,
    KernelVarying,
}

/// Decides which operations need a learned predictor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpClassifier {
    varying: BTreeSet<String>,
}

impl Default for OpClassifier {
    fn default() -> Self {
        Self::with_varying(OperationKind::ALL.iter().map(|k| k.as_str()))
    }
}

impl OpClassifier {
    pub fn with_varying<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self {
            varying: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn add_varying(&mut self, name: impl Into<String>) {
        self.varying.insert(name.into());
    }

    pub fn classify(&self, op_name: &str) -> OpClass {
        if self.varying.contains(op_name) {
            OpClass::KernelVarying
        } else {
            OpClass::KernelAlike
        }
    }
}

/// Trained predictors keyed by operation name.
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    models: BTreeMap<String, MlpModel>,
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, op_name: impl Into<String>, model: MlpModel) {
        self.models.insert(op_name.into(), model);
    }

    pub fn get(&self, op_name: &str) -> Option<&MlpModel> {
        self.models.get(op_name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Loads every `<op>.wcm` file in `dir`, keyed by the model's operation.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, MlpError> {
        let mut store = Self::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.sort();
        for path in paths {
            if path.extension().and_then(|e| e.to_str()) != Some(MODEL_EXTENSION) {
                continue;
            }
            let model = load_model(std::fs::File::open(&path)?)?;
            store.insert(model.operation.as_str(), model);
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictorConfig {
    pub equation: Equation,
    /// Wave-scale kernel-varying operations that have no model, with a warning.
    pub fallback_wave_scaling: bool,
    pub classifier: OpClassifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionPath {
    WaveScaling,
    Mlp,
}

impl fmt::Display for PredictionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionPath::WaveScaling => "wave_scaling",
            PredictionPath::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpPrediction {
    pub op_name: String,
    pub predicted_time_ms: f64,
    pub path: PredictionPath,
    /// One gamma per kernel on the wave-scaling path; empty for the MLP path.
    pub gammas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub origin_gpu: String,
    pub dest_gpu: String,
    pub batch_size: u32,
    pub per_op: Vec<OpPrediction>,
    pub iteration_time_ms: f64,
    /// Samples per second.
    pub throughput: f64,
    /// Samples per second per dollar-hour; absent when the GPU has no price.
    pub cost_normalized_throughput: Option<f64>,
}

impl PredictionReport {
    pub fn warnings(&self) -> impl Iterator<Item = (usize, &str)> {
        self.per_op
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.warning.as_deref().map(|w| (i, w)))
    }
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("no trained model for kernel-varying operation {op_name:?}; generate data with `wavecast dataset-gen --op {op_name}`, train with `wavecast mlp-train`, or pass --fallback-wave-scaling")]
    MissingModel { op_name: String },
    #[error("kernel-alike operation {op_name:?} has no kernels to scale")]
    NoKernels { op_name: String },
    #[error("{op_name}: {source}")]
    WaveScale {
        op_name: String,
        #[source]
        source: WaveScaleError,
    },
    #[error("{op_name}: {source}")]
    Params {
        op_name: String,
        #[source]
        source: OpsError,
    },
    #[error("{op_name}: {source}")]
    Model {
        op_name: String,
        #[source]
        source: MlpError,
    },
    #[error("{}", .0.iter().map(|(i, e)| format!("operation {i}: {e}")).collect::<Vec<_>>().join("\n"))]
    Operations(Vec<(usize, PredictError)>),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("GPU {gpu:?} has no hourly cost in the registry")]
    MissingCost { gpu: String },
    #[error("extrapolation: {0}")]
    Extrapolation(String),
}

fn wave_scale(
    op: &OperationRecord,
    origin: &GpuSpec,
    dest: &GpuSpec,
    cache: &MetricsCache,
    equation: Equation,
) -> Result<(f64, Vec<f64>), PredictError> {
    if op.kernels.is_empty() {
        return Err(PredictError::NoKernels {
            op_name: op.op_name.clone(),
        });
    }
    let mut total = 0.0;
    let mut gammas = Vec::with_capacity(op.kernels.len());
    for (index, kernel) in op.kernels.iter().enumerate() {
        let gamma = match cache_lookup(cache, kernel).map(arithmetic_intensity) {
            Some(Ok(x)) => select_gamma(x, dest),
            // no metrics, or zero DRAM traffic: treat as bandwidth bound
            _ => 1.0,
        };
        total += scale_kernel_with(equation, kernel, origin, dest, gamma).map_err(|e| {
            PredictError::WaveScale {
                op_name: op.op_name.clone(),
                source: WaveScaleError::Kernel {
                    index,
                    source: Box::new(e),
                },
            }
        })?;
        gammas.push(gamma);
    }
    Ok((total, gammas))
}

/// Predicted forward plus backward time of one operation on `dest`.
pub fn predict_operation(
    op: &OperationRecord,
    origin: &GpuSpec,
    dest: &GpuSpec,
    models: &ModelStore,
    cache: &MetricsCache,
    config: &PredictorConfig,
) -> Result<OpPrediction, PredictError> {
    let scaled = |warning: Option<String>| {
        let (t, gammas) = wave_scale(op, origin, dest, cache, config.equation)?;
        Ok(OpPrediction {
            op_name: op.op_name.clone(),
            predicted_time_ms: t,
            path: PredictionPath::WaveScaling,
            gammas,
            warning,
        })
    };
    if config.classifier.classify(&op.op_name) == OpClass::KernelAlike {
        return scaled(None);
    }
    let Some(model) = models.get(&op.op_name) else {
        if config.fallback_wave_scaling {
            return scaled(Some(format!(
                "no model for kernel-varying operation {:?}; wave scaling used instead",
                op.op_name
            )));
        }
        return Err(PredictError::MissingModel {
            op_name: op.op_name.clone(),
        });
    };
    let params =
        OpConfig::from_params(model.operation, &op.op_params).map_err(|source| PredictError::Params {
            op_name: op.op_name.clone(),
            source,
        })?;
    let t = model
        .forward(&params.features(dest))
        .map_err(|source| PredictError::Model {
            op_name: op.op_name.clone(),
            source,
        })?;
    Ok(OpPrediction {
        op_name: op.op_name.clone(),
        predicted_time_ms: t,
        path: PredictionPath::Mlp,
        gammas: Vec::new(),
        warning: None,
    })
}

/// Predicts every operation of `trace` on `dest` and sums them in trace order.
///
/// Operations are evaluated in parallel; failures are reported together,
/// each with its operation index.
pub fn predict_iteration(
    trace: &IterationTrace,
    registry: &Registry,
    dest: &GpuSpec,
    models: &ModelStore,
    cache: &MetricsCache,
    config: &PredictorConfig,
) -> Result<PredictionReport, PredictError> {
    let origin = registry.get(&trace.origin_gpu)?;
    let results: Vec<Result<OpPrediction, PredictError>> = trace
        .operations
        .par_iter()
        .map(|op| predict_operation(op, origin, dest, models, cache, config))
        .collect();
    let mut per_op = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => per_op.push(p),
            Err(e) => errors.push((i, e)),
        }
    }
    if !errors.is_empty() {
        return Err(PredictError::Operations(errors));
    }
    let iteration_time_ms = per_op.iter().fold(0.0, |acc, p| acc + p.predicted_time_ms);
    let throughput = throughput(trace.batch_size, iteration_time_ms);
    Ok(PredictionReport {
        origin_gpu: trace.origin_gpu.clone(),
        dest_gpu: dest.name.clone(),
        batch_size: trace.batch_size,
        per_op,
        iteration_time_ms,
        throughput,
        cost_normalized_throughput: dest.hourly_cost_usd.map(|c| throughput / c),
    })
}

/// Samples per second for a batch that takes `iteration_time_ms`.
pub fn throughput(batch_size: u32, iteration_time_ms: f64) -> f64 {
    f64::from(batch_size) / (iteration_time_ms / 1e3)
}

/// Throughput per dollar-hour of renting `dest`.
pub fn cost_normalized(report: &PredictionReport, dest: &GpuSpec) -> Result<f64, PredictError> {
    match dest.hourly_cost_usd {
        Some(c) => Ok(report.throughput / c),
        None => Err(PredictError::MissingCost {
            gpu: dest.name.clone(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    Throughput,
    Cost,
}

/// Reports ordered best first by `metric`, ties broken by GPU name.
pub fn rank_destinations(
    trace: &IterationTrace,
    registry: &Registry,
    dests: &[&GpuSpec],
    models: &ModelStore,
    cache: &MetricsCache,
    config: &PredictorConfig,
    metric: RankMetric,
) -> Result<Vec<PredictionReport>, PredictError> {
    if metric == RankMetric::Cost {
        if let Some(g) = dests.iter().find(|g| g.hourly_cost_usd.is_none()) {
            return Err(PredictError::MissingCost { gpu: g.name.clone() });
        }
    }
    let mut reports = dests
        .iter()
        .map(|d| predict_iteration(trace, registry, d, models, cache, config))
        .collect::<Result<Vec<_>, _>>()?;
    let key = |r: &PredictionReport| match metric {
        RankMetric::Throughput => r.throughput,
        RankMetric::Cost => r.cost_normalized_throughput.unwrap_or(f64::NEG_INFINITY),
    };
    reports.sort_by(|a, b| {
        key(b)
            .total_cmp(&key(a))
            .then_with(|| a.dest_gpu.cmp(&b.dest_gpu))
    });
    Ok(reports)
}

/// A least-squares line through (batch size, time) points, evaluated at a target batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// ms per sample.
    pub slope: f64,
    /// ms.
    pub intercept: f64,
    pub r_squared: f64,
    pub target_batch: f64,
    pub predicted_time_ms: f64,
    pub warnings: Vec<String>,
}

/// Minimum coefficient of determination before the fit is flagged.
pub const MIN_R_SQUARED: f64 = 0.95;

/// Fits `time = slope * batch + intercept` to `points` and evaluates it at `target_batch`.
pub fn extrapolate_batch(points: &[(f64, f64)], target_batch: f64) -> Result<Extrapolation, PredictError> {
    let distinct: BTreeSet<u64> = points.iter().map(|p| p.0.to_bits()).collect();
    if distinct.len() < 2 {
        return Err(PredictError::Extrapolation(format!(
            "need at least two distinct batch sizes, got {}",
            distinct.len()
        )));
    }
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(PredictError::Extrapolation("points must be finite".into()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let predicted = slope * target_batch + intercept;
    if predicted.is_nan() || predicted <= 0.0 {
        return Err(PredictError::Extrapolation(format!(
            "line predicts a non-positive time {predicted} ms at batch {target_batch}"
        )));
    }
    let mut warnings = Vec::new();
    if r_squared < MIN_R_SQUARED {
        warnings.push(format!("poor linear fit: R^2 = {r_squared:.4} < {MIN_R_SQUARED}"));
    }
    let max_x = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if target_batch < max_x {
        warnings.push(format!(
            "target batch {target_batch} is inside the observed range (max {max_x}); this is interpolation"
        ));
    }
    Ok(Extrapolation {
        slope,
        intercept,
        r_squared,
        target_batch,
        predicted_time_ms: predicted,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::AnalyticOracle;
    use crate::trace::{resnet_like, synthesize_trace, SynthOptions};
    use proptest::prelude::*;

    fn setup(batch: u32, seed: u64) -> (Registry, IterationTrace) {
        let reg = Registry::bundled();
        let trace = synthesize_trace(
            &resnet_like(batch),
            reg.get("P4000").unwrap(),
            seed,
            &AnalyticOracle::default(),
            SynthOptions::default(),
        )
        .unwrap();
        (reg, trace)
    }

    fn lenient() -> PredictorConfig {
        PredictorConfig {
            fallback_wave_scaling: true,
            ..PredictorConfig::default()
        }
    }

    #[test]
    fn classification() {
        let mut c = OpClassifier::default();
        assert_eq!(c.classify("conv2d"), OpClass::KernelVarying);
        assert_eq!(c.classify("relu"), OpClass::KernelAlike);
        assert_eq!(c.classify("gru"), OpClass::KernelAlike);
        c.add_varying("gru");
        assert_eq!(c.classify("gru"), OpClass::KernelVarying);
    }

    #[test]
    fn identity_on_origin() {
        let (reg, trace) = setup(16, 1);
        let origin = reg.get("P4000").unwrap();
        let cache = MetricsCache::from_trace(&trace);
        for equation in [Equation::Simplified, Equation::Exact] {
            let config = PredictorConfig {
                equation,
                ..lenient()
            };
            let r = predict_iteration(&trace, &reg, origin, &ModelStore::new(), &cache, &config).unwrap();
            assert_eq!(r.iteration_time_ms, trace.total_time_ms());
            assert_eq!(r.throughput, 16.0 / (trace.total_time_ms() / 1e3));
            assert_eq!(r.cost_normalized_throughput, None);
        }
    }

    #[test]
    fn missing_model_is_an_error_by_default() {
        let (reg, trace) = setup(8, 2);
        let err = predict_iteration(
            &trace,
            &reg,
            reg.get("V100").unwrap(),
            &ModelStore::new(),
            &MetricsCache::new(),
            &PredictorConfig::default(),
        )
        .unwrap_err();
        let PredictError::Operations(list) = &err else {
            panic!("{err}")
        };
        let conv_count = trace.operations.iter().filter(|o| o.op_name == "conv2d").count();
        assert_eq!(list.len(), conv_count + 1);
        assert_eq!(list[0].0, 0);
        assert!(err
            .to_string()
            .contains("operation 0: no trained model for kernel-varying operation \"conv2d\""));
    }

    #[test]
    fn fallback_warns_and_routes_every_op_once() {
        let (reg, trace) = setup(8, 3);
        let r = predict_iteration(
            &trace,
            &reg,
            reg.get("T4").unwrap(),
            &ModelStore::new(),
            &MetricsCache::new(),
            &lenient(),
        )
        .unwrap();
        assert_eq!(r.per_op.len(), trace.operations.len());
        assert!(r.per_op.iter().all(|p| p.path == PredictionPath::WaveScaling));
        let warned: Vec<usize> = r.warnings().map(|(i, _)| i).collect();
        let varying: Vec<usize> = trace
            .operations
            .iter()
            .enumerate()
            .filter(|(_, o)| OpClassifier::default().classify(&o.op_name) == OpClass::KernelVarying)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(warned, varying);
    }

    #[test]
    fn gamma_is_one_without_metrics() {
        let (reg, trace) = setup(8, 4);
        let config = lenient();
        let dest = reg.get("V100").unwrap();
        let none = predict_iteration(
            &trace,
            &reg,
            dest,
            &ModelStore::new(),
            &MetricsCache::new(),
            &config,
        )
        .unwrap();
        assert!(none.per_op.iter().flat_map(|p| &p.gammas).all(|&g| g == 1.0));
        let with = predict_iteration(
            &trace,
            &reg,
            dest,
            &ModelStore::new(),
            &MetricsCache::from_trace(&trace),
            &config,
        )
        .unwrap();
        assert!(with.per_op.iter().flat_map(|p| &p.gammas).any(|&g| g < 1.0));
        assert_eq!(with.per_op[0].gammas.len(), trace.operations[0].kernels.len());
    }

    #[test]
    fn empty_kernel_list_is_an_error() {
        let (reg, mut trace) = setup(8, 5);
        trace.operations[1].kernels.clear();
        let err = predict_iteration(
            &trace,
            &reg,
            reg.get("V100").unwrap(),
            &ModelStore::new(),
            &MetricsCache::new(),
            &lenient(),
        )
        .unwrap_err();
        assert!(err
            .to_string()
            .contains("operation 1: kernel-alike operation \"batch_norm\" has no kernels"));
    }

    #[test]
    fn price_changes_only_the_cost_metric() {
        let (reg, trace) = setup(8, 6);
        let mut cheap = reg.get("V100").unwrap().clone();
        let mut dear = cheap.clone();
        cheap.hourly_cost_usd = Some(1.0);
        dear.hourly_cost_usd = Some(2.0);
        let c = lenient();
        let a =
            predict_iteration(&trace, &reg, &cheap, &ModelStore::new(), &MetricsCache::new(), &c).unwrap();
        let b = predict_iteration(&trace, &reg, &dear, &ModelStore::new(), &MetricsCache::new(), &c).unwrap();
        assert_eq!(a.iteration_time_ms, b.iteration_time_ms);
        assert_eq!(
            a.cost_normalized_throughput.unwrap(),
            2.0 * b.cost_normalized_throughput.unwrap()
        );
        assert_eq!(cost_normalized(&a, &cheap).unwrap(), a.throughput);
    }

    #[test]
    fn cost_normalization_examples() {
        let reg = Registry::bundled();
        let mut r = PredictionReport {
            origin_gpu: "V100".into(),
            dest_gpu: "V100".into(),
            batch_size: 100,
            per_op: vec![],
            iteration_time_ms: 1000.0,
            throughput: 100.0,
            cost_normalized_throughput: None,
        };
        let mut two = reg.get("V100").unwrap().clone();
        two.hourly_cost_usd = Some(2.0);
        assert_eq!(cost_normalized(&r, &two).unwrap(), 50.0);
        r.dest_gpu = "P4000".into();
        assert!(matches!(
            cost_normalized(&r, reg.get("P4000").unwrap()),
            Err(PredictError::MissingCost { gpu }) if gpu == "P4000"
        ));
    }

    #[test]
    fn ranking_ties_break_by_name() {
        let (reg, trace) = setup(8, 7);
        let mut a = reg.get("V100").unwrap().clone();
        a.name = "b-gpu".into();
        a.hourly_cost_usd = Some(1.0);
        let mut b = a.clone();
        b.name = "a-gpu".into();
        let c = lenient();
        let ranked = rank_destinations(
            &trace,
            &reg,
            &[&a, &b],
            &ModelStore::new(),
            &MetricsCache::new(),
            &c,
            RankMetric::Throughput,
        )
        .unwrap();
        assert_eq!(ranked[0].dest_gpu, "a-gpu");
        b.hourly_cost_usd = Some(2.0);
        let ranked = rank_destinations(
            &trace,
            &reg,
            &[&b, &a],
            &ModelStore::new(),
            &MetricsCache::new(),
            &c,
            RankMetric::Cost,
        )
        .unwrap();
        assert_eq!(ranked[0].dest_gpu, "b-gpu");
        let single = rank_destinations(
            &trace,
            &reg,
            &[&a],
            &ModelStore::new(),
            &MetricsCache::new(),
            &c,
            RankMetric::Throughput,
        )
        .unwrap();
        assert_eq!(single.len(), 1);
        let p4000 = reg.get("P4000").unwrap();
        let err = rank_destinations(
            &trace,
            &reg,
            &[&a, p4000],
            &ModelStore::new(),
            &MetricsCache::new(),
            &c,
            RankMetric::Cost,
        )
        .unwrap_err();
        assert!(err.to_string().contains("P4000"));
    }

    #[test]
    fn extrapolation_examples() {
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0].iter().map(|&b| (b, 2.0 * b + 5.0)).collect();
        let e = extrapolate_batch(&pts, 100.0).unwrap();
        assert_eq!(e.predicted_time_ms, 205.0);
        assert_eq!(e.r_squared, 1.0);
        assert!(e.warnings.is_empty());
        assert!(extrapolate_batch(&pts[..1], 100.0).is_err());
        assert!(extrapolate_batch(&[(4.0, 1.0), (4.0, 2.0)], 100.0).is_err());
        let inside = extrapolate_batch(&pts, 10.0).unwrap();
        assert_eq!(inside.warnings.len(), 1);
        let bent = extrapolate_batch(&[(1.0, 1.0), (2.0, 8.0), (3.0, 2.0), (4.0, 9.0)], 8.0).unwrap();
        assert!(bent.r_squared < MIN_R_SQUARED && bent.warnings[0].contains("R^2"));
        assert!(extrapolate_batch(&[(10.0, 5.0), (20.0, 1.0)], 100.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn identity_and_additivity(seed in 0u64..1000, batch in 1u32..64, drop in 0usize..30) {
            let (reg, trace) = setup(batch, seed);
            let origin = reg.get("P4000").unwrap();
            let cache = MetricsCache::from_trace(&trace);
            let c = lenient();
            let full = predict_iteration(&trace, &reg, origin, &ModelStore::new(), &cache, &c).unwrap();
            prop_assert_eq!(full.iteration_time_ms, trace.total_time_ms());
            let i = drop % trace.operations.len();
            let mut less = trace.clone();
            less.operations.remove(i);
            let r = predict_iteration(&less, &reg, origin, &ModelStore::new(), &cache, &c).unwrap();
            prop_assert_eq!(full.iteration_time_ms - r.iteration_time_ms, full.per_op[i].predicted_time_ms);

            // on another GPU additivity holds up to summation rounding
            let dest = reg.get("2080Ti").unwrap();
            let full = predict_iteration(&trace, &reg, dest, &ModelStore::new(), &cache, &c).unwrap();
            let r = predict_iteration(&less, &reg, dest, &ModelStore::new(), &cache, &c).unwrap();
            let diff = full.iteration_time_ms - r.iteration_time_ms;
            prop_assert!((diff - full.per_op[i].predicted_time_ms).abs() <= 1e-12 * full.iteration_time_ms);
        }

        #[test]
        fn per_op_dominance_is_preserved(seed in 0u64..1000, batch in 1u32..64) {
            let (reg, trace) = setup(batch, seed);
            let c = lenient();
            let cache = MetricsCache::from_trace(&trace);
            let names: Vec<&str> = reg.names().collect();
            for a in &names {
                for b in &names {
                    let ra = predict_iteration(&trace, &reg, reg.get(a).unwrap(), &ModelStore::new(), &cache, &c).unwrap();
                    let rb = predict_iteration(&trace, &reg, reg.get(b).unwrap(), &ModelStore::new(), &cache, &c).unwrap();
                    if ra.per_op.iter().zip(&rb.per_op).all(|(x, y)| x.predicted_time_ms <= y.predicted_time_ms) {
                        prop_assert!(ra.iteration_time_ms <= rb.iteration_time_ms);
                    }
                }
            }
        }
    }
}
