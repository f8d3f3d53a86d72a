//! Iteration traces: the per-operation record of one training step on the
//! origin GPU, plus the kernel-metrics cache and a trace synthesizer.
//!
//! Trace files are JSON. Times are milliseconds, in files and in memory.
//! Which kernels deserve metrics collection is decided by a percentile cut
//! over kernel times (not operation times).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwspec::{GpuSpec, Registry};
use crate::occupancy::KernelLaunchConfig;
use crate::ops::{OpConfig, OpParams, OperationKind, ParamValue};
use crate::oracle::{elementwise_cost, op_work, AnalyticOracle, Work};
use crate::roofline::KernelMetrics;
use crate::wavescale::KernelRecord;

pub const SCHEMA_VERSION: u32 = 1;
/// Allowed excess of summed kernel time over an operation's wall time.
pub const DEFAULT_SLACK: f64 = 0.10;
pub const DEFAULT_PERCENTILE: f64 = 99.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OperationRecord {
    pub op_name: String,
    pub op_params: OpParams,
    pub forward_time_ms: f64,
    pub backward_time_ms: Option<f64>,
    /// Kernels of the forward and backward passes, in launch order.
    pub kernels: Vec<KernelRecord>,
}

impl OperationRecord {
    /// Forward plus backward time.
    pub fn total_time_ms(&self) -> f64 {
        self.forward_time_ms + self.backward_time_ms.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub schema_version: u32,
    pub origin_gpu: String,
    pub model_name: String,
    pub batch_size: u32,
    pub operations: Vec<OperationRecord>,
}

impl IterationTrace {
    /// Sum of operation times in trace order.
    pub fn total_time_ms(&self) -> f64 {
        self.operations.iter().map(OperationRecord::total_time_ms).sum()
    }

    pub fn kernels(&self) -> impl Iterator<Item = &KernelRecord> {
        self.operations.iter().flat_map(|op| op.kernels.iter())
    }
}

mod wire {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Trace {
        pub schema_version: u32,
        pub origin_gpu: String,
        pub model_name: String,
        pub batch_size: u32,
        pub operations: Vec<Operation>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Operation {
        pub op_name: String,
        #[serde(default)]
        pub op_params: OpParams,
        pub forward_time_ms: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub backward_time_ms: Option<f64>,
        #[serde(default)]
        pub kernels: Vec<Kernel>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Kernel {
        pub name: String,
        pub block_count: u64,
        pub threads_per_block: u32,
        #[serde(default)]
        pub registers_per_thread: u32,
        #[serde(default)]
        pub shared_mem_bytes: u32,
        pub time_ms: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub metrics: Option<KernelMetrics>,
    }

    impl From<Kernel> for KernelRecord {
        fn from(k: Kernel) -> Self {
            KernelRecord {
                name: k.name,
                launch: KernelLaunchConfig {
                    block_count: k.block_count,
                    threads_per_block: k.threads_per_block,
                    registers_per_thread: k.registers_per_thread,
                    shared_mem_per_block: k.shared_mem_bytes,
                },
                measured_time_ms: k.time_ms,
                metrics: k.metrics,
            }
        }
    }

    impl From<&KernelRecord> for Kernel {
        fn from(k: &KernelRecord) -> Self {
            Kernel {
                name: k.name.clone(),
                block_count: k.launch.block_count,
                threads_per_block: k.launch.threads_per_block,
                registers_per_thread: k.launch.registers_per_thread,
                shared_mem_bytes: k.launch.shared_mem_per_block,
                time_ms: k.measured_time_ms,
                metrics: k.metrics,
            }
        }
    }
}

/// One broken trace invariant. `operation` and `kernel` are 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownGpu {
        name: String,
        known: Vec<String>,
    },
    BatchSize,
    NoOperations,
    ForwardTime {
        operation: usize,
        value: f64,
    },
    BackwardTime {
        operation: usize,
        value: f64,
    },
    KernelTime {
        operation: usize,
        kernel: usize,
        value: f64,
    },
    KernelLaunch {
        operation: usize,
        kernel: usize,
        reason: String,
    },
    KernelMetrics {
        operation: usize,
        kernel: usize,
        reason: String,
    },
    KernelSum {
        operation: usize,
        kernels_ms: f64,
        wall_ms: f64,
        slack: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownGpu { name, known } => {
                write!(f, "origin GPU {name:?} is not in the registry (known: {})", known.join(", "))
            }
            Violation::BatchSize => write!(f, "batch_size must be at least 1"),
            Violation::NoOperations => write!(f, "trace has no operations"),
            Violation::ForwardTime { operation, value } => {
                write!(f, "operation {operation}: forward_time_ms must be > 0, got {value}")
            }
            Violation::BackwardTime { operation, value } => {
                write!(f, "operation {operation}: backward_time_ms must be >= 0, got {value}")
            }
            Violation::KernelTime { operation, kernel, value } => write!(
                f,
                "operation {operation}, kernel {kernel}: time_ms must be finite and >= 0, got {value}"
            ),
            Violation::KernelLaunch { operation, kernel, reason } => {
                write!(f, "operation {operation}, kernel {kernel}: {reason}")
            }
            Violation::KernelMetrics { operation, kernel, reason } => {
                write!(f, "operation {operation}, kernel {kernel}: metrics {reason}")
            }
            Violation::KernelSum { operation, kernels_ms, wall_ms, slack } => write!(
                f,
                "operation {operation}: kernels sum to {kernels_ms} ms, more than wall time {wall_ms} ms plus {}% slack",
                slack * 100.0
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace schema: {0}")]
    Schema(String),
    #[error("trace schema version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid trace:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    pub slack: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { slack: DEFAULT_SLACK }
    }
}

pub fn parse_trace(text: &str, registry: &Registry) -> Result<IterationTrace, TraceError> {
    parse_trace_with(text, registry, ParseOptions::default())
}

/// Parses and validates a trace, reporting every violation found.
pub fn parse_trace_with(
    text: &str,
    registry: &Registry,
    options: ParseOptions,
) -> Result<IterationTrace, TraceError> {
    #[derive(Deserialize)]
    struct Version {
        schema_version: u32,
    }
    let version: Version = serde_json::from_str(text).map_err(|e| TraceError::Schema(e.to_string()))?;
    if version.schema_version != SCHEMA_VERSION {
        return Err(TraceError::Version {
            found: version.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let doc: wire::Trace = serde_json::from_str(text).map_err(|e| TraceError::Schema(e.to_string()))?;
    let trace = IterationTrace {
        schema_version: doc.schema_version,
        origin_gpu: doc.origin_gpu,
        model_name: doc.model_name,
        batch_size: doc.batch_size,
        operations: doc
            .operations
            .into_iter()
            .map(|op| OperationRecord {
                op_name: op.op_name,
                op_params: op.op_params,
                forward_time_ms: op.forward_time_ms,
                backward_time_ms: op.backward_time_ms,
                kernels: op.kernels.into_iter().map(KernelRecord::from).collect(),
            })
            .collect(),
    };
    let violations = validate(&trace, registry, options.slack);
    if violations.is_empty() {
        Ok(trace)
    } else {
        Err(TraceError::Invalid(violations))
    }
}

/// All invariant violations in `trace`; empty when valid.
pub fn validate(trace: &IterationTrace, registry: &Registry, slack: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    if !registry.contains(&trace.origin_gpu) {
        out.push(Violation::UnknownGpu {
            name: trace.origin_gpu.clone(),
            known: registry.names().map(str::to_string).collect(),
        });
    }
    if trace.batch_size == 0 {
        out.push(Violation::BatchSize);
    }
    if trace.operations.is_empty() {
        out.push(Violation::NoOperations);
    }
    for (i, op) in trace.operations.iter().enumerate() {
        if !(op.forward_time_ms.is_finite() && op.forward_time_ms > 0.0) {
            out.push(Violation::ForwardTime {
                operation: i,
                value: op.forward_time_ms,
            });
        }
        if let Some(b) = op.backward_time_ms {
            if !(b.is_finite() && b >= 0.0) {
                out.push(Violation::BackwardTime {
                    operation: i,
                    value: b,
                });
            }
        }
        let mut sum = 0.0;
        for (k, kernel) in op.kernels.iter().enumerate() {
            let t = kernel.measured_time_ms;
            if !(t.is_finite() && t >= 0.0) {
                out.push(Violation::KernelTime {
                    operation: i,
                    kernel: k,
                    value: t,
                });
            }
            if let Err(e) = kernel.launch.validate() {
                out.push(Violation::KernelLaunch {
                    operation: i,
                    kernel: k,
                    reason: e.to_string(),
                });
            }
            if let Some(m) = kernel.metrics {
                let ok = |v: f64| v.is_finite() && v >= 0.0;
                if !(ok(m.flop_count) && ok(m.dram_bytes)) {
                    out.push(Violation::KernelMetrics {
                        operation: i,
                        kernel: k,
                        reason: "must be finite and non-negative".into(),
                    });
                }
            }
            sum += t;
        }
        let wall = op.total_time_ms();
        if sum > wall * (1.0 + slack) {
            out.push(Violation::KernelSum {
                operation: i,
                kernels_ms: sum,
                wall_ms: wall,
                slack,
            });
        }
    }
    out
}

/// Pretty-printed JSON; `parse_trace` of the result reproduces `trace` exactly.
pub fn serialize_trace(trace: &IterationTrace) -> String {
    let doc = wire::Trace {
        schema_version: trace.schema_version,
        origin_gpu: trace.origin_gpu.clone(),
        model_name: trace.model_name.clone(),
        batch_size: trace.batch_size,
        operations: trace
            .operations
            .iter()
            .map(|op| wire::Operation {
                op_name: op.op_name.clone(),
                op_params: op.op_params.clone(),
                forward_time_ms: op.forward_time_ms,
                backward_time_ms: op.backward_time_ms,
                kernels: op.kernels.iter().map(wire::Kernel::from).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("trace serializes")
}

/// Cache key: kernel name and launch shape.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelKey {
    pub name: String,
    pub block_count: u64,
    pub threads_per_block: u32,
}

impl KernelKey {
    pub fn of(kernel: &KernelRecord) -> Self {
        Self {
            name: kernel.name.clone(),
            block_count: kernel.launch.block_count,
            threads_per_block: kernel.launch.threads_per_block,
        }
    }
}

impl fmt::Display for KernelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} <<<{}, {}>>>",
            self.name, self.block_count, self.threads_per_block
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheEntry {
    kernel_key: KernelKey,
    metrics: KernelMetrics,
}

/// Measured kernel metrics keyed by [`KernelKey`]. Ordered storage makes
/// iteration and serialization independent of insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsCache {
    entries: BTreeMap<KernelKey, KernelMetrics>,
}

impl MetricsCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Metrics attached to the trace's own kernels. For repeated keys the
    /// last occurrence wins.
    pub fn from_trace(trace: &IterationTrace) -> Self {
        let mut cache = Self::new();
        for k in trace.kernels() {
            if let Some(m) = k.metrics {
                cache.insert(KernelKey::of(k), m);
            }
        }
        cache
    }

    /// Sidecar entries overlaid by trace-attached metrics.
    pub fn merged(sidecar: &MetricsCache, trace: &IterationTrace) -> Self {
        let mut cache = sidecar.clone();
        cache.merge(MetricsCache::from_trace(trace));
        cache
    }

    pub fn insert(&mut self, key: KernelKey, metrics: KernelMetrics) -> Option<KernelMetrics> {
        self.entries.insert(key, metrics)
    }

    /// Adds `other`'s entries, replacing existing ones on conflict.
    pub fn merge(&mut self, other: MetricsCache) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, key: &KernelKey) -> Option<&KernelMetrics> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&KernelKey, &KernelMetrics)> {
        self.entries.iter()
    }

    /// Parses a sidecar file: a JSON list of `{kernel_key, metrics}` records.
    pub fn from_sidecar_json(text: &str) -> Result<Self, TraceError> {
        let list: Vec<CacheEntry> =
            serde_json::from_str(text).map_err(|e| TraceError::Schema(format!("cache: {e}")))?;
        Ok(Self {
            entries: list.into_iter().map(|e| (e.kernel_key, e.metrics)).collect(),
        })
    }

    pub fn to_sidecar_json(&self) -> String {
        let list: Vec<CacheEntry> = self
            .entries
            .iter()
            .map(|(k, m)| CacheEntry {
                kernel_key: k.clone(),
                metrics: *m,
            })
            .collect();
        serde_json::to_string_pretty(&list).expect("cache serializes")
    }
}

/// Exact-key lookup; `None` means the caller falls back to gamma = 1.
pub fn cache_lookup<'a>(cache: &'a MetricsCache, kernel: &KernelRecord) -> Option<&'a KernelMetrics> {
    cache.get(&KernelKey::of(kernel))
}

/// The time at or above which a kernel counts as significant.
///
/// With `n` times sorted ascending the threshold is the element at index
/// `floor(p * n / 100)`, clamped to the last element. At 99.5 over 1000
/// distinct times this keeps the top five.
pub fn percentile_threshold(times: &[f64], percentile: f64) -> Option<f64> {
    if times.is_empty() {
        return None;
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = if percentile.is_nan() {
        0.0
    } else {
        percentile.clamp(0.0, 100.0)
    };
    let k = ((p * sorted.len() as f64 / 100.0).floor() as usize).min(sorted.len() - 1);
    Some(sorted[k])
}

/// Keys of kernels whose time is at or above the `percentile`-th percentile
/// of all kernel times in the trace: the plan for metrics collection.
pub fn significant_kernels(trace: &IterationTrace, percentile: f64) -> BTreeSet<KernelKey> {
    let times: Vec<f64> = trace.kernels().map(|k| k.measured_time_ms).collect();
    let Some(threshold) = percentile_threshold(&times, percentile) else {
        return BTreeSet::new();
    };
    trace
        .kernels()
        .filter(|k| k.measured_time_ms >= threshold)
        .map(KernelKey::of)
        .collect()
}

/// A workload to synthesize: operations with parameters, optional launch shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceTemplate {
    pub model_name: String,
    pub batch_size: u32,
    pub operations: Vec<TemplateOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateOp {
    pub op_name: String,
    pub op_params: OpParams,
    #[serde(default)]
    pub threads_per_block: Option<u32>,
    #[serde(default)]
    pub registers_per_thread: Option<u32>,
    #[serde(default)]
    pub shared_mem_bytes: Option<u32>,
}

impl TemplateOp {
    pub fn new(op_name: &str, params: &[(&str, f64)]) -> Self {
        Self {
            op_name: op_name.to_string(),
            op_params: params
                .iter()
                .map(|(k, v)| (k.to_string(), ParamValue::Number(*v)))
                .collect(),
            threads_per_block: None,
            registers_per_thread: None,
            shared_mem_bytes: None,
        }
    }

    pub fn flag(mut self, name: &str, value: bool) -> Self {
        self.op_params.insert(name.to_string(), ParamValue::Flag(value));
        self
    }

    /// Forward work and optional backward work.
    fn work(&self) -> Result<(Work, Option<Work>), TraceError> {
        if let Ok(kind) = self.op_name.parse::<OperationKind>() {
            let config = OpConfig::from_params(kind, &self.op_params)
                .map_err(|e| TraceError::Template(e.to_string()))?;
            config.check().map_err(|e| TraceError::Template(e.to_string()))?;
            let w = op_work(&config);
            return Ok((w.forward, Some(w.backward)));
        }
        let cost = elementwise_cost(&self.op_name)
            .ok_or_else(|| TraceError::Template(format!("unknown operation {:?}", self.op_name)))?;
        let elements = self
            .op_params
            .get("elements")
            .map(|v| v.as_f64())
            .filter(|n| n.is_finite() && *n >= 1.0)
            .ok_or_else(|| {
                TraceError::Template(format!(
                    "{}: needs a positive \"elements\" parameter",
                    self.op_name
                ))
            })?;
        Ok(cost.work(elements))
    }

    fn is_kernel_varying(&self) -> bool {
        self.op_name.parse::<OperationKind>().is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Relative half-width of the uniform noise applied to each kernel time.
    pub jitter: f64,
    /// Attach each kernel's FLOP and byte counts as metrics.
    pub attach_metrics: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            jitter: 0.02,
            attach_metrics: true,
        }
    }
}

/// Kernel times are rounded to multiples of this many ms, so that sums of
/// kernel times are exact in binary floating point.
pub const TIME_QUANTUM_MS: f64 = 1.0 / 1_048_576.0;

fn quantize(t: f64) -> f64 {
    ((t / TIME_QUANTUM_MS).round() * TIME_QUANTUM_MS).max(TIME_QUANTUM_MS)
}

/// Builds a trace for `template` on `origin` with kernel times from `oracle`.
///
/// Each pass becomes one kernel (an LSTM pass keeps its per-timestep launch
/// overhead inside that kernel's time). Operation times equal the exact sums
/// of their kernels. The same inputs always give the same trace.
pub fn synthesize_trace(
    template: &TraceTemplate,
    origin: &GpuSpec,
    seed: u64,
    oracle: &AnalyticOracle,
    options: SynthOptions,
) -> Result<IterationTrace, TraceError> {
    if template.operations.is_empty() {
        return Err(TraceError::Template("template has no operations".into()));
    }
    if template.batch_size == 0 {
        return Err(TraceError::Template("batch_size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut operations = Vec::with_capacity(template.operations.len());
    for op in &template.operations {
        let (fwd, bwd) = op.work()?;
        let varying = op.is_kernel_varying();
        let mut make = |pass: &str, work: &Work| {
            let noise = if options.jitter > 0.0 {
                1.0 + rng.random_range(-options.jitter..=options.jitter)
            } else {
                1.0
            };
            let blocks = (work.bytes / (4.0 * 1024.0))
                .ceil()
                .clamp(1.0, f64::from(i32::MAX)) as u64;
            KernelRecord {
                name: format!("{}_{pass}", op.op_name),
                launch: KernelLaunchConfig {
                    block_count: blocks,
                    threads_per_block: op.threads_per_block.unwrap_or(256),
                    registers_per_thread: op.registers_per_thread.unwrap_or(if varying { 64 } else { 32 }),
                    shared_mem_per_block: op.shared_mem_bytes.unwrap_or(if varying { 16 * 1024 } else { 0 }),
                },
                measured_time_ms: quantize(oracle.time_ms(work, origin) * noise),
                metrics: options.attach_metrics.then_some(KernelMetrics {
                    flop_count: work.flops,
                    dram_bytes: work.bytes,
                }),
            }
        };
        let f = make("forward", &fwd);
        let b = bwd.map(|w| make("backward", &w));
        operations.push(OperationRecord {
            op_name: op.op_name.clone(),
            op_params: op.op_params.clone(),
            forward_time_ms: f.measured_time_ms,
            backward_time_ms: b.as_ref().map(|k| k.measured_time_ms),
            kernels: std::iter::once(f).chain(b).collect(),
        });
    }
    Ok(IterationTrace {
        schema_version: SCHEMA_VERSION,
        origin_gpu: origin.name.clone(),
        model_name: template.model_name.clone(),
        batch_size: template.batch_size,
        operations,
    })
}

/// A small residual CNN: stem, three residual stages, classifier, optimizer step.
pub fn resnet_like(batch: u32) -> TraceTemplate {
    let n = f64::from(batch);
    let mut ops = vec![
        TemplateOp::new(
            "conv2d",
            &[
                ("batch", n),
                ("in_channels", 3.0),
                ("out_channels", 64.0),
                ("kernel_size", 7.0),
                ("padding", 3.0),
                ("stride", 2.0),
                ("image_size", 224.0),
            ],
        )
        .flag("bias", false),
        TemplateOp::new("batch_norm", &[("elements", n * 64.0 * 112.0 * 112.0)]),
        TemplateOp::new("relu", &[("elements", n * 64.0 * 112.0 * 112.0)]),
        TemplateOp::new("max_pool2d", &[("elements", n * 64.0 * 56.0 * 56.0)]),
    ];
    for (channels, size) in [(64.0, 56.0), (128.0, 28.0), (256.0, 14.0)] {
        let elements = n * channels * size * size;
        for _ in 0..2 {
            ops.push(
                TemplateOp::new(
                    "conv2d",
                    &[
                        ("batch", n),
                        ("in_channels", channels),
                        ("out_channels", channels),
                        ("kernel_size", 3.0),
                        ("padding", 1.0),
                        ("stride", 1.0),
                        ("image_size", size),
                    ],
                )
                .flag("bias", false),
            );
            ops.push(TemplateOp::new("batch_norm", &[("elements", elements)]));
            ops.push(TemplateOp::new("relu", &[("elements", elements)]));
        }
        ops.push(TemplateOp::new("add", &[("elements", elements)]));
    }
    ops.push(
        TemplateOp::new(
            "linear",
            &[("batch", n), ("in_features", 256.0), ("out_features", 1000.0)],
        )
        .flag("bias", true),
    );
    ops.push(TemplateOp::new("softmax", &[("elements", n * 1000.0)]));
    ops.push(TemplateOp::new("adam_step", &[("elements", 2.9e6)]));
    TraceTemplate {
        model_name: "resnet-like".into(),
        batch_size: batch,
        operations: ops,
    }
}

/// A two-layer recurrent language model with an attention-style batched matmul.
pub fn lstm_like(batch: u32) -> TraceTemplate {
    let n = f64::from(batch);
    let ops = vec![
        TemplateOp::new("dropout", &[("elements", n * 35.0 * 650.0)]),
        TemplateOp::new(
            "lstm",
            &[
                ("batch", n),
                ("input_size", 650.0),
                ("hidden_size", 650.0),
                ("seq_len", 35.0),
                ("num_layers", 2.0),
            ],
        )
        .flag("bidirectional", false)
        .flag("bias", true),
        TemplateOp::new(
            "bmm",
            &[("batch", n), ("left", 35.0), ("middle", 650.0), ("right", 35.0)],
        ),
        TemplateOp::new("softmax", &[("elements", n * 35.0 * 35.0)]),
        TemplateOp::new(
            "linear",
            &[
                ("batch", n * 35.0),
                ("in_features", 650.0),
                ("out_features", 10000.0),
            ],
        )
        .flag("bias", true),
        TemplateOp::new("adam_step", &[("elements", 1.3e7)]),
    ];
    TraceTemplate {
        model_name: "lstm-like".into(),
        batch_size: batch,
        operations: ops,
    }
}
