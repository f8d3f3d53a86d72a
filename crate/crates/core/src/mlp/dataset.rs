use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MlpError;
use crate::hwspec::GpuSpec;
use crate::ops::{gpu_features, OpConfig, OperationKind, GPU_FEATURE_NAMES};
use crate::oracle::CostOracle;

const TARGET_COLUMN: &str = "time_ms";

/// One measured (or oracle) execution of an operation on a GPU.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Operation features in `OperationKind::feature_names` order.
    pub op_params: Vec<f64>,
    pub gpu_features: [f64; 4],
    /// Forward plus backward time, ms.
    pub target_time_ms: f64,
}

impl Sample {
    pub fn features(&self) -> Vec<f64> {
        let mut v = self.op_params.clone();
        v.extend_from_slice(&self.gpu_features);
        v
    }

    /// Bit pattern of the operation features; equal keys mean the same configuration.
    pub fn configuration_key(&self) -> Vec<u64> {
        self.op_params.iter().map(|v| v.to_bits()).collect()
    }
}

/// Which GPUs measure each sampled configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coverage {
    /// Every configuration on every GPU: `count * gpus.len()` samples.
    #[default]
    EveryGpu,
    /// Configuration `i` on `gpus[i % gpus.len()]` only: `count` samples.
    /// Spreads a small sample budget over more distinct configurations.
    RoundRobin,
}

/// Samples `count` configurations with `seed` and measures them on `gpus`
/// according to `coverage`. Samples are configuration-major; the
/// configurations depend only on `operation`, `count` and `seed`.
pub fn generate_dataset(
    operation: OperationKind,
    count: usize,
    seed: u64,
    gpus: &[GpuSpec],
    coverage: Coverage,
    oracle: &dyn CostOracle,
) -> Result<Vec<Sample>, MlpError> {
    if count == 0 {
        return Err(MlpError::InvalidConfig("count must be at least 1".into()));
    }
    if gpus.is_empty() {
        return Err(MlpError::InvalidConfig("at least one GPU is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_config = match coverage {
        Coverage::EveryGpu => gpus.len(),
        Coverage::RoundRobin => 1,
    };
    let mut samples = Vec::with_capacity(count * per_config);
    for i in 0..count {
        let config = OpConfig::sample(operation, &mut rng);
        let mut params = config.param_values();
        params.truncate(operation.feature_names().len());
        let chosen = match coverage {
            Coverage::EveryGpu => gpus,
            Coverage::RoundRobin => std::slice::from_ref(&gpus[i % gpus.len()]),
        };
        for gpu in chosen {
            samples.push(Sample {
                op_params: params.clone(),
                gpu_features: gpu_features(gpu),
                target_time_ms: oracle.op_time_ms(&config, gpu),
            });
        }
    }
    Ok(samples)
}

fn header(operation: OperationKind) -> Vec<&'static str> {
    operation
        .feature_names()
        .iter()
        .copied()
        .chain(GPU_FEATURE_NAMES)
        .chain([TARGET_COLUMN])
        .collect()
}

/// Writes a dataset as comma-separated lines under a header of feature names.
pub fn write_dataset<W: Write>(
    mut out: W,
    operation: OperationKind,
    samples: &[Sample],
) -> Result<(), MlpError> {
    writeln!(out, "{}", header(operation).join(","))?;
    let mut line = String::new();
    for s in samples {
        line.clear();
        for v in s.op_params.iter().chain(&s.gpu_features) {
            write!(line, "{v},").unwrap();
        }
        write!(line, "{}", s.target_time_ms).unwrap();
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a dataset, identifying the operation from the header row.
pub fn read_dataset<R: Read>(input: R) -> Result<(OperationKind, Vec<Sample>), MlpError> {
    let mut lines = BufReader::new(input).lines();
    let head = lines
        .next()
        .ok_or_else(|| MlpError::Dataset("missing header row".into()))??;
    let columns: Vec<&str> = head.trim().split(',').map(str::trim).collect();
    let operation = OperationKind::ALL
        .into_iter()
        .find(|k| header(*k) == columns)
        .ok_or_else(|| MlpError::Dataset(format!("header {head:?} matches no operation")))?;
    let n_op = operation.feature_names().len();

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| MlpError::Dataset(format!("line {}: {e}", i + 2)))?;
        if values.len() != columns.len() {
            return Err(MlpError::Dataset(format!(
                "line {}: expected {} fields, found {}",
                i + 2,
                columns.len(),
                values.len()
            )));
        }
        samples.push(Sample {
            op_params: values[..n_op].to_vec(),
            gpu_features: values[n_op..n_op + 4].try_into().unwrap(),
            target_time_ms: values[n_op + 4],
        });
    }
    Ok((operation, samples))
}
