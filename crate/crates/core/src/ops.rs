//! Kernel-varying operation kinds, their parameter sets, and the feature
//! vectors the learned predictors consume.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwspec::GpuSpec;

/// A value in an operation's parameter map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Flag(bool),
    Number(f64),
}

impl ParamValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ParamValue::Flag(b) => f64::from(u8::from(b)),
            ParamValue::Number(x) => x,
        }
    }
}

pub type OpParams = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Conv2d,
    Lstm,
    Bmm,
    Linear,
}

impl OperationKind {
    pub const ALL: [OperationKind; 4] = [
        OperationKind::Conv2d,
        OperationKind::Lstm,
        OperationKind::Bmm,
        OperationKind::Linear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OperationKind::Conv2d => "conv2d",
            OperationKind::Lstm => "lstm",
            OperationKind::Bmm => "bmm",
            OperationKind::Linear => "linear",
        }
    }

    /// Parameter names in canonical order, as they appear in trace files.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            OperationKind::Conv2d => &[
                "batch",
                "in_channels",
                "out_channels",
                "kernel_size",
                "padding",
                "stride",
                "image_size",
                "bias",
            ],
            OperationKind::Lstm => &[
                "batch",
                "input_size",
                "hidden_size",
                "seq_len",
                "num_layers",
                "bidirectional",
                "bias",
            ],
            OperationKind::Bmm => &["batch", "left", "middle", "right"],
            OperationKind::Linear => &["batch", "in_features", "out_features", "bias"],
        }
    }

    /// Operation features fed to the predictor; the convolution bias flag is
    /// recorded but not a feature.
    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            OperationKind::Conv2d => &self.param_names()[..7],
            _ => self.param_names(),
        }
    }

    pub fn feature_count(self) -> usize {
        self.feature_names().len() + GPU_FEATURE_NAMES.len()
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperationKind {
    type Err = OpsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| OpsError::UnknownOperation(s.to_string()))
    }
}

/// Target-GPU features appended to every sample.
pub const GPU_FEATURE_NAMES: [&str; 4] = [
    "mem_capacity_gib",
    "mem_bandwidth_gb_s",
    "sm_count",
    "peak_gflops",
];

pub fn gpu_features(gpu: &GpuSpec) -> [f64; 4] {
    [
        gpu.mem_capacity_gib,
        gpu.mem_bandwidth_gb_s,
        f64::from(gpu.sm_count),
        gpu.peak_gflops,
    ]
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpsError {
    #[error("unknown operation {0:?}; supported: conv2d, lstm, bmm, linear")]
    UnknownOperation(String),
    #[error("{op}: missing parameter {param:?}")]
    MissingParam { op: OperationKind, param: &'static str },
    #[error("{op}: parameter {param:?} must be {expected}, got {value}")]
    BadParam {
        op: OperationKind,
        param: &'static str,
        expected: &'static str,
        value: f64,
    },
    #[error("{0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpConfig {
    Conv2d {
        batch: u32,
        in_channels: u32,
        out_channels: u32,
        kernel_size: u32,
        padding: u32,
        stride: u32,
        image_size: u32,
        bias: bool,
    },
    Lstm {
        batch: u32,
        input_size: u32,
        hidden_size: u32,
        seq_len: u32,
        num_layers: u32,
        bidirectional: bool,
        bias: bool,
    },
    Bmm {
        batch: u32,
        left: u32,
        middle: u32,
        right: u32,
    },
    Linear {
        batch: u32,
        in_features: u32,
        out_features: u32,
        bias: bool,
    },
}

impl OpConfig {
    pub fn kind(&self) -> OperationKind {
        match self {
            OpConfig::Conv2d { .. } => OperationKind::Conv2d,
            OpConfig::Lstm { .. } => OperationKind::Lstm,
            OpConfig::Bmm { .. } => OperationKind::Bmm,
            OpConfig::Linear { .. } => OperationKind::Linear,
        }
    }

    /// Parameter values in `param_names` order, booleans as 0/1.
    pub fn param_values(&self) -> Vec<f64> {
        let b = |x: bool| f64::from(u8::from(x));
        let f = f64::from;
        match *self {
            OpConfig::Conv2d {
                batch,
                in_channels,
                out_channels,
                kernel_size,
                padding,
                stride,
                image_size,
                bias,
            } => vec![
                f(batch),
                f(in_channels),
                f(out_channels),
                f(kernel_size),
                f(padding),
                f(stride),
                f(image_size),
                b(bias),
            ],
            OpConfig::Lstm {
                batch,
                input_size,
                hidden_size,
                seq_len,
                num_layers,
                bidirectional,
                bias,
            } => vec![
                f(batch),
                f(input_size),
                f(hidden_size),
                f(seq_len),
                f(num_layers),
                b(bidirectional),
                b(bias),
            ],
            OpConfig::Bmm {
                batch,
                left,
                middle,
                right,
            } => vec![f(batch), f(left), f(middle), f(right)],
            OpConfig::Linear {
                batch,
                in_features,
                out_features,
                bias,
            } => vec![f(batch), f(in_features), f(out_features), b(bias)],
        }
    }

    /// Predictor input: operation features followed by the GPU features.
    pub fn features(&self, gpu: &GpuSpec) -> Vec<f64> {
        let mut v = self.param_values();
        v.truncate(self.kind().feature_names().len());
        v.extend(gpu_features(gpu));
        v
    }

    pub fn to_params(&self) -> OpParams {
        let kind = self.kind();
        let flags: &[&str] = match kind {
            OperationKind::Conv2d | OperationKind::Linear => &["bias"],
            OperationKind::Lstm => &["bidirectional", "bias"],
            OperationKind::Bmm => &[],
        };
        kind.param_names()
            .iter()
            .zip(self.param_values())
            .map(|(name, value)| {
                let v = if flags.contains(name) {
                    ParamValue::Flag(value != 0.0)
                } else {
                    ParamValue::Number(value)
                };
                (name.to_string(), v)
            })
            .collect()
    }

    pub fn from_params(kind: OperationKind, params: &OpParams) -> Result<Self, OpsError> {
        let get = |param: &'static str| {
            params
                .get(param)
                .map(|v| v.as_f64())
                .ok_or(OpsError::MissingParam { op: kind, param })
        };
        let count = |param: &'static str, min: u32| -> Result<u32, OpsError> {
            let value = get(param)?;
            if value.fract() != 0.0 || value < f64::from(min) || value > f64::from(u32::MAX) {
                return Err(OpsError::BadParam {
                    op: kind,
                    param,
                    expected: if min == 0 {
                        "a non-negative integer"
                    } else {
                        "a positive integer"
                    },
                    value,
                });
            }
            Ok(value as u32)
        };
        let flag = |param: &'static str| -> Result<bool, OpsError> {
            match get(param)? {
                0.0 => Ok(false),
                1.0 => Ok(true),
                value => Err(OpsError::BadParam {
                    op: kind,
                    param,
                    expected: "a boolean",
                    value,
                }),
            }
        };
        let config = match kind {
            OperationKind::Conv2d => OpConfig::Conv2d {
                batch: count("batch", 1)?,
                in_channels: count("in_channels", 1)?,
                out_channels: count("out_channels", 1)?,
                kernel_size: count("kernel_size", 1)?,
                padding: count("padding", 0)?,
                stride: count("stride", 1)?,
                image_size: count("image_size", 1)?,
                bias: flag("bias")?,
            },
            OperationKind::Lstm => OpConfig::Lstm {
                batch: count("batch", 1)?,
                input_size: count("input_size", 1)?,
                hidden_size: count("hidden_size", 1)?,
                seq_len: count("seq_len", 1)?,
                num_layers: count("num_layers", 1)?,
                bidirectional: flag("bidirectional")?,
                bias: flag("bias")?,
            },
            OperationKind::Bmm => OpConfig::Bmm {
                batch: count("batch", 1)?,
                left: count("left", 1)?,
                middle: count("middle", 1)?,
                right: count("right", 1)?,
            },
            OperationKind::Linear => OpConfig::Linear {
                batch: count("batch", 1)?,
                in_features: count("in_features", 1)?,
                out_features: count("out_features", 1)?,
                bias: flag("bias")?,
            },
        };
        config.check()?;
        Ok(config)
    }

    /// Rejects argument combinations the framework would refuse.
    pub fn check(&self) -> Result<(), OpsError> {
        if let OpConfig::Conv2d {
            kernel_size,
            image_size,
            ..
        } = *self
        {
            if kernel_size > image_size {
                return Err(OpsError::InvalidConfig(format!(
                    "conv2d kernel size {kernel_size} exceeds image size {image_size}"
                )));
            }
        }
        Ok(())
    }

    /// Convolution output side length, if this is a convolution.
    pub fn conv_output_size(&self) -> Option<u32> {
        match *self {
            OpConfig::Conv2d {
                kernel_size,
                padding,
                stride,
                image_size,
                ..
            } => Some((image_size + 2 * padding - kernel_size) / stride + 1),
            _ => None,
        }
    }

    /// Draws a configuration uniformly from the sampling ranges, without
    /// validity filtering.
    pub fn sample_raw<R: Rng + ?Sized>(kind: OperationKind, rng: &mut R) -> Self {
        match kind {
            OperationKind::Conv2d => OpConfig::Conv2d {
                batch: rng.random_range(1..=64),
                in_channels: rng.random_range(3..=2048),
                out_channels: rng.random_range(16..=2048),
                kernel_size: rng.random_range(1..=11),
                padding: rng.random_range(0..=3),
                stride: rng.random_range(1..=4),
                image_size: rng.random_range(1..=256),
                bias: rng.random_bool(0.5),
            },
            OperationKind::Lstm => OpConfig::Lstm {
                batch: rng.random_range(1..=128),
                input_size: rng.random_range(1..=1280),
                hidden_size: rng.random_range(1..=1280),
                seq_len: rng.random_range(1..=64),
                num_layers: rng.random_range(1..=6),
                bidirectional: rng.random_bool(0.5),
                bias: rng.random_bool(0.5),
            },
            OperationKind::Bmm => OpConfig::Bmm {
                batch: rng.random_range(1..=128),
                left: rng.random_range(1..=1024),
                middle: rng.random_range(1..=1024),
                right: rng.random_range(1..=1024),
            },
            OperationKind::Linear => OpConfig::Linear {
                batch: rng.random_range(1..=3500),
                in_features: rng.random_range(1..=32768),
                out_features: rng.random_range(1..=32768),
                bias: rng.random_bool(0.5),
            },
        }
    }

    /// Draws until a valid configuration comes up.
    pub fn sample<R: Rng + ?Sized>(kind: OperationKind, rng: &mut R) -> Self {
        loop {
            let c = Self::sample_raw(kind, rng);
            if c.check().is_ok() {
                return c;
            }
        }
    }
}
