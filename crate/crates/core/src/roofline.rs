//! Roofline-based selection of the bandwidth-boundedness exponent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwspec::GpuSpec;

/// Measured counters for one kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelMetrics {
    #[serde(rename = "flops")]
    pub flop_count: f64,
    pub dram_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RooflineError {
    #[error("kernel moved no DRAM bytes; arithmetic intensity is undefined")]
    ZeroBytes,
    #[error("invalid metrics: {0}")]
    InvalidMetrics(String),
}

/// Which side of the ridge point a kernel fell on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaBranch {
    /// `x < R`: gamma falls linearly from 1 to 0.5.
    Linear,
    /// `x >= R`: gamma decays as `0.5 R / x`.
    Inverse,
}

impl GammaBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            GammaBranch::Linear => "linear",
            GammaBranch::Inverse => "inverse",
        }
    }
}

/// FLOPs per DRAM byte.
pub fn arithmetic_intensity(metrics: &KernelMetrics) -> Result<f64, RooflineError> {
    if !(metrics.flop_count.is_finite() && metrics.flop_count >= 0.0) {
        return Err(RooflineError::InvalidMetrics(format!(
            "flop count {} must be finite and non-negative",
            metrics.flop_count
        )));
    }
    if !metrics.dram_bytes.is_finite() || metrics.dram_bytes < 0.0 {
        return Err(RooflineError::InvalidMetrics(format!(
            "DRAM bytes {} must be finite and non-negative",
            metrics.dram_bytes
        )));
    }
    if metrics.dram_bytes == 0.0 {
        return Err(RooflineError::ZeroBytes);
    }
    Ok(metrics.flop_count / metrics.dram_bytes)
}

/// Gamma for intensity `x` against ridge point `ridge`, with the branch taken.
pub fn gamma_for_ridge(x: f64, ridge: f64) -> (f64, GammaBranch) {
    debug_assert!(x >= 0.0 && ridge > 0.0);
    if x < ridge {
        ((-0.5 / ridge) * x + 1.0, GammaBranch::Linear)
    } else {
        (0.5 * ridge / x, GammaBranch::Inverse)
    }
}

/// Gamma for a kernel of intensity `x` running on `dest`.
pub fn select_gamma(x: f64, dest: &GpuSpec) -> f64 {
    gamma_for_ridge(x, dest.ridge_point()).0
}
