//! GPU hardware specifications and the registry that holds them.
//!
//! Registry files are TOML documents with one `[[gpu]]` table per card. Units
//! are part of the field names (`mem_bandwidth_gb_s`, `clock_mhz`, ...). The
//! values are kept exactly as written so that a registry survives a
//! load/serialize cycle bit-for-bit; SI quantities are available through
//! accessor methods.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_REGISTRY: &str = include_str!("../data/gpus.toml");

/// Per-SM resource limits consumed by the occupancy calculator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyLimits {
    pub max_threads_per_sm: u32,
    pub max_blocks_per_sm: u32,
    pub max_registers_per_sm: u32,
    #[serde(rename = "max_shared_mem_per_sm_bytes")]
    pub max_shared_mem_per_sm: u32,
    #[serde(default = "default_warp_size")]
    pub warp_size: u32,
    pub max_warps_per_sm: u32,
    pub register_alloc_granularity: u32,
    #[serde(rename = "shared_mem_alloc_granularity_bytes")]
    pub shared_mem_alloc_granularity: u32,
}

fn default_warp_size() -> u32 {
    32
}

impl OccupancyLimits {
    fn validate(&self) -> Result<(), SpecViolation> {
        let counts = [
            ("max_threads_per_sm", self.max_threads_per_sm),
            ("max_blocks_per_sm", self.max_blocks_per_sm),
            ("max_registers_per_sm", self.max_registers_per_sm),
            ("max_shared_mem_per_sm_bytes", self.max_shared_mem_per_sm),
            ("warp_size", self.warp_size),
            ("max_warps_per_sm", self.max_warps_per_sm),
            ("register_alloc_granularity", self.register_alloc_granularity),
            (
                "shared_mem_alloc_granularity_bytes",
                self.shared_mem_alloc_granularity,
            ),
        ];
        for (field, value) in counts {
            if value == 0 {
                return Err(SpecViolation::new(
                    format!("occupancy.{field}"),
                    "must be at least 1",
                ));
            }
        }
        if u64::from(self.max_threads_per_sm) != u64::from(self.max_warps_per_sm) * u64::from(self.warp_size)
        {
            return Err(SpecViolation::new(
                "occupancy.max_threads_per_sm",
                format!(
                    "must equal max_warps_per_sm ({}) x warp_size ({})",
                    self.max_warps_per_sm, self.warp_size
                ),
            ));
        }
        Ok(())
    }
}

/// Hardware characteristics of one GPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuSpec {
    pub name: String,
    pub generation: String,
    pub mem_capacity_gib: f64,
    /// Achieved (measured) DRAM bandwidth, GB/s.
    pub mem_bandwidth_gb_s: f64,
    /// The SM clock used in clock ratios, MHz.
    pub clock_mhz: f64,
    pub sm_count: u32,
    /// Manufacturer-specified peak throughput, GFLOP/s.
    pub peak_gflops: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hourly_cost_usd: Option<f64>,
    pub occupancy: OccupancyLimits,
}

impl GpuSpec {
    pub fn bandwidth_bytes_per_s(&self) -> f64 {
        self.mem_bandwidth_gb_s * 1e9
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_mhz * 1e6
    }

    pub fn peak_flops_per_s(&self) -> f64 {
        self.peak_gflops * 1e9
    }

    pub fn mem_capacity_bytes(&self) -> f64 {
        self.mem_capacity_gib * (1u64 << 30) as f64
    }

    /// Arithmetic intensity (FLOP/byte) where the compute and bandwidth roofs meet.
    pub fn ridge_point(&self) -> f64 {
        self.peak_flops_per_s() / self.bandwidth_bytes_per_s()
    }

    /// Checks every field invariant, reporting the first offending field.
    pub fn validate(&self) -> Result<(), SpecViolation> {
        if self.name.trim().is_empty() {
            return Err(SpecViolation::new("name", "must not be empty"));
        }
        let positive = [
            ("mem_capacity_gib", self.mem_capacity_gib),
            ("mem_bandwidth_gb_s", self.mem_bandwidth_gb_s),
            ("clock_mhz", self.clock_mhz),
            ("peak_gflops", self.peak_gflops),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SpecViolation::new(
                    field,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if self.sm_count == 0 {
            return Err(SpecViolation::new("sm_count", "must be at least 1"));
        }
        if let Some(cost) = self.hourly_cost_usd {
            if !(cost.is_finite() && cost > 0.0) {
                return Err(SpecViolation::new(
                    "hourly_cost_usd",
                    format!("must be > 0 when present, got {cost}"),
                ));
            }
        }
        self.occupancy.validate()
    }
}

/// Ridge point `P / D` of a GPU in FLOP per byte.
pub fn ridge_point(spec: &GpuSpec) -> f64 {
    spec.ridge_point()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecViolation {
    pub field: String,
    pub reason: String,
}

impl SpecViolation {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("failed to read registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed registry: {0}")]
    Parse(String),
    #[error("GPU {gpu:?} has an invalid field {violation}")]
    Invalid { gpu: String, violation: SpecViolation },
    #[error("GPU name {0:?} appears more than once")]
    Duplicate(String),
    #[error("unknown GPU {name:?}; known GPUs: {}", known.join(", "))]
    UnknownGpu { name: String, known: Vec<String> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDocument {
    #[serde(default)]
    gpu: Vec<GpuSpec>,
}

/// Immutable name-indexed collection of GPU specifications.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Registry {
    gpus: BTreeMap<String, GpuSpec>,
}

impl Registry {
    /// The registry shipped with the crate, covering six Pascal/Volta/Turing cards.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_REGISTRY).expect("bundled registry is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let doc: RegistryDocument = toml::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        Self::from_specs(doc.gpu)
    }

    pub fn from_specs(specs: impl IntoIterator<Item = GpuSpec>) -> Result<Self, RegistryError> {
        let mut gpus = BTreeMap::new();
        for spec in specs {
            spec.validate().map_err(|violation| RegistryError::Invalid {
                gpu: spec.name.clone(),
                violation,
            })?;
            if gpus.contains_key(&spec.name) {
                return Err(RegistryError::Duplicate(spec.name));
            }
            gpus.insert(spec.name.clone(), spec);
        }
        Ok(Self { gpus })
    }

    pub fn to_toml_string(&self) -> String {
        let doc = RegistryDocument {
            gpu: self.gpus.values().cloned().collect(),
        };
        toml::to_string(&doc).expect("registry serializes")
    }

    pub fn get(&self, name: &str) -> Result<&GpuSpec, RegistryError> {
        self.gpus.get(name).ok_or_else(|| RegistryError::UnknownGpu {
            name: name.to_string(),
            known: self.names().map(str::to_string).collect(),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.gpus.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.gpus.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GpuSpec> {
        self.gpus.values()
    }

    pub fn len(&self) -> usize {
        self.gpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gpus.is_empty()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A minimal valid spec for tests that tweak one field at a time.
    pub fn spec(name: &str, peak_gflops: f64, bandwidth_gb_s: f64) -> GpuSpec {
        GpuSpec {
            name: name.to_string(),
            generation: "Test".to_string(),
            mem_capacity_gib: 16.0,
            mem_bandwidth_gb_s: bandwidth_gb_s,
            clock_mhz: 1500.0,
            sm_count: 80,
            peak_gflops,
            hourly_cost_usd: Some(1.0),
            occupancy: OccupancyLimits {
                max_threads_per_sm: 2048,
                max_blocks_per_sm: 32,
                max_registers_per_sm: 65536,
                max_shared_mem_per_sm: 98304,
                warp_size: 32,
                max_warps_per_sm: 64,
                register_alloc_granularity: 256,
                shared_mem_alloc_granularity: 256,
            },
        }
    }
}
