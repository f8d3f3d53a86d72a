//! Predicting DNN training iteration time on a GPU you do not have.
//!
//! A trace of one training iteration measured on an origin GPU is turned
//! into a prediction for a destination GPU. Operations whose kernels are the
//! same on every GPU are scaled analytically ([`wavescale`]), using occupancy
//! ([`occupancy`]) and roofline ([`roofline`]) models; operations whose
//! kernels differ between GPUs use learned predictors ([`mlp`]).
//! [`predict`] combines the two into per-iteration reports.

pub mod hwspec;
pub mod mlp;
pub mod occupancy;
pub mod ops;
pub mod oracle;
pub mod predict;
pub mod roofline;
pub mod trace;
pub mod wavescale;

pub use hwspec::{GpuSpec, OccupancyLimits, Registry, RegistryError};
pub use mlp::{MlpError, MlpModel, Sample, TrainConfig};
pub use occupancy::{KernelLaunchConfig, Limiter, Occupancy, OccupancyError};
pub use ops::{OpConfig, OpParams, OperationKind, ParamValue};
pub use oracle::{AnalyticOracle, CostOracle};
pub use predict::{
    ModelStore, OpPrediction, PredictError, PredictionPath, PredictionReport, PredictorConfig,
};
pub use roofline::{GammaBranch, KernelMetrics};
pub use trace::{IterationTrace, KernelKey, MetricsCache, OperationRecord, TraceError};
pub use wavescale::{Equation, KernelRecord, WaveScaleError};
