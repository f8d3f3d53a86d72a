//! Closed-form stand-in for GPU measurements.
//!
//! Synthetic datasets and traces take their times from this model so that
//! tests have a known ground truth on every GPU. For a unit of work with `F`
//! floating point operations, `M` DRAM bytes and `L` kernel launches:
//!
//! ```text
//! t_ms = L * launch_overhead_ms
//!      + 1e3 * F / (peak_flops_per_s * compute_efficiency)
//!      + 1e3 * M / (bandwidth_bytes_per_s * memory_efficiency)
//! ```
//!
//! Operation work estimates (fp32, 4-byte elements):
//!
//! * conv2d, output side `o = (img + 2p - k) / s + 1`:
//!   forward `2 N Cin Cout k^2 o^2` FLOPs over input, weight and output
//!   tensors; backward (data and weight gradients) twice that. Bias adds one
//!   FLOP per output element in each direction.
//! * linear: forward `2 B in out`, backward twice that.
//! * bmm: forward `2 n l m r`, backward twice that.
//! * lstm: per layer and direction, each timestep does the gate GEMM
//!   `2 B (in + h) 4h` plus `10 B h` element-wise work in one launch; the
//!   backward pass doubles FLOPs, bytes and launches.
//!
//! * element-wise (kernel-alike) operations over `n` elements: fixed FLOPs
//!   and bytes per element for each pass, from [`ELEMENTWISE`]. The
//!   optimizer step has no backward pass.
//!
//! Forward and backward are separate kernel groups, so an operation's
//! combined time is the sum of the two.

use serde::{Deserialize, Serialize};

use crate::hwspec::GpuSpec;
use crate::ops::OpConfig;

const ELEM: f64 = 4.0;

/// FLOPs, DRAM bytes and kernel launches for one pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Work {
    pub flops: f64,
    pub bytes: f64,
    pub launches: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpWork {
    pub forward: Work,
    pub backward: Work,
}

/// Per-element cost of an element-wise operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementwiseCost {
    pub name: &'static str,
    pub forward_flops: f64,
    pub forward_bytes: f64,
    /// `None` when the operation has no backward pass.
    pub backward: Option<(f64, f64)>,
}

/// Element-wise operations known to the synthesizer, all parameterized by `elements`.
pub const ELEMENTWISE: [ElementwiseCost; 7] = [
    ElementwiseCost {
        name: "relu",
        forward_flops: 1.0,
        forward_bytes: 8.0,
        backward: Some((1.0, 12.0)),
    },
    ElementwiseCost {
        name: "add",
        forward_flops: 1.0,
        forward_bytes: 12.0,
        backward: Some((0.0, 8.0)),
    },
    ElementwiseCost {
        name: "batch_norm",
        forward_flops: 8.0,
        forward_bytes: 16.0,
        backward: Some((12.0, 24.0)),
    },
    ElementwiseCost {
        name: "max_pool2d",
        forward_flops: 4.0,
        forward_bytes: 20.0,
        backward: Some((1.0, 20.0)),
    },
    ElementwiseCost {
        name: "dropout",
        forward_flops: 2.0,
        forward_bytes: 12.0,
        backward: Some((1.0, 12.0)),
    },
    ElementwiseCost {
        name: "softmax",
        forward_flops: 5.0,
        forward_bytes: 8.0,
        backward: Some((4.0, 12.0)),
    },
    ElementwiseCost {
        name: "adam_step",
        forward_flops: 16.0,
        forward_bytes: 48.0,
        backward: None,
    },
];

pub fn elementwise_cost(name: &str) -> Option<&'static ElementwiseCost> {
    ELEMENTWISE.iter().find(|c| c.name == name)
}

impl ElementwiseCost {
    /// Forward work and optional backward work over `elements`, one launch each.
    pub fn work(&self, elements: f64) -> (Work, Option<Work>) {
        let pass = |f: f64, b: f64| Work {
            flops: f * elements,
            bytes: b * elements,
            launches: 1,
        };
        (
            pass(self.forward_flops, self.forward_bytes),
            self.backward.map(|(f, b)| pass(f, b)),
        )
    }
}

/// Anything that can supply a ground-truth operation time.
pub trait CostOracle: Sync {
    /// Forward plus backward time of `op` on `gpu`, ms.
    fn op_time_ms(&self, op: &OpConfig, gpu: &GpuSpec) -> f64;
}

impl<F> CostOracle for F
where
    F: Fn(&OpConfig, &GpuSpec) -> f64 + Sync,
{
    fn op_time_ms(&self, op: &OpConfig, gpu: &GpuSpec) -> f64 {
        self(op, gpu)
    }
}

impl CostOracle for AnalyticOracle {
    fn op_time_ms(&self, op: &OpConfig, gpu: &GpuSpec) -> f64 {
        AnalyticOracle::op_time_ms(self, op, gpu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticOracle {
    pub launch_overhead_ms: f64,
    pub compute_efficiency: f64,
    pub memory_efficiency: f64,
}

impl Default for AnalyticOracle {
    fn default() -> Self {
        Self {
            launch_overhead_ms: 0.008,
            compute_efficiency: 0.55,
            // registry bandwidths are already achieved figures
            memory_efficiency: 1.0,
        }
    }
}

impl AnalyticOracle {
    pub fn time_ms(&self, work: &Work, gpu: &GpuSpec) -> f64 {
        f64::from(work.launches) * self.launch_overhead_ms
            + 1e3 * work.flops / (gpu.peak_flops_per_s() * self.compute_efficiency)
            + 1e3 * work.bytes / (gpu.bandwidth_bytes_per_s() * self.memory_efficiency)
    }

    /// Forward and backward times, ms.
    pub fn op_times_ms(&self, op: &OpConfig, gpu: &GpuSpec) -> (f64, f64) {
        let w = op_work(op);
        (self.time_ms(&w.forward, gpu), self.time_ms(&w.backward, gpu))
    }

    /// Forward plus backward, ms.
    pub fn op_time_ms(&self, op: &OpConfig, gpu: &GpuSpec) -> f64 {
        let (f, b) = self.op_times_ms(op, gpu);
        f + b
    }
}

fn doubled(w: Work, extra_flops: f64, extra_launches: u32) -> Work {
    Work {
        flops: 2.0 * w.flops + extra_flops,
        bytes: 2.0 * w.bytes,
        launches: 2 * w.launches + extra_launches,
    }
}

pub fn op_work(op: &OpConfig) -> OpWork {
    match *op {
        OpConfig::Conv2d {
            batch,
            in_channels,
            out_channels,
            kernel_size,
            image_size,
            bias,
            ..
        } => {
            let o = f64::from(op.conv_output_size().expect("conv"));
            let (n, ci, co, k, img) = (
                f64::from(batch),
                f64::from(in_channels),
                f64::from(out_channels),
                f64::from(kernel_size),
                f64::from(image_size),
            );
            let outputs = n * co * o * o;
            let bias_flops = if bias { outputs } else { 0.0 };
            let conv = Work {
                flops: 2.0 * n * ci * co * k * k * o * o,
                bytes: ELEM * (n * ci * img * img + ci * co * k * k + outputs),
                launches: 1,
            };
            OpWork {
                forward: Work {
                    flops: conv.flops + bias_flops,
                    ..conv
                },
                backward: doubled(conv, bias_flops, u32::from(bias)),
            }
        }
        OpConfig::Linear {
            batch,
            in_features,
            out_features,
            bias,
        } => {
            let (b, i, o) = (f64::from(batch), f64::from(in_features), f64::from(out_features));
            let bias_flops = if bias { b * o } else { 0.0 };
            let gemm = Work {
                flops: 2.0 * b * i * o,
                bytes: ELEM * (b * i + i * o + b * o),
                launches: 1,
            };
            OpWork {
                forward: Work {
                    flops: gemm.flops + bias_flops,
                    ..gemm
                },
                backward: doubled(gemm, bias_flops, u32::from(bias)),
            }
        }
        OpConfig::Bmm {
            batch,
            left,
            middle,
            right,
        } => {
            let (n, l, m, r) = (
                f64::from(batch),
                f64::from(left),
                f64::from(middle),
                f64::from(right),
            );
            let fwd = Work {
                flops: 2.0 * n * l * m * r,
                bytes: ELEM * n * (l * m + m * r + l * r),
                launches: 1,
            };
            OpWork {
                forward: fwd,
                backward: doubled(fwd, 0.0, 0),
            }
        }
        OpConfig::Lstm {
            batch,
            input_size,
            hidden_size,
            seq_len,
            num_layers,
            bidirectional,
            bias,
        } => {
            let dirs = if bidirectional { 2 } else { 1 };
            let (b, h, t) = (f64::from(batch), f64::from(hidden_size), f64::from(seq_len));
            let mut fwd = Work::default();
            for layer in 0..num_layers {
                let input = if layer == 0 {
                    f64::from(input_size)
                } else {
                    h * f64::from(dirs)
                };
                for _ in 0..dirs {
                    let gate_flops = 2.0 * b * (input + h) * 4.0 * h + 10.0 * b * h;
                    let bias_flops = if bias { 8.0 * b * h } else { 0.0 };
                    fwd.flops += t * (gate_flops + bias_flops);
                    fwd.bytes += ELEM * (4.0 * h * (input + h) + t * b * (input + 6.0 * h));
                    fwd.launches += seq_len;
                }
            }
            OpWork {
                forward: fwd,
                backward: doubled(fwd, 0.0, 0),
            }
        }
    }
}
