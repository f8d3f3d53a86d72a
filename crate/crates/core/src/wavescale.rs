//! Wave scaling: moving a measured kernel time from one GPU to another.
//!
//! A kernel with `B` thread blocks runs as `ceil(B / W)` waves, where `W` is the
//! wave size on that GPU. Each wave's time is scaled by the bandwidth ratio
//! (weighted by `gamma`) and the clock ratio (weighted by `1 - gamma`). The
//! exact form keeps the wave ceilings; the simplified form replaces them with
//! `B / W`, which is what production predictions use.
//!
//! Times are unit-agnostic: the result is in the unit of the measured time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwspec::GpuSpec;
use crate::occupancy::{wave_size, KernelLaunchConfig, OccupancyError};
use crate::roofline::KernelMetrics;

/// One measured kernel instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRecord {
    pub name: String,
    pub launch: KernelLaunchConfig,
    pub measured_time_ms: f64,
    pub metrics: Option<KernelMetrics>,
}

/// Which wave-scaling form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// Wave ceilings replaced by `B / W`.
    #[default]
    Simplified,
    /// Wave ceilings kept.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveScaleError {
    #[error(transparent)]
    Occupancy(#[from] OccupancyError),
    #[error("gamma {0} is outside [0, 1]")]
    GammaOutOfRange(f64),
    #[error("kernel {index}: {source}")]
    Kernel {
        index: usize,
        #[source]
        source: Box<WaveScaleError>,
    },
    #[error("operation has no kernels to scale")]
    NoKernels,
}

/// Everything wave scaling needs about a kernel on an origin/destination pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingInputs {
    pub block_count: u64,
    pub wave_origin: u64,
    pub wave_dest: u64,
    pub bandwidth_origin: f64,
    pub bandwidth_dest: f64,
    pub clock_origin: f64,
    pub clock_dest: f64,
}

impl ScalingInputs {
    pub fn resolve(
        launch: &KernelLaunchConfig,
        origin: &GpuSpec,
        dest: &GpuSpec,
    ) -> Result<Self, OccupancyError> {
        Ok(Self {
            block_count: launch.block_count,
            wave_origin: wave_size(launch, origin)?,
            wave_dest: wave_size(launch, dest)?,
            bandwidth_origin: origin.mem_bandwidth_gb_s,
            bandwidth_dest: dest.mem_bandwidth_gb_s,
            clock_origin: origin.clock_mhz,
            clock_dest: dest.clock_mhz,
        })
    }

    pub fn exact(&self, measured: f64, gamma: f64) -> f64 {
        let waves_origin = self.block_count.div_ceil(self.wave_origin) as f64;
        let waves_dest = self.block_count.div_ceil(self.wave_dest) as f64;
        let memory =
            (self.bandwidth_origin / self.bandwidth_dest) * (self.wave_dest as f64 / self.wave_origin as f64);
        let clock = self.clock_origin / self.clock_dest;
        waves_dest * memory.powf(gamma) * clock.powf(1.0 - gamma) / waves_origin * measured
    }

    pub fn simplified(&self, measured: f64, gamma: f64) -> f64 {
        let bandwidth = self.bandwidth_origin / self.bandwidth_dest;
        let wave = self.wave_origin as f64 / self.wave_dest as f64;
        let clock = self.clock_origin / self.clock_dest;
        bandwidth.powf(gamma) * wave.powf(1.0 - gamma) * clock.powf(1.0 - gamma) * measured
    }

    pub fn evaluate(&self, equation: Equation, measured: f64, gamma: f64) -> f64 {
        match equation {
            Equation::Simplified => self.simplified(measured, gamma),
            Equation::Exact => self.exact(measured, gamma),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<(), WaveScaleError> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(WaveScaleError::GammaOutOfRange(gamma))
    }
}

/// Kernel time on `dest` using the form that keeps wave ceilings.
pub fn scale_kernel_exact(
    kernel: &KernelRecord,
    origin: &GpuSpec,
    dest: &GpuSpec,
    gamma: f64,
) -> Result<f64, WaveScaleError> {
    scale_kernel_with(Equation::Exact, kernel, origin, dest, gamma)
}

/// Kernel time on `dest` using the simplified (many-wave) form.
pub fn scale_kernel(
    kernel: &KernelRecord,
    origin: &GpuSpec,
    dest: &GpuSpec,
    gamma: f64,
) -> Result<f64, WaveScaleError> {
    scale_kernel_with(Equation::Simplified, kernel, origin, dest, gamma)
}

pub fn scale_kernel_with(
    equation: Equation,
    kernel: &KernelRecord,
    origin: &GpuSpec,
    dest: &GpuSpec,
    gamma: f64,
) -> Result<f64, WaveScaleError> {
    check_gamma(gamma)?;
    let inputs = ScalingInputs::resolve(&kernel.launch, origin, dest)?;
    Ok(inputs.evaluate(equation, kernel.measured_time_ms, gamma))
}

/// Sum of scaled kernel times, accumulated left to right.
pub fn scale_operation<'a>(
    kernels: impl IntoIterator<Item = (&'a KernelRecord, f64)>,
    origin: &GpuSpec,
    dest: &GpuSpec,
    equation: Equation,
) -> Result<f64, WaveScaleError> {
    let mut total = 0.0;
    let mut seen = false;
    for (index, (kernel, gamma)) in kernels.into_iter().enumerate() {
        seen = true;
        total +=
            scale_kernel_with(equation, kernel, origin, dest, gamma).map_err(|e| WaveScaleError::Kernel {
                index,
                source: Box::new(e),
            })?;
    }
    if !seen {
        return Err(WaveScaleError::NoKernels);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwspec::Registry;
    use proptest::prelude::*;

    fn kernel(blocks: u64, threads: u32, time: f64) -> KernelRecord {
        KernelRecord {
            name: "k".into(),
            launch: KernelLaunchConfig::new(blocks, threads),
            measured_time_ms: time,
            metrics: None,
        }
    }

    fn inputs(b: u64, wo: u64, wd: u64, d: (f64, f64), c: (f64, f64)) -> ScalingInputs {
        ScalingInputs {
            block_count: b,
            wave_origin: wo,
            wave_dest: wd,
            bandwidth_origin: d.0,
            bandwidth_dest: d.1,
            clock_origin: c.0,
            clock_dest: c.1,
        }
    }

    /// Straight-line re-derivation of the exact form in log space.
    fn exact_reference(i: &ScalingInputs, t: f64, g: f64) -> f64 {
        let ceil = |b: u64, w: u64| b.div_ceil(w) as f64;
        let log = ceil(i.block_count, i.wave_dest).ln() - ceil(i.block_count, i.wave_origin).ln()
            + g * (i.bandwidth_origin.ln() - i.bandwidth_dest.ln() + (i.wave_dest as f64).ln()
                - (i.wave_origin as f64).ln())
            + (1.0 - g) * (i.clock_origin.ln() - i.clock_dest.ln());
        t * log.exp()
    }

    #[test]
    fn identity_on_same_gpu() {
        let reg = Registry::bundled();
        let v100 = reg.get("V100").unwrap();
        let k = kernel(12345, 256, 0.731);
        for g in [0.0, 0.3, 1.0] {
            assert_eq!(scale_kernel(&k, v100, v100, g).unwrap(), 0.731);
            assert_eq!(scale_kernel_exact(&k, v100, v100, g).unwrap(), 0.731);
        }
    }

    #[test]
    fn single_ratio_cases() {
        // gamma = 1, equal waves, dividing blocks: only bandwidth matters
        let i = inputs(1280, 640, 640, (100.0, 200.0), (1.0, 3.0));
        assert_eq!(i.exact(8.0, 1.0), 4.0);
        assert_eq!(i.simplified(8.0, 1.0), 4.0);
        // gamma = 0, equal waves: only clock matters
        let i = inputs(1280, 640, 640, (100.0, 700.0), (1000.0, 2000.0));
        assert_eq!(i.exact(8.0, 0.0), 4.0);
        assert_eq!(i.simplified(8.0, 0.0), 4.0);
        // gamma = 1 ignores wave and clock ratios in the simplified form
        let a = inputs(10, 100, 300, (100.0, 400.0), (1.0, 9.0));
        let b = inputs(10, 7, 3, (100.0, 400.0), (5.0, 2.0));
        assert_eq!(a.simplified(2.0, 1.0), b.simplified(2.0, 1.0));
    }

    #[test]
    fn large_grids_agree_between_forms() {
        let reg = Registry::bundled();
        let (o, d) = (reg.get("T4").unwrap(), reg.get("V100").unwrap());
        let k = kernel(1_000_000, 256, 5.0);
        for g in [0.0, 0.4, 1.0] {
            let e = scale_kernel_exact(&k, o, d, g).unwrap();
            let s = scale_kernel(&k, o, d, g).unwrap();
            assert!(((e - s) / e).abs() < 0.01);
        }
    }

    #[test]
    fn operation_sums_kernels() {
        let reg = Registry::bundled();
        let (o, d) = (reg.get("P100").unwrap(), reg.get("2080Ti").unwrap());
        let a = kernel(5000, 128, 1.0);
        let b = kernel(300, 512, 0.25);
        let single = scale_operation([(&a, 0.7)], o, d, Equation::Simplified).unwrap();
        assert_eq!(single, scale_kernel(&a, o, d, 0.7).unwrap());
        let ab = scale_operation([(&a, 0.7), (&b, 1.0)], o, d, Equation::Simplified).unwrap();
        let ba = scale_operation([(&b, 1.0), (&a, 0.7)], o, d, Equation::Simplified).unwrap();
        assert!((ab - ba).abs() <= 1e-15 * ab);
        assert!(
            (ab - scale_kernel(&a, o, d, 0.7).unwrap() - scale_kernel(&b, o, d, 1.0).unwrap()).abs() < 1e-15
        );
        let ks: Vec<_> = (0..5)
            .map(|i| kernel(100 * (i + 1), 64, 0.125 * i as f64 + 0.5))
            .collect();
        let total = scale_operation(ks.iter().map(|k| (k, 1.0)), o, o, Equation::Simplified).unwrap();
        assert_eq!(total, ks.iter().map(|k| k.measured_time_ms).sum::<f64>());
        assert_eq!(
            scale_operation(std::iter::empty(), o, d, Equation::Simplified),
            Err(WaveScaleError::NoKernels)
        );
    }

    #[test]
    fn errors_carry_kernel_index() {
        let reg = Registry::bundled();
        let (o, d) = (reg.get("V100").unwrap(), reg.get("T4").unwrap());
        let ok = kernel(10, 128, 1.0);
        let mut bad = kernel(10, 128, 1.0);
        bad.launch.shared_mem_per_block = 90_000; // fits a V100 SM, not a T4 SM
        let err = scale_operation([(&ok, 1.0), (&bad, 1.0)], o, d, Equation::Simplified).unwrap_err();
        assert!(matches!(err, WaveScaleError::Kernel { index: 1, .. }), "{err}");
        assert!(matches!(
            scale_kernel(&ok, o, d, 1.5),
            Err(WaveScaleError::GammaOutOfRange(_))
        ));
    }

    proptest! {
        #[test]
        fn exact_matches_reference(
            b in 1u64..10_000_000,
            wo in 1u64..5000,
            wd in 1u64..5000,
            d0 in 10.0f64..2000.0, d1 in 10.0f64..2000.0,
            c0 in 100.0f64..2500.0, c1 in 100.0f64..2500.0,
            g in 0.0f64..=1.0,
            t in 1e-4f64..1e3,
        ) {
            let i = inputs(b, wo, wd, (d0, d1), (c0, c1));
            let got = i.exact(t, g);
            let want = exact_reference(&i, t, g);
            prop_assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
            prop_assert!(got.is_finite() && got > 0.0);
        }

        #[test]
        fn simplified_round_trips(
            wo in 1u64..5000, wd in 1u64..5000,
            d0 in 10.0f64..2000.0, d1 in 10.0f64..2000.0,
            c0 in 100.0f64..2500.0, c1 in 100.0f64..2500.0,
            g in 0.0f64..=1.0,
            t in 1e-4f64..1e3,
        ) {
            let there = inputs(1, wo, wd, (d0, d1), (c0, c1)).simplified(t, g);
            let back = inputs(1, wd, wo, (d1, d0), (c1, c0)).simplified(there, g);
            prop_assert!(((back - t) / t).abs() < 1e-12);
        }

        #[test]
        fn simplified_monotone_in_gamma_between_extremes(
            wo in 1u64..5000, wd in 1u64..5000,
            d0 in 10.0f64..2000.0, d1 in 10.0f64..2000.0,
            c0 in 100.0f64..2500.0, c1 in 100.0f64..2500.0,
            g0 in 0.0f64..=1.0, g1 in 0.0f64..=1.0,
        ) {
            let bw = d0 / d1;
            let wc = (wo as f64 / wd as f64) * (c0 / c1);
            prop_assume!((bw - 1.0) * (wc - 1.0) >= 0.0);
            let i = inputs(1, wo, wd, (d0, d1), (c0, c1));
            let (lo, hi) = if g0 <= g1 { (g0, g1) } else { (g1, g0) };
            let (a, b) = (i.simplified(1.0, lo), i.simplified(1.0, hi));
            let (e0, e1) = (i.simplified(1.0, 0.0), i.simplified(1.0, 1.0));
            let tol = 1e-12;
            // every value sits between the two extremes, and moves toward the gamma = 1 end
            prop_assert!(a >= e0.min(e1) * (1.0 - tol) && a <= e0.max(e1) * (1.0 + tol));
            if e1 >= e0 { prop_assert!(b >= a * (1.0 - tol)); } else { prop_assert!(b <= a * (1.0 + tol)); }
        }
    }
}
