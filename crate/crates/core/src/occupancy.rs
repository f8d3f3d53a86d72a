//! Thread-block occupancy and wave size.
//!
//! Resident blocks per SM is the minimum of four limits: the hardware block
//! slot count, warp slots, the register file (allocated per warp with a
//! rounding granularity) and shared memory (allocated per block with its own
//! granularity). A zero register or shared-memory demand disables that limit.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hwspec::GpuSpec;

/// Largest block the CUDA programming model allows.
pub const MAX_THREADS_PER_BLOCK: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelLaunchConfig {
    pub block_count: u64,
    pub threads_per_block: u32,
    pub registers_per_thread: u32,
    /// Static and dynamic shared memory combined, bytes.
    pub shared_mem_per_block: u32,
}

impl KernelLaunchConfig {
    pub fn new(block_count: u64, threads_per_block: u32) -> Self {
        Self {
            block_count,
            threads_per_block,
            registers_per_thread: 0,
            shared_mem_per_block: 0,
        }
    }

    pub fn with_registers(mut self, registers_per_thread: u32) -> Self {
        self.registers_per_thread = registers_per_thread;
        self
    }

    pub fn with_shared_mem(mut self, bytes: u32) -> Self {
        self.shared_mem_per_block = bytes;
        self
    }

    pub fn validate(&self) -> Result<(), OccupancyError> {
        if self.block_count == 0 {
            return Err(OccupancyError::InvalidConfig("block_count must be at least 1"));
        }
        if self.threads_per_block == 0 || self.threads_per_block > MAX_THREADS_PER_BLOCK {
            return Err(OccupancyError::InvalidConfig(
                "threads_per_block must be in 1..=1024",
            ));
        }
        Ok(())
    }

    fn warps_per_block(&self, warp_size: u32) -> u32 {
        self.threads_per_block.div_ceil(warp_size)
    }
}

/// The resource that bounds resident blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limiter {
    Blocks,
    Threads,
    Registers,
    SharedMemory,
}

impl fmt::Display for Limiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limiter::Blocks => "blocks",
            Limiter::Threads => "threads",
            Limiter::Registers => "registers",
            Limiter::SharedMemory => "shared_memory",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Occupancy {
    pub blocks_per_sm: u32,
    pub limiter: Limiter,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OccupancyError {
    #[error("invalid launch configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("infeasible launch on {gpu}: one block needs {needed} {resource}, an SM has {available}")]
    Infeasible {
        gpu: String,
        resource: Limiter,
        needed: u64,
        available: u64,
    },
}

fn round_up(value: u64, granularity: u64) -> u64 {
    value.div_ceil(granularity) * granularity
}

/// Resident blocks per SM together with the binding limit.
pub fn occupancy(config: &KernelLaunchConfig, spec: &GpuSpec) -> Result<Occupancy, OccupancyError> {
    config.validate()?;
    let lim = &spec.occupancy;
    let infeasible = |resource, needed: u64, available: u64| OccupancyError::Infeasible {
        gpu: spec.name.clone(),
        resource,
        needed,
        available,
    };

    if config.threads_per_block > lim.max_threads_per_sm {
        return Err(infeasible(
            Limiter::Threads,
            config.threads_per_block.into(),
            lim.max_threads_per_sm.into(),
        ));
    }
    let warps_per_block = config.warps_per_block(lim.warp_size);

    // Ties resolve in the order listed, so the hardware block cap wins over an
    // equal warp limit.
    let mut best = Occupancy {
        blocks_per_sm: lim.max_blocks_per_sm,
        limiter: Limiter::Blocks,
    };
    let mut consider = |blocks: u64, limiter| {
        if blocks < u64::from(best.blocks_per_sm) {
            best = Occupancy {
                blocks_per_sm: blocks as u32,
                limiter,
            };
        }
    };

    consider(
        u64::from(lim.max_warps_per_sm / warps_per_block),
        Limiter::Threads,
    );

    if config.registers_per_thread > 0 {
        let regs_per_warp = round_up(
            u64::from(config.registers_per_thread) * u64::from(lim.warp_size),
            lim.register_alloc_granularity.into(),
        );
        let regs_per_block = regs_per_warp * u64::from(warps_per_block);
        if regs_per_block > u64::from(lim.max_registers_per_sm) {
            return Err(infeasible(
                Limiter::Registers,
                regs_per_block,
                lim.max_registers_per_sm.into(),
            ));
        }
        consider(
            u64::from(lim.max_registers_per_sm) / regs_per_warp / u64::from(warps_per_block),
            Limiter::Registers,
        );
    }

    if config.shared_mem_per_block > 0 {
        let smem = round_up(
            config.shared_mem_per_block.into(),
            lim.shared_mem_alloc_granularity.into(),
        );
        if smem > u64::from(lim.max_shared_mem_per_sm) {
            return Err(infeasible(
                Limiter::SharedMemory,
                smem,
                lim.max_shared_mem_per_sm.into(),
            ));
        }
        consider(u64::from(lim.max_shared_mem_per_sm) / smem, Limiter::SharedMemory);
    }

    debug_assert!(best.blocks_per_sm >= 1);
    Ok(best)
}

pub fn blocks_per_sm(config: &KernelLaunchConfig, spec: &GpuSpec) -> Result<u32, OccupancyError> {
    occupancy(config, spec).map(|o| o.blocks_per_sm)
}

/// Blocks in one full wave across the whole GPU.
pub fn wave_size(config: &KernelLaunchConfig, spec: &GpuSpec) -> Result<u64, OccupancyError> {
    Ok(u64::from(blocks_per_sm(config, spec)?) * u64::from(spec.sm_count))
}

/// Reference count of resident blocks: adds blocks one at a time until the
/// next would overflow a resource. Returns 0 when not even one block fits.
pub fn resident_blocks_by_enumeration(config: &KernelLaunchConfig, spec: &GpuSpec) -> u32 {
    let lim = &spec.occupancy;
    let warps = u64::from(config.threads_per_block.div_ceil(lim.warp_size));
    if config.threads_per_block > lim.max_threads_per_sm {
        return 0;
    }
    let reg_warp = if config.registers_per_thread == 0 {
        0
    } else {
        round_up(
            u64::from(config.registers_per_thread) * u64::from(lim.warp_size),
            lim.register_alloc_granularity.into(),
        )
    };
    let smem = if config.shared_mem_per_block == 0 {
        0
    } else {
        round_up(
            config.shared_mem_per_block.into(),
            lim.shared_mem_alloc_granularity.into(),
        )
    };
    let mut n = 0u64;
    loop {
        let next = n + 1;
        if next > u64::from(lim.max_blocks_per_sm)
            || next * warps > u64::from(lim.max_warps_per_sm)
            || next * warps * reg_warp > u64::from(lim.max_registers_per_sm)
            || next * smem > u64::from(lim.max_shared_mem_per_sm)
        {
            break;
        }
        n = next;
    }
    n as u32
}

/// Launch shapes for exhaustive checks: every warp-multiple block size, ten
/// register counts and twelve shared-memory sizes (3840 configurations).
pub fn exhaustive_grid() -> Vec<KernelLaunchConfig> {
    const REGISTERS: [u32; 10] = [0, 16, 24, 32, 40, 48, 64, 96, 128, 255];
    const SHARED: [u32; 12] = [
        0, 1024, 2048, 4096, 8192, 12288, 16384, 24576, 32768, 40960, 49152, 65536,
    ];
    let mut grid = Vec::with_capacity(32 * REGISTERS.len() * SHARED.len());
    for threads in (32..=MAX_THREADS_PER_BLOCK).step_by(32) {
        for regs in REGISTERS {
            for smem in SHARED {
                grid.push(
                    KernelLaunchConfig::new(1, threads)
                        .with_registers(regs)
                        .with_shared_mem(smem),
                );
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwspec::{fixtures, Registry};
    use proptest::prelude::*;

    fn test_spec() -> GpuSpec {
        let mut s = fixtures::spec("t", 100.0, 100.0);
        s.occupancy.max_warps_per_sm = 64;
        s.occupancy.max_threads_per_sm = 2048;
        s.occupancy.max_blocks_per_sm = 32;
        s
    }

    #[test]
    fn thread_limit_saturated() {
        let spec = test_spec();
        let cfg = KernelLaunchConfig::new(1000, 1024);
        let mut s = spec.clone();
        s.occupancy.max_threads_per_sm = 1024;
        s.occupancy.max_warps_per_sm = 32;
        let o = occupancy(&cfg, &s).unwrap();
        assert_eq!(o.blocks_per_sm, 1);
        assert_eq!(o.limiter, Limiter::Threads);
    }

    #[test]
    fn hand_evaluated_min_of_limits() {
        // min(32, floor(64 / 4)) = 16
        let o = occupancy(&KernelLaunchConfig::new(1, 128), &test_spec()).unwrap();
        assert_eq!(o.blocks_per_sm, 16);
        assert_eq!(o.limiter, Limiter::Threads);
        // 32 threads -> 1 warp per block, 64 warp slots, capped by 32 block slots
        let o = occupancy(&KernelLaunchConfig::new(1, 32), &test_spec()).unwrap();
        assert_eq!(o.blocks_per_sm, 32);
        assert_eq!(o.limiter, Limiter::Blocks);
    }

    #[test]
    fn register_and_shared_memory_limits() {
        let spec = test_spec();
        // 64 regs * 32 = 2048 per warp; 256 threads = 8 warps -> 16384 per block -> 4 blocks
        let o = occupancy(&KernelLaunchConfig::new(1, 256).with_registers(64), &spec).unwrap();
        assert_eq!((o.blocks_per_sm, o.limiter), (4, Limiter::Registers));
        // 48 KiB per block on 96 KiB -> 2
        let o = occupancy(&KernelLaunchConfig::new(1, 64).with_shared_mem(48 * 1024), &spec).unwrap();
        assert_eq!((o.blocks_per_sm, o.limiter), (2, Limiter::SharedMemory));
        // 100 bytes rounds up to 256 -> 384 blocks, capped at 32
        let o = occupancy(&KernelLaunchConfig::new(1, 32).with_shared_mem(100), &spec).unwrap();
        assert_eq!(o.blocks_per_sm, 32);
    }

    #[test]
    fn infeasible_launches() {
        let spec = test_spec();
        assert!(matches!(
            occupancy(&KernelLaunchConfig::new(1, 64).with_shared_mem(200_000), &spec),
            Err(OccupancyError::Infeasible {
                resource: Limiter::SharedMemory,
                ..
            })
        ));
        assert!(matches!(
            occupancy(&KernelLaunchConfig::new(1, 1024).with_registers(255), &spec),
            Err(OccupancyError::Infeasible {
                resource: Limiter::Registers,
                ..
            })
        ));
        let mut small = spec.clone();
        small.occupancy.max_threads_per_sm = 512;
        small.occupancy.max_warps_per_sm = 16;
        assert!(matches!(
            occupancy(&KernelLaunchConfig::new(1, 1024), &small),
            Err(OccupancyError::Infeasible {
                resource: Limiter::Threads,
                ..
            })
        ));
        assert!(matches!(
            occupancy(&KernelLaunchConfig::new(0, 32), &spec),
            Err(OccupancyError::InvalidConfig(_))
        ));
        assert!(matches!(
            occupancy(&KernelLaunchConfig::new(1, 2048), &spec),
            Err(OccupancyError::InvalidConfig(_))
        ));
    }

    #[test]
    fn wave_size_examples() {
        let cfg = KernelLaunchConfig::new(1, 128);
        let mut spec = test_spec();
        spec.sm_count = 80;
        assert_eq!(wave_size(&cfg, &spec).unwrap(), 1280);
        let mut small = spec.clone();
        small.sm_count = 14;
        assert_eq!(
            wave_size(&cfg, &small).unwrap() * 80,
            wave_size(&cfg, &spec).unwrap() * 14
        );
        let mut one = spec.clone();
        one.sm_count = 1;
        one.occupancy.max_blocks_per_sm = 1;
        assert_eq!(wave_size(&cfg, &one).unwrap(), 1);
    }

    #[test]
    fn closed_form_matches_brute_force_on_bundled_specs() {
        let grid = exhaustive_grid();
        assert_eq!(grid.len(), 3840);
        for spec in Registry::bundled().iter() {
            for cfg in &grid {
                match blocks_per_sm(cfg, spec) {
                    Ok(n) => assert_eq!(
                        n,
                        resident_blocks_by_enumeration(cfg, spec),
                        "{cfg:?} {}",
                        spec.name
                    ),
                    Err(_) => assert_eq!(resident_blocks_by_enumeration(cfg, spec), 0),
                }
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_in_each_resource(
            threads in 1u32..=1024,
            regs in 0u32..=64,
            smem in 0u32..=48 * 1024,
            dt in 0u32..=256,
            dr in 0u32..=32,
            ds in 0u32..=16 * 1024,
        ) {
            let spec = test_spec();
            let base = KernelLaunchConfig::new(1, threads).with_registers(regs).with_shared_mem(smem);
            let Ok(b) = blocks_per_sm(&base, &spec) else { return Ok(()); };
            prop_assert!(b >= 1 && b <= spec.occupancy.max_blocks_per_sm);
            prop_assert_eq!(b, resident_blocks_by_enumeration(&base, &spec));
            let variants = [
                KernelLaunchConfig { threads_per_block: (threads + dt).min(1024), ..base },
                KernelLaunchConfig { registers_per_thread: regs + dr, ..base },
                KernelLaunchConfig { shared_mem_per_block: smem + ds, ..base },
            ];
            for v in variants {
                if let Ok(n) = blocks_per_sm(&v, &spec) {
                    prop_assert!(n <= b);
                }
            }
        }
    }
}
