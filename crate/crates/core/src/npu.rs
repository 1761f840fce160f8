//! Accelerator resource description.

use crate::error::{Error, Result};

/// Static description of the simulated NPU.
///
/// The defaults describe a VTA-like device: 100 MHz fabric clock, a 2 MiB
/// double-buffered weight scratchpad, and a DMA engine that pays a fixed
/// per-transaction setup cost before streaming a burst at the DRAM interface
/// rate. `pe_count`, `dram_bandwidth_bps` and `dma_setup_cycles` are
/// calibration knobs, chosen so the shipped model catalogs produce visibly
/// distinct per-layer traffic; they are not claims about any physical board.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpuConfig {
    /// Fabric clock in Hz.
    pub clock_hz: u64,
    /// Multiply-accumulate units available per cycle (GEMM array).
    pub pe_count: u64,
    /// Vector ALU lanes used by pooling, activation and residual adds.
    pub alu_lanes: u64,
    /// Weight scratchpad capacity in bytes. Half is usable per tile because
    /// loads are double-buffered against compute.
    pub weight_scratchpad_bytes: u64,
    /// Sustained DRAM interface bandwidth in bytes/second.
    pub dram_bandwidth_bps: u64,
    /// DMA burst size in bytes; also the default traffic-shaper quantum.
    pub dma_burst_bytes: u64,
    /// Fixed cycles between the end of one DMA transaction and the first data
    /// beat of the next (descriptor setup, command phase).
    pub dma_setup_cycles: u64,
    /// Driver synchronization pause between consecutive layer launches; the
    /// memory interface is idle for this long at every layer transition.
    pub layer_sync_cycles: u64,
    /// Minimum blocking factor along the channel dimensions. Factors smaller
    /// than this are not enumerated unless the dimension itself is smaller.
    pub block_granularity: u32,
}

impl Default for NpuConfig {
    fn default() -> Self {
        Self {
            clock_hz: 100_000_000,
            pe_count: 32_768,
            alu_lanes: 16,
            weight_scratchpad_bytes: 2 * 1024 * 1024,
            dram_bandwidth_bps: 50_000_000,
            dma_burst_bytes: 256,
            dma_setup_cycles: 640,
            layer_sync_cycles: 2400,
            block_granularity: 4,
        }
    }
}

impl NpuConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clock_hz == 0
            || self.pe_count == 0
            || self.alu_lanes == 0
            || self.weight_scratchpad_bytes == 0
            || self.dram_bandwidth_bps == 0
            || self.dma_burst_bytes == 0
            || self.block_granularity == 0
        {
            return Err(Error::InvalidParam(
                "all NpuConfig quantities must be positive".into(),
            ));
        }
        if self.dma_burst_bytes > self.weight_scratchpad_bytes {
            return Err(Error::InvalidParam(
                "dma_burst_bytes exceeds weight scratchpad capacity".into(),
            ));
        }
        Ok(())
    }

    /// Scratchpad bytes available to a single weight tile (double buffering).
    pub fn tile_capacity(&self) -> u64 {
        self.weight_scratchpad_bytes / 2
    }

    /// Cycles a DMA transaction of `bytes` occupies the bus.
    pub fn transfer_cycles(&self, bytes: u64) -> u64 {
        div_ceil_u128(
            bytes as u128 * self.clock_hz as u128,
            self.dram_bandwidth_bps as u128,
        )
    }

    /// Cycles to compute `macs` multiply-accumulates on the GEMM array.
    pub fn gemm_cycles(&self, macs: u64) -> u64 {
        macs.div_ceil(self.pe_count)
    }

    /// Cycles for `ops` elementwise ALU operations.
    pub fn alu_cycles(&self, ops: u64) -> u64 {
        ops.div_ceil(self.alu_lanes)
    }

    /// Cycles per sampling window of `window_us` microseconds, at least 1.
    pub fn window_cycles(&self, window_us: u32) -> u64 {
        ((self.clock_hz as u128 * window_us as u128) / 1_000_000).max(1) as u64
    }
}

fn div_ceil_u128(num: u128, den: u128) -> u64 {
    (num.div_ceil(den)) as u64
}
