//! Constant-bandwidth traffic shaping.
//!
//! The shaper replaces the demand-driven DMA stream with a conveyor of
//! fixed-size transactions on a fixed cadence: one `quantum_bytes`
//! transaction every `quantum_bytes / target_Bps` seconds on the read
//! channel, and one fixed-size write transaction every `write_period_us`.
//! Real demand bytes ride the conveyor FIFO; unfilled capacity is padding
//! inside a real transaction or a whole fake transaction. A tile is available
//! to compute only when its last real byte has been delivered, so a target
//! below the demand rate throttles loads and the stall propagates into
//! compute. Shaping runs inside the simulation loop, not as trace
//! post-processing; otherwise the overhead could not be measured.
//!
//! At or above the bus rate the conveyor degenerates to the unshaped
//! schedule with every idle gap filled by fakes: real deliveries are
//! unchanged and the overhead is exactly zero.

use crate::catalog::ModelSpec;
use crate::error::{Error, Result};
use crate::npu::NpuConfig;
use crate::sim::{
    sample_counter, simulate_total_cycles, Authenticity, BandwidthTrace, DmaTransaction,
    LayerSpan, TxnKind, DEFAULT_WINDOW_US,
};
use crate::tiles::tiles_for;
use crate::tuner::TileSchedule;

/// Shaper knobs. `quantum_bytes` defaults to the NPU's DMA burst size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShaperConfig {
    /// Constant rate presented on the read channel, bytes/second.
    pub target_bps: u64,
    /// Fixed transaction size on the read conveyor.
    pub quantum_bytes: u64,
    /// Cadence of scheduled writes, microseconds.
    pub write_period_us: u32,
    /// Abort when the shaped run exceeds this multiple of the unshaped run.
    pub cycle_cap_factor: u64,
}

impl ShaperConfig {
    pub fn new(target_bps: u64, npu: &NpuConfig) -> Self {
        Self {
            target_bps,
            quantum_bytes: npu.dma_burst_bytes,
            write_period_us: DEFAULT_WINDOW_US,
            cycle_cap_factor: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_bps == 0 || self.quantum_bytes == 0 {
            return Err(Error::InvalidParam(
                "shaper target and quantum must be positive".into(),
            ));
        }
        if self.write_period_us == 0 || self.cycle_cap_factor == 0 {
            return Err(Error::InvalidParam(
                "write period and cycle cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one shaped run.
#[derive(Debug, Clone)]
pub struct ShapedResult {
    pub txns: Vec<DmaTransaction>,
    /// Extra cycles on the load/compute path caused by throttling.
    pub stall_cycles: u64,
    pub shaped_total_cycles: u64,
    pub unshaped_total_cycles: u64,
    /// shaped/unshaped - 1.
    pub overhead: f64,
    /// Effective conveyor rate after clamping to the bus rate.
    pub target_bps_effective: u64,
    pub demand_read_bytes: u64,
    pub real_read_bytes: u64,
    pub demand_write_bytes: u64,
    pub layer_spans: Vec<LayerSpan>,
    pub clock_hz: u64,
}

/// Performance penalty of a shaped run: shaped/unshaped - 1.
pub fn overhead(unshaped_cycles: u64, shaped_cycles: u64) -> f64 {
    assert!(unshaped_cycles > 0 && shaped_cycles > 0);
    shaped_cycles as f64 / unshaped_cycles as f64 - 1.0
}

/// Windowed view of the shaped stream; same counter as the unshaped path.
pub fn shaped_trace(result: &ShapedResult, window_us: u32) -> BandwidthTrace {
    sample_counter(&result.txns, window_us, result.clock_hz)
}

/// Fixed-cadence conveyor of `slot_bytes`-sized transactions. Slot `s` starts
/// at `floor(s * slot_bytes * clock / rate)` cycles and streams its payload at
/// the bus rate; real bytes claim wire positions FIFO, anything else is
/// padding. A claim made at time `t` can only occupy wire bytes transmitted
/// at or after `t` (the controller fills each burst as it streams).
struct Conveyor {
    slot_bytes: u64,
    /// numerator/denominator of cycles-per-slot: slot_bytes*clock / rate
    num: u128,
    den: u128,
    clock_hz: u64,
    bus_bps: u64,
    wire_pos: u64,
    /// real byte count per slot index, grown on demand
    real_in_slot: Vec<u64>,
}

impl Conveyor {
    /// Conveyor pacing `slot_bytes` per `slot_bytes/rate_bps` seconds.
    fn per_rate(slot_bytes: u64, rate_bps: u64, npu: &NpuConfig) -> Self {
        Self {
            slot_bytes,
            num: slot_bytes as u128 * npu.clock_hz as u128,
            den: rate_bps as u128,
            clock_hz: npu.clock_hz,
            bus_bps: npu.dram_bandwidth_bps,
            wire_pos: 0,
            real_in_slot: Vec::new(),
        }
    }

    /// Conveyor pacing `slot_bytes` per fixed `period_cycles`.
    fn per_period(slot_bytes: u64, period_cycles: u64, npu: &NpuConfig) -> Self {
        Self {
            slot_bytes,
            num: period_cycles as u128,
            den: 1,
            clock_hz: npu.clock_hz,
            bus_bps: npu.dram_bandwidth_bps,
            wire_pos: 0,
            real_in_slot: Vec::new(),
        }
    }

    fn slot_start(&self, slot: u64) -> u64 {
        ((slot as u128 * self.num) / self.den) as u64
    }

    /// First slot whose start is at or after `t`.
    fn slot_at_or_after(&self, t: u64) -> u64 {
        ((t as u128 * self.den).div_ceil(self.num)) as u64
    }

    /// Last slot whose start is at or before `t`.
    fn slot_at_or_before(&self, t: u64) -> u64 {
        ((t as u128 * self.den) / self.num) as u64
    }

    /// Delivery time of byte `i` within a slot (end of its transmission).
    fn byte_done_offset(&self, i: u64) -> u64 {
        (((i + 1) as u128 * self.clock_hz as u128).div_ceil(self.bus_bps as u128)) as u64
    }

    /// First wire position transmitted at or after `t` (up to one cycle of
    /// rounding slop from the integer slot grid).
    fn wire_pos_at(&self, t: u64) -> u64 {
        let q = self.slot_bytes;
        let s = self.slot_at_or_before(t);
        let start = self.slot_start(s);
        if start >= t {
            return s * q;
        }
        let off =
            ((t - start) as u128 * self.bus_bps as u128).div_ceil(self.clock_hz as u128) as u64;
        if off < q {
            s * q + off
        } else {
            self.slot_at_or_after(t) * q
        }
    }

    /// Claim `bytes` for a request arriving at `t`; returns the delivery time
    /// of the final byte. Bytes already streamed before `t` cannot be
    /// claimed, so idle stretches become padding.
    fn claim(&mut self, t: u64, bytes: u64) -> u64 {
        debug_assert!(bytes > 0);
        let q = self.slot_bytes;
        let first = self.wire_pos.max(self.wire_pos_at(t));
        let last = first + bytes - 1;
        for s in (first / q)..=(last / q) {
            let si = s as usize;
            if self.real_in_slot.len() <= si {
                self.real_in_slot.resize(si + 1, 0);
            }
            let lo = (s * q).max(first);
            let hi = ((s + 1) * q - 1).min(last);
            self.real_in_slot[si] += hi - lo + 1;
        }
        self.wire_pos = last + 1;
        self.slot_start(last / q) + self.byte_done_offset(last % q)
    }

    /// Materialize the conveyor as transactions covering slots up to the one
    /// containing `t_end`.
    fn txns(&self, t_end: u64, kind: TxnKind, npu: &NpuConfig) -> Vec<DmaTransaction> {
        let dur = npu.transfer_cycles(self.slot_bytes);
        let last_slot = self.slot_at_or_after(t_end).max(1);
        let mut out = Vec::with_capacity(last_slot as usize);
        for s in 0..last_slot {
            let real = self.real_in_slot.get(s as usize).copied().unwrap_or(0) > 0;
            out.push(DmaTransaction {
                t_start: self.slot_start(s),
                duration: dur,
                bytes: self.slot_bytes,
                kind,
                authenticity: if real {
                    Authenticity::Real
                } else {
                    Authenticity::Fake
                },
            });
        }
        out
    }
}

/// Shape one coupled (model, schedule, npu) simulation.
pub fn shape(
    model: &ModelSpec,
    schedule: &TileSchedule,
    npu: &NpuConfig,
    cfg: &ShaperConfig,
) -> Result<ShapedResult> {
    npu.validate()?;
    cfg.validate()?;
    let unshaped_total = simulate_total_cycles(model, schedule, npu)?;
    let cap = unshaped_total.saturating_mul(cfg.cycle_cap_factor);

    if cfg.target_bps >= npu.dram_bandwidth_bps {
        return shape_at_bus_rate(model, schedule, npu, cfg, unshaped_total);
    }

    let mut read_belt = Conveyor::per_rate(cfg.quantum_bytes, cfg.target_bps, npu);
    let write_period_cycles = npu.window_cycles(cfg.write_period_us);
    // keep write slots from overlapping: cap payload at the bus capacity of
    // one period
    let write_bytes_per_slot = cfg
        .quantum_bytes
        .min(
            (write_period_cycles as u128 * npu.dram_bandwidth_bps as u128
                / npu.clock_hz as u128) as u64,
        )
        .max(1);
    let mut write_belt = Conveyor::per_period(write_bytes_per_slot, write_period_cycles, npu);

    let mut t = 0u64; // layer barrier on the load/compute path
    let mut demand_read = 0u64;
    let mut demand_write = 0u64;
    let mut last_store_done = 0u64;
    let mut layer_ends = Vec::with_capacity(model.layers.len());

    for layer in &model.layers {
        let end;
        if layer.kind.loads_weights() {
            let tile_cfg = schedule
                .per_layer
                .get(&layer.id)
                .ok_or(Error::ScheduleGap { layer: layer.id })?;
            let (num_tiles, bytes_per_tile) = tiles_for(layer, tile_cfg)?;
            if bytes_per_tile > npu.tile_capacity() {
                return Err(Error::IllegalTile {
                    layer: layer.id,
                    msg: "tile exceeds double-buffered capacity".into(),
                });
            }
            let tile_macs = layer.out_spatial()
                * tile_cfg.tile_oc as u64
                * tile_cfg.tile_ic as u64
                * layer.kernel_h as u64
                * layer.kernel_w as u64;
            let compute = npu.gemm_cycles(tile_macs);

            let mut req_tail = t;
            let mut compute_end = [t, t];
            let mut last_compute = t;
            let mut last_avail = t;
            for k in 0..num_tiles {
                let buffer_free = compute_end[(k % 2) as usize];
                let req = req_tail.max(buffer_free) + npu.dma_setup_cycles;
                req_tail = req;
                let avail = read_belt.claim(req, bytes_per_tile);
                demand_read += bytes_per_tile;
                last_avail = avail;
                let c_start = avail.max(last_compute);
                last_compute = c_start + compute;
                compute_end[(k % 2) as usize] = last_compute;
                if last_compute > cap {
                    return Err(Error::InfeasibleTarget {
                        target_bps: cfg.target_bps,
                        cap,
                    });
                }
            }
            end = last_compute.max(last_avail);
        } else {
            end = t + npu.alu_cycles(layer.alu_ops());
        }
        if layer.kind.stores_output() {
            let bytes = layer.output_bytes();
            if bytes > 0 {
                let done = write_belt.claim(end, bytes);
                demand_write += bytes;
                last_store_done = last_store_done.max(done);
            }
        }
        t = end + npu.layer_sync_cycles;
        layer_ends.push(t);
    }

    let shaped_total = t;
    let t_end = shaped_total.max(last_store_done);
    let mut txns = read_belt.txns(t_end, TxnKind::Read, npu);
    txns.extend(write_belt.txns(t_end, TxnKind::Write, npu));
    txns.sort_by_key(|x| (x.t_start, matches!(x.kind, TxnKind::Write)));

    let real_read: u64 = read_belt.real_in_slot.iter().sum();
    Ok(ShapedResult {
        txns,
        stall_cycles: shaped_total.saturating_sub(unshaped_total),
        shaped_total_cycles: shaped_total,
        unshaped_total_cycles: unshaped_total,
        overhead: overhead(unshaped_total, shaped_total),
        target_bps_effective: cfg.target_bps,
        demand_read_bytes: demand_read,
        real_read_bytes: real_read,
        demand_write_bytes: demand_write,
        layer_spans: spans_from_ends(&layer_ends, npu),
        clock_hz: npu.clock_hz,
    })
}

/// Targets at or above the bus rate: the conveyor runs back-to-back at bus
/// speed, so real deliveries equal the unshaped schedule and only the gaps
/// change (filled with fakes). Overhead is exactly zero.
fn shape_at_bus_rate(
    model: &ModelSpec,
    schedule: &TileSchedule,
    npu: &NpuConfig,
    cfg: &ShaperConfig,
    unshaped_total: u64,
) -> Result<ShapedResult> {
    let sim = crate::sim::simulate_inference(model, schedule, npu)?;
    let q = cfg.quantum_bytes;
    let dur_q = npu.transfer_cycles(q);

    // mark busy intervals per channel, then emit quantum slots back-to-back
    let mut demand_read = 0u64;
    let mut demand_write = 0u64;
    let mut read_busy: Vec<(u64, u64)> = Vec::new();
    let mut write_busy: Vec<(u64, u64)> = Vec::new();
    for txn in &sim.txns {
        match txn.kind {
            TxnKind::Read => {
                demand_read += txn.bytes;
                read_busy.push((txn.t_start, txn.t_start + txn.duration));
            }
            TxnKind::Write => {
                demand_write += txn.bytes;
                write_busy.push((txn.t_start, txn.t_start + txn.duration));
            }
        }
    }
    let t_end = sim
        .txns
        .iter()
        .map(|x| x.t_start + x.duration)
        .max()
        .unwrap_or(0)
        .max(unshaped_total);

    let mut txns = Vec::new();
    for (kind, busy) in [(TxnKind::Read, &read_busy), (TxnKind::Write, &write_busy)] {
        let mut i = 0usize;
        let mut t = 0u64;
        while t < t_end {
            while i < busy.len() && busy[i].1 <= t {
                i += 1;
            }
            let real = i < busy.len() && busy[i].0 < t + dur_q;
            txns.push(DmaTransaction {
                t_start: t,
                duration: dur_q,
                bytes: q,
                kind,
                authenticity: if real {
                    Authenticity::Real
                } else {
                    Authenticity::Fake
                },
            });
            t += dur_q;
        }
    }
    txns.sort_by_key(|x| (x.t_start, matches!(x.kind, TxnKind::Write)));

    Ok(ShapedResult {
        txns,
        stall_cycles: 0,
        shaped_total_cycles: unshaped_total,
        unshaped_total_cycles: unshaped_total,
        overhead: 0.0,
        target_bps_effective: npu.dram_bandwidth_bps,
        demand_read_bytes: demand_read,
        real_read_bytes: demand_read,
        demand_write_bytes: demand_write,
        layer_spans: sim.layer_spans.clone(),
        clock_hz: npu.clock_hz,
    })
}

fn spans_from_ends(ends: &[u64], npu: &NpuConfig) -> Vec<LayerSpan> {
    let wc = npu.window_cycles(DEFAULT_WINDOW_US);
    let mut spans = Vec::with_capacity(ends.len());
    let mut prev = 0usize;
    for (layer, &end) in ends.iter().enumerate() {
        let e = (end.div_ceil(wc)) as usize;
        spans.push(LayerSpan {
            layer,
            start_window: prev,
            end_window: e.max(prev),
        });
        prev = e.max(prev);
    }
    spans
}

/// Peak windowed read bandwidth of a trace, in bytes/second.
pub fn peak_window_bps(trace: &BandwidthTrace) -> u64 {
    let peak = trace.read_bytes.iter().copied().max().unwrap_or(0);
    (peak as u128 * 1_000_000 / trace.window_us as u128) as u64
}

/// Mean read demand rate of a run, in bytes/second.
pub fn mean_demand_bps(total_read_bytes: u64, total_cycles: u64, clock_hz: u64) -> u64 {
    if total_cycles == 0 {
        return 0;
    }
    (total_read_bytes as u128 * clock_hz as u128 / total_cycles as u128) as u64
}
