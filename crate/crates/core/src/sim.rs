//! Deterministic simulation of tiled inference and the windowed bandwidth
//! counter an observer reads.
//!
//! The cost model is the simplest one that reproduces read-transaction timing
//! and size: each weight tile is one DMA read of `bytes_per_tile`, loads are
//! double-buffered against compute (the load of tile k+1 overlaps the compute
//! of tile k), per-tile compute is `MACs / pe_count`, and every transaction
//! pays a fixed DMA setup gap before its first data beat. Pool, activation
//! and residual-add layers occupy the vector ALU and generate no read
//! traffic. Layers that materialize an output tensor emit one aggregated
//! store on the independent write channel; stores never stall the
//! load/compute path.

use crate::catalog::ModelSpec;
use crate::error::{Error, Result};
use crate::npu::NpuConfig;
use crate::rng::SplitMix64;
use crate::tiles::tiles_for;
use crate::tuner::TileSchedule;

/// Default counter sampling window: 4 us (a 250 kHz readout).
pub const DEFAULT_WINDOW_US: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxnKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Authenticity {
    Real,
    Fake,
}

/// One DMA transaction as seen on the memory interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmaTransaction {
    pub t_start: u64,
    /// Bus occupancy in cycles: ceil(bytes / per-cycle bandwidth).
    pub duration: u64,
    pub bytes: u64,
    pub kind: TxnKind,
    /// Fake transactions only appear after traffic shaping. The flag is
    /// evaluation-side ground truth and is never exported into traces.
    pub authenticity: Authenticity,
}

/// Windowed byte counts per channel: what the bandwidth counter reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandwidthTrace {
    pub window_us: u32,
    pub read_bytes: Vec<u64>,
    pub write_bytes: Vec<u64>,
}

impl BandwidthTrace {
    pub fn len(&self) -> usize {
        self.read_bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.read_bytes.is_empty()
    }

    pub fn total_read(&self) -> u64 {
        self.read_bytes.iter().sum()
    }

    pub fn total_write(&self) -> u64 {
        self.write_bytes.iter().sum()
    }

    /// CSV export: `window_index,time_us,read_bytes,write_bytes`, exact
    /// integers, one row per window.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.len() * 24 + 48);
        s.push_str("window_index,time_us,read_bytes,write_bytes\n");
        for (i, (r, w)) in self.read_bytes.iter().zip(&self.write_bytes).enumerate() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                i,
                i as u64 * self.window_us as u64,
                r,
                w
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut read_bytes = Vec::new();
        let mut write_bytes = Vec::new();
        let mut window_us = DEFAULT_WINDOW_US;
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                continue; // header
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::InvalidParam(format!(
                    "trace CSV line {}: expected 4 columns",
                    i + 1
                )));
            }
            let parse = |s: &str| -> Result<u64> {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidParam(format!("trace CSV line {}: bad integer", i + 1)))
            };
            if i == 2 {
                // second data row carries the window length as its timestamp
                let t = parse(cols[1])?;
                if t > 0 {
                    window_us = t as u32;
                }
            }
            read_bytes.push(parse(cols[2])?);
            write_bytes.push(parse(cols[3])?);
        }
        Ok(Self {
            window_us,
            read_bytes,
            write_bytes,
        })
    }
}

/// Ground-truth span of one layer, in window indices (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub layer: usize,
    pub start_window: usize,
    pub end_window: usize,
}

/// Full simulation output: the observable trace plus evaluation-side truth.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: BandwidthTrace,
    pub txns: Vec<DmaTransaction>,
    pub layer_spans: Vec<LayerSpan>,
    pub total_cycles: u64,
}

impl SimResult {
    /// Window positions of the true boundaries between adjacent
    /// weight-loading layers: the span start of each weight layer after the
    /// first.
    pub fn true_boundaries(&self, model: &ModelSpec) -> Vec<usize> {
        let ids = model.weight_layers();
        ids.iter()
            .skip(1)
            .map(|&id| {
                self.layer_spans
                    .iter()
                    .find(|s| s.layer == id)
                    .map(|s| s.start_window)
                    .unwrap_or(0)
            })
            .collect()
    }
}

struct LayerTiming {
    /// Cycle at which the layer's load+compute path finishes.
    end: u64,
}

fn run_layer(
    model: &ModelSpec,
    layer_id: usize,
    schedule: &TileSchedule,
    npu: &NpuConfig,
    start: u64,
    write_free: &mut u64,
    mut sink: Option<&mut Vec<DmaTransaction>>,
) -> Result<LayerTiming> {
    let layer = model.layer(layer_id);
    let end;
    if layer.kind.loads_weights() {
        let cfg = schedule
            .per_layer
            .get(&layer_id)
            .ok_or(Error::ScheduleGap { layer: layer_id })?;
        let (num_tiles, bytes_per_tile) = tiles_for(layer, cfg)?;
        if bytes_per_tile > npu.tile_capacity() {
            return Err(Error::IllegalTile {
                layer: layer_id,
                msg: format!(
                    "tile of {} bytes exceeds double-buffered capacity {}",
                    bytes_per_tile,
                    npu.tile_capacity()
                ),
            });
        }
        let transfer = npu.transfer_cycles(bytes_per_tile);
        let tile_macs = layer.out_spatial()
            * cfg.tile_oc as u64
            * cfg.tile_ic as u64
            * layer.kernel_h as u64
            * layer.kernel_w as u64;
        let compute = npu.gemm_cycles(tile_macs);

        let mut load_end = start;
        let mut compute_end = [start, start]; // per double buffer slot
        let mut last_compute = start;
        for k in 0..num_tiles {
            let buffer_free = compute_end[(k % 2) as usize];
            let issue = load_end.max(buffer_free) + npu.dma_setup_cycles;
            load_end = issue + transfer;
            if let Some(s) = sink.as_deref_mut() {
                s.push(DmaTransaction {
                    t_start: issue,
                    duration: transfer,
                    bytes: bytes_per_tile,
                    kind: TxnKind::Read,
                    authenticity: Authenticity::Real,
                });
            }
            let c_start = load_end.max(last_compute);
            last_compute = c_start + compute;
            compute_end[(k % 2) as usize] = last_compute;
        }
        end = last_compute.max(load_end);
    } else {
        end = start + npu.alu_cycles(layer.alu_ops());
    }

    if layer.kind.stores_output() {
        let bytes = layer.output_bytes();
        let dur = npu.transfer_cycles(bytes);
        let t = end.max(*write_free);
        *write_free = t + dur;
        if let Some(s) = sink {
            s.push(DmaTransaction {
                t_start: t,
                duration: dur,
                bytes,
                kind: TxnKind::Write,
                authenticity: Authenticity::Real,
            });
        }
    }
    Ok(LayerTiming { end })
}

fn run_schedule(
    model: &ModelSpec,
    schedule: &TileSchedule,
    npu: &NpuConfig,
    mut sink: Option<&mut Vec<DmaTransaction>>,
) -> Result<(Vec<u64>, u64)> {
    npu.validate()?;
    let mut ends = Vec::with_capacity(model.layers.len());
    let mut t = 0u64;
    let mut write_free = 0u64;
    for layer in &model.layers {
        let timing = run_layer(
            model,
            layer.id,
            schedule,
            npu,
            t,
            &mut write_free,
            sink.as_deref_mut(),
        )?;
        // driver sync before the next layer launch
        t = timing.end + npu.layer_sync_cycles;
        ends.push(t);
    }
    Ok((ends, t))
}

/// Total load+compute cycles for the model under `schedule`; no transaction
/// log is materialized. Used by the tuner and the exploration sampler.
pub fn simulate_total_cycles(
    model: &ModelSpec,
    schedule: &TileSchedule,
    npu: &NpuConfig,
) -> Result<u64> {
    run_schedule(model, schedule, npu, None).map(|(_, t)| t)
}

/// Cycles a single layer takes in isolation under `cfg` (its profile
/// signature). Layer barriers make per-layer costs independent, so this is
/// also the tuner's objective.
pub fn isolated_layer_cycles(
    model: &ModelSpec,
    layer_id: usize,
    cfg: &crate::tiles::TileConfig,
    npu: &NpuConfig,
) -> Result<u64> {
    let mut schedule = TileSchedule::empty();
    schedule.per_layer.insert(layer_id, *cfg);
    let mut write_free = 0;
    run_layer(model, layer_id, &schedule, npu, 0, &mut write_free, None).map(|t| t.end)
}

/// Simulate a full inference pass. Deterministic: identical inputs produce a
/// bit-identical result.
pub fn simulate_inference(
    model: &ModelSpec,
    schedule: &TileSchedule,
    npu: &NpuConfig,
) -> Result<SimResult> {
    let mut txns = Vec::new();
    let (ends, total_cycles) = run_schedule(model, schedule, npu, Some(&mut txns))?;
    let trace = sample_counter(&txns, DEFAULT_WINDOW_US, npu.clock_hz);
    let wc = npu.window_cycles(DEFAULT_WINDOW_US);
    let mut spans = Vec::with_capacity(ends.len());
    let mut prev_w = 0usize;
    for (layer, &end) in ends.iter().enumerate() {
        let end_w = (end.div_ceil(wc)) as usize;
        spans.push(LayerSpan {
            layer,
            start_window: prev_w,
            end_window: end_w.max(prev_w),
        });
        prev_w = end_w.max(prev_w);
    }
    Ok(SimResult {
        trace,
        txns,
        layer_spans: spans,
        total_cycles,
    })
}

/// Accumulate transaction bytes into fixed windows. A transaction's bytes are
/// attributed to windows pro-rata by cycle overlap, with cumulative rounding
/// so the per-transaction total is preserved exactly.
pub fn sample_counter(txns: &[DmaTransaction], window_us: u32, clock_hz: u64) -> BandwidthTrace {
    let wc = ((clock_hz as u128 * window_us as u128) / 1_000_000).max(1) as u64;
    let max_end = txns
        .iter()
        .map(|t| t.t_start + t.duration)
        .max()
        .unwrap_or(0);
    let n = (max_end.div_ceil(wc)) as usize;
    let mut read_bytes = vec![0u64; n];
    let mut write_bytes = vec![0u64; n];
    for txn in txns {
        if txn.bytes == 0 {
            continue;
        }
        let chan = match txn.kind {
            TxnKind::Read => &mut read_bytes,
            TxnKind::Write => &mut write_bytes,
        };
        let dur = txn.duration.max(1);
        let first = (txn.t_start / wc) as usize;
        let last = ((txn.t_start + dur - 1) / wc) as usize;
        let mut allocated = 0u64;
        for w in first..=last {
            let win_end = (w as u64 + 1) * wc;
            let covered = win_end.min(txn.t_start + dur) - txn.t_start;
            let upto = ((txn.bytes as u128 * covered as u128) / dur as u128) as u64;
            let upto = if win_end >= txn.t_start + dur {
                txn.bytes
            } else {
                upto
            };
            chan[w] += upto - allocated;
            allocated = upto;
        }
    }
    BandwidthTrace {
        window_us,
        read_bytes,
        write_bytes,
    }
}

/// Multiplicative per-window noise, uniform in [1-amplitude, 1+amplitude],
/// rounded to whole bytes and clamped at zero. Amplitude 0 returns the trace
/// unchanged; a fixed seed gives identical output.
pub fn inject_noise(trace: &BandwidthTrace, amplitude: f64, seed: u64) -> BandwidthTrace {
    assert!(
        (0.0..1.0).contains(&amplitude),
        "noise amplitude must be in [0, 1)"
    );
    if amplitude == 0.0 {
        return trace.clone();
    }
    let mut rng = SplitMix64::new(seed);
    let mut perturb = |xs: &[u64]| -> Vec<u64> {
        xs.iter()
            .map(|&x| {
                let u = 1.0 - amplitude + 2.0 * amplitude * rng.next_f64();
                (x as f64 * u).round().max(0.0) as u64
            })
            .collect()
    };
    BandwidthTrace {
        window_us: trace.window_us,
        read_bytes: perturb(&trace.read_bytes),
        write_bytes: perturb(&trace.write_bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::parse_catalog;
    use crate::tiles::TileConfig;
    use crate::tuner::tune;

    fn one_layer_model(oc: u32, ic: u32, k: u32, hw: u32) -> ModelSpec {
        parse_catalog(
            "one",
            &format!("0,conv,{ic},{oc},{k},{k},{hw},{hw},1\n"),
            1,
        )
        .unwrap()
    }

    fn whole_schedule(model: &ModelSpec) -> TileSchedule {
        let mut s = TileSchedule::empty();
        for &id in &model.weight_layers() {
            s.per_layer.insert(id, TileConfig::whole(model.layer(id)));
        }
        s
    }

    #[test]
    fn single_tile_layer_is_one_read() {
        let model = one_layer_model(8, 8, 3, 8);
        let npu = NpuConfig::default();
        let sim = simulate_inference(&model, &whole_schedule(&model), &npu).unwrap();
        let reads: Vec<&DmaTransaction> =
            sim.txns.iter().filter(|t| t.kind == TxnKind::Read).collect();
        assert_eq!(reads.len(), 1);
        assert_eq!(reads[0].bytes, model.layer(0).weight_bytes());
    }

    #[test]
    fn read_bytes_conserved_across_schedule() {
        let model = one_layer_model(64, 64, 3, 14);
        let npu = NpuConfig::default();
        let mut s = TileSchedule::empty();
        s.per_layer.insert(
            0,
            TileConfig {
                tile_oc: 16,
                ..TileConfig::whole(model.layer(0))
            },
        );
        let sim = simulate_inference(&model, &s, &npu).unwrap();
        let (n, b) = crate::tiles::tiles_for(model.layer(0), &s.per_layer[&0]).unwrap();
        let total: u64 = sim
            .txns
            .iter()
            .filter(|t| t.kind == TxnKind::Read)
            .map(|t| t.bytes)
            .sum();
        assert_eq!(total, n * b);
        assert_eq!(sim.trace.total_read(), total); // counter is byte-exact
    }

    #[test]
    fn bigger_tiles_raise_median_window_bandwidth() {
        // two identical layers (equal compute), tiled at 1024 vs 4096 bytes
        // per tile: the smaller tile spends over half of each period in the
        // per-transaction setup gap, so its median window bandwidth drops
        // below the larger tile's steady full-rate median
        let model = parse_catalog(
            "two",
            "0,conv,64,64,2,2,8,8,1\n1,conv,64,64,2,2,8,8,1\n",
            1,
        )
        .unwrap();
        let npu = NpuConfig {
            dma_setup_cycles: 1600,
            layer_sync_cycles: 0,
            ..NpuConfig::default()
        };
        let mut s = TileSchedule::empty();
        let whole = TileConfig::whole(model.layer(0));
        s.per_layer.insert(0, TileConfig { tile_oc: 4, ..whole }); // 16 x 1024 B
        s.per_layer.insert(1, TileConfig { tile_oc: 16, ..whole }); // 4 x 4096 B
        let sim = simulate_inference(&model, &s, &npu).unwrap();
        let med = |span: &LayerSpan| {
            let mut xs: Vec<u64> =
                sim.trace.read_bytes[span.start_window..span.end_window.min(sim.trace.len())]
                    .to_vec();
            xs.sort();
            xs[xs.len() / 2]
        };
        assert!(med(&sim.layer_spans[1]) > med(&sim.layer_spans[0]));
    }

    #[test]
    fn counter_single_window() {
        let txns = vec![DmaTransaction {
            t_start: 0,
            duration: 400,
            bytes: 400,
            kind: TxnKind::Read,
            authenticity: Authenticity::Real,
        }];
        let trace = sample_counter(&txns, 4, 100_000_000);
        assert_eq!(trace.read_bytes, vec![400]);
    }

    #[test]
    fn counter_prorata_split() {
        // spans two windows 60%/40%: byte split 60/40, total preserved
        let txns = vec![DmaTransaction {
            t_start: 160,
            duration: 400,
            bytes: 100,
            kind: TxnKind::Read,
            authenticity: Authenticity::Real,
        }];
        let trace = sample_counter(&txns, 4, 100_000_000);
        assert_eq!(trace.read_bytes, vec![60, 40]);
    }

    #[test]
    fn counter_empty_log() {
        let trace = sample_counter(&[], 4, 100_000_000);
        assert!(trace.is_empty());
        assert_eq!(trace.total_read(), 0);
    }

    #[test]
    fn counter_conserves_any_window_size() {
        let model = one_layer_model(64, 32, 3, 28);
        let npu = NpuConfig::default();
        let sim = simulate_inference(&model, &whole_schedule(&model), &npu).unwrap();
        let total: u64 = sim.txns.iter().map(|t| t.bytes).sum();
        for window_us in [1, 3, 4, 7, 40, 1000] {
            let t = sample_counter(&sim.txns, window_us, npu.clock_hz);
            assert_eq!(t.total_read() + t.total_write(), total, "window {window_us}us");
        }
    }

    #[test]
    fn doubling_bandwidth_never_slower() {
        let model = parse_catalog(
            "three",
            "0,conv,8,32,3,3,28,28,1\n1,activation,32,32,1,1,28,28,1\n2,conv,32,48,3,3,28,28,1\n",
            1,
        )
        .unwrap();
        let npu = NpuConfig::default();
        let schedule = tune(&model, &npu).unwrap();
        let base = simulate_total_cycles(&model, &schedule, &npu).unwrap();
        let fast = NpuConfig {
            dram_bandwidth_bps: npu.dram_bandwidth_bps * 2,
            ..npu
        };
        let quick = simulate_total_cycles(&model, &schedule, &fast).unwrap();
        assert!(quick <= base);
    }

    #[test]
    fn simulation_is_bit_reproducible() {
        let model = one_layer_model(64, 64, 3, 14);
        let npu = NpuConfig::default();
        let s = whole_schedule(&model);
        let a = simulate_inference(&model, &s, &npu).unwrap();
        let b = simulate_inference(&model, &s, &npu).unwrap();
        assert_eq!(a.txns, b.txns);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.total_cycles, b.total_cycles);
    }

    #[test]
    fn load_bound_layer_shows_tile_count() {
        // setup gaps far wider than a window: one local burst per tile
        let model = one_layer_model(64, 64, 3, 14);
        let npu = NpuConfig {
            dma_setup_cycles: 2000,
            ..NpuConfig::default()
        };
        let mut s = TileSchedule::empty();
        s.per_layer.insert(
            0,
            TileConfig {
                tile_oc: 8,
                ..TileConfig::whole(model.layer(0))
            },
        );
        let (num_tiles, _) = crate::tiles::tiles_for(model.layer(0), &s.per_layer[&0]).unwrap();
        let sim = simulate_inference(&model, &s, &npu).unwrap();
        // count byte bursts separated by silent gaps
        let mut bursts = 0;
        let mut in_burst = false;
        for &b in &sim.trace.read_bytes {
            if b > 0 && !in_burst {
                bursts += 1;
                in_burst = true;
            } else if b == 0 {
                in_burst = false;
            }
        }
        assert_eq!(bursts, num_tiles);
    }

    #[test]
    fn oversized_tile_rejected_by_capacity() {
        let model = one_layer_model(64, 64, 3, 14);
        let npu = NpuConfig {
            weight_scratchpad_bytes: 1024, // tile capacity 512 < 36864
            dma_burst_bytes: 256,
            ..NpuConfig::default()
        };
        let s = whole_schedule(&model);
        assert!(matches!(
            simulate_inference(&model, &s, &npu),
            Err(crate::error::Error::IllegalTile { .. })
        ));
    }

    #[test]
    fn layer_spans_contiguous_ordered() {
        let npu = NpuConfig::default();
        for name in ["alexnet", "resnet50"] {
            let model = crate::load_model(name).unwrap();
            let schedule = tune(&model, &npu).unwrap();
            let sim = simulate_inference(&model, &schedule, &npu).unwrap();
            assert_eq!(sim.layer_spans.len(), model.layers.len());
            let mut prev_end = 0usize;
            for (i, span) in sim.layer_spans.iter().enumerate() {
                assert_eq!(span.layer, i);
                assert_eq!(span.start_window, prev_end, "{name} layer {i}");
                assert!(span.end_window >= span.start_window);
                prev_end = span.end_window;
            }
        }
    }

    #[test]
    fn noise_amplitude_zero_is_identity() {
        let t = BandwidthTrace {
            window_us: 4,
            read_bytes: vec![1, 2, 3],
            write_bytes: vec![4, 5, 6],
        };
        assert_eq!(inject_noise(&t, 0.0, 9), t);
    }

    #[test]
    fn noise_same_seed_same_output() {
        let t = BandwidthTrace {
            window_us: 4,
            read_bytes: (0..100).collect(),
            write_bytes: (100..200).collect(),
        };
        assert_eq!(inject_noise(&t, 0.2, 77), inject_noise(&t, 0.2, 77));
    }

    #[test]
    fn noise_bounded_by_amplitude() {
        let t = BandwidthTrace {
            window_us: 4,
            read_bytes: (0..1000).map(|i| i * 13 % 4001).collect(),
            write_bytes: vec![0; 1000],
        };
        let noisy = inject_noise(&t, 0.1, 3);
        for (x, y) in t.read_bytes.iter().zip(&noisy.read_bytes) {
            let bound = 0.1 * *x as f64 + 0.5; // rounding slack
            assert!((*x as f64 - *y as f64).abs() <= bound, "{x} vs {y}");
        }
    }

    #[test]
    fn trace_csv_roundtrip() {
        let t = BandwidthTrace {
            window_us: 4,
            read_bytes: vec![10, 0, 500],
            write_bytes: vec![0, 7, 0],
        };
        let back = BandwidthTrace::from_csv(&t.to_csv()).unwrap();
        assert_eq!(t, back);
    }
}
