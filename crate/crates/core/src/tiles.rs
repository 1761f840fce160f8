//! Weight tiling: legal blocking factors, tile counts and byte footprints,
//! and the adjacent-boundary taxonomy derived from a schedule.

use crate::catalog::{LayerSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::npu::NpuConfig;
use crate::tuner::TileSchedule;

/// Blocking factors for one layer's weight tensor. Channel factors split the
/// weight tensor into the blocks the DMA actually moves; the spatial factors
/// chunk compute within a resident tile and never change read traffic, so the
/// enumerator pins them to the whole output extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileConfig {
    pub tile_oc: u32,
    pub tile_ic: u32,
    pub tile_h: u32,
    pub tile_w: u32,
}

impl TileConfig {
    /// Whole-layer tile: one load for the entire weight tensor.
    pub fn whole(layer: &LayerSpec) -> Self {
        Self {
            tile_oc: layer.out_channels,
            tile_ic: layer.in_channels,
            tile_h: layer.out_h(),
            tile_w: layer.out_w(),
        }
    }

    /// Padded bytes one tile of this shape occupies for `layer`.
    pub fn tile_bytes(&self, layer: &LayerSpec) -> u64 {
        self.tile_oc as u64
            * self.tile_ic as u64
            * layer.kernel_h as u64
            * layer.kernel_w as u64
            * layer.element_size as u64
    }

    /// True when every factor divides its dimension exactly.
    pub fn exact_for(&self, layer: &LayerSpec) -> bool {
        layer.out_channels.is_multiple_of(self.tile_oc)
            && layer.in_channels.is_multiple_of(self.tile_ic)
            && layer.out_h().is_multiple_of(self.tile_h)
            && layer.out_w().is_multiple_of(self.tile_w)
    }

    /// Clamp factors to the dims of `layer`, for applying one blocking choice
    /// across heterogeneous layers.
    pub fn clamped_to(&self, layer: &LayerSpec) -> Self {
        Self {
            tile_oc: self.tile_oc.min(layer.out_channels),
            tile_ic: self.tile_ic.min(layer.in_channels),
            tile_h: layer.out_h(),
            tile_w: layer.out_w(),
        }
    }
}

impl std::fmt::Display for TileConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "oc{}xic{}xh{}xw{}",
            self.tile_oc, self.tile_ic, self.tile_h, self.tile_w
        )
    }
}

fn divisors_at_least(dim: u32, floor: u32) -> Vec<u32> {
    let lo = floor.min(dim);
    (1..=dim).filter(|d| dim.is_multiple_of(*d) && *d >= lo).collect()
}

/// All legal tile configs for a weight-loading layer: channel factors run
/// over the divisors of the channel dims (at least `block_granularity` unless
/// the dim itself is smaller), filtered by the double-buffered scratchpad
/// capacity. Deterministic, sorted ascending by (tile_oc, tile_ic).
pub fn enumerate_tile_configs(layer: &LayerSpec, npu: &NpuConfig) -> Result<Vec<TileConfig>> {
    if !layer.kind.loads_weights() {
        return Err(Error::NotWeightLayer {
            layer: layer.id,
            kind: layer.kind.to_string(),
        });
    }
    let cap = npu.tile_capacity();
    let mut out = Vec::new();
    for &toc in &divisors_at_least(layer.out_channels, npu.block_granularity) {
        for &tic in &divisors_at_least(layer.in_channels, npu.block_granularity) {
            let cfg = TileConfig {
                tile_oc: toc,
                tile_ic: tic,
                tile_h: layer.out_h(),
                tile_w: layer.out_w(),
            };
            if cfg.tile_bytes(layer) <= cap {
                out.push(cfg);
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::ScratchpadTooSmall {
            layer: layer.id,
            capacity: cap,
        });
    }
    Ok(out)
}

/// Tile count and padded bytes per tile for a layer under `cfg`.
///
/// Non-dividing factors are allowed: the trailing blocks are zero-padded to
/// the full tile size, so every load transaction moves the same
/// `bytes_per_tile`. `num_tiles * bytes_per_tile >= weight_bytes`, with
/// equality exactly when the channel factors divide.
pub fn tiles_for(layer: &LayerSpec, cfg: &TileConfig) -> Result<(u64, u64)> {
    if !layer.kind.loads_weights() {
        return Err(Error::NotWeightLayer {
            layer: layer.id,
            kind: layer.kind.to_string(),
        });
    }
    let bad = |msg: String| Error::IllegalTile {
        layer: layer.id,
        msg,
    };
    if cfg.tile_oc == 0 || cfg.tile_ic == 0 || cfg.tile_h == 0 || cfg.tile_w == 0 {
        return Err(bad("zero blocking factor".into()));
    }
    if cfg.tile_oc > layer.out_channels || cfg.tile_ic > layer.in_channels {
        return Err(bad(format!(
            "channel factors {}x{} exceed layer dims {}x{}",
            cfg.tile_oc, cfg.tile_ic, layer.out_channels, layer.in_channels
        )));
    }
    if cfg.tile_h > layer.out_h() || cfg.tile_w > layer.out_w() {
        return Err(bad("spatial factors exceed output dims".into()));
    }
    let num = (layer.out_channels.div_ceil(cfg.tile_oc) as u64)
        * (layer.in_channels.div_ceil(cfg.tile_ic) as u64);
    Ok((num, cfg.tile_bytes(layer)))
}

/// Adjacent weight-layer boundary classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryClass {
    /// Different bytes per tile: the observable traffic shape changes.
    T1DiffTileSize,
    /// Same bytes per tile, different tile count.
    T2SameSizeDiffCount,
    /// Identical tile size and count.
    T3Identical,
}

impl BoundaryClass {
    pub fn is_easy(self) -> bool {
        matches!(self, BoundaryClass::T1DiffTileSize)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryClass::T1DiffTileSize => "T1",
            BoundaryClass::T2SameSizeDiffCount => "T2",
            BoundaryClass::T3Identical => "T3",
        }
    }
}

/// Classified boundary between two adjacent weight-loading layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryLabel {
    pub between: (usize, usize),
    pub class: BoundaryClass,
}

/// Classify every adjacent weight-layer pair of `model` under `schedule`.
/// The class is a pure function of the two (bytes_per_tile, num_tiles) pairs.
pub fn label_boundaries(model: &ModelSpec, schedule: &TileSchedule) -> Result<Vec<BoundaryLabel>> {
    let weight_ids = model.weight_layers();
    let mut shapes = Vec::with_capacity(weight_ids.len());
    for &id in &weight_ids {
        let cfg = schedule
            .per_layer
            .get(&id)
            .ok_or(Error::ScheduleGap { layer: id })?;
        let (num, bytes) = tiles_for(model.layer(id), cfg)?;
        shapes.push((id, num, bytes));
    }
    Ok(shapes
        .windows(2)
        .map(|w| {
            let (ia, na, ba) = w[0];
            let (ib, nb, bb) = w[1];
            let class = if ba != bb {
                BoundaryClass::T1DiffTileSize
            } else if na != nb {
                BoundaryClass::T2SameSizeDiffCount
            } else {
                BoundaryClass::T3Identical
            };
            BoundaryLabel {
                between: (ia, ib),
                class,
            }
        })
        .collect())
}
