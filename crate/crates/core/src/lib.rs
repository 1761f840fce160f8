//! Simulator and trace-analysis toolkit for the memory-bandwidth utilization
//! side channel on tiled ML inference accelerators.
//!
//! The crate has three parts:
//!
//! * a deterministic simulator of tiled DNN inference on a VTA-like NPU that
//!   produces DMA transaction logs and windowed bandwidth traces
//!   ([`catalog`], [`tiles`], [`npu`], [`sim`], [`tuner`]);
//! * the observer side: sliding-window features, Haar wavelet coefficients,
//!   bag-of-words encoding, layer-boundary detection and layer-type
//!   classification ([`features`], [`codebook`], [`detector`], [`classifier`]);
//! * two countermeasures: constant-tile scheduling ([`tuner`]) and
//!   constant-bandwidth traffic shaping ([`shaper`]).
//!
//! Numeric analysis kernels are generic over the scalar type via
//! [`Real`]; the simulator itself works in exact integer cycles and bytes.

pub mod catalog;
pub mod classifier;
pub mod codebook;
pub mod detector;
pub mod error;
pub mod features;
pub mod npu;
pub mod rng;
pub mod shaper;
pub mod sim;
pub mod tiles;
pub mod tuner;

use std::fmt::{Debug, Display};

/// Floating-point scalar for the analysis kernels: f32 or f64.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::NumCast + Debug + Display + 'static
{
}
impl Real for f32 {}
impl Real for f64 {}

/// Default scalar used by the shipped pipeline.
pub type Scalar = f64;

pub use catalog::{load_model, load_model_with, shipped_models, LayerKind, LayerSpec, ModelSpec};
pub use error::{Error, Result};
pub use npu::NpuConfig;
pub use sim::{
    inject_noise, sample_counter, simulate_inference, BandwidthTrace, DmaTransaction, SimResult,
};
pub use tiles::{enumerate_tile_configs, label_boundaries, tiles_for, BoundaryClass, TileConfig};
pub use tuner::{constant_tile_schedule, explore, tune, TileSchedule};
