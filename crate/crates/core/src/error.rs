use thiserror::Error;

/// Errors produced by catalog parsing, tiling, simulation and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model '{0}' (shipped catalogs: alexnet, vgg11, vgg16, resnet18, resnet34, resnet50)")]
    UnknownModel(String),

    #[error("catalog {file}:{line}: {msg}")]
    Catalog {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("layer {layer}: {msg}")]
    InvalidLayer { layer: usize, msg: String },

    #[error("layer {layer} has kind {kind} which does not load weights")]
    NotWeightLayer { layer: usize, kind: String },

    #[error("tile config illegal for layer {layer}: {msg}")]
    IllegalTile { layer: usize, msg: String },

    #[error("scratchpad of {capacity} bytes cannot hold a single tile of layer {layer}")]
    ScratchpadTooSmall { layer: usize, capacity: u64 },

    #[error("no tile config is legal for every layer of '{model}'")]
    NoCommonConfig { model: String },

    #[error("schedule does not cover weight layer {layer}")]
    ScheduleGap { layer: usize },

    #[error("shaper target {target_bps} B/s infeasible: simulation exceeded {cap} cycles")]
    InfeasibleTarget { target_bps: u64, cap: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dataset needs at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("feature layout mismatch: expected {expected} columns, got {got}")]
    LayoutMismatch { expected: usize, got: usize },

    #[error("classifier dump corrupt: {0}")]
    BadModelDump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
