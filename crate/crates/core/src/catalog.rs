//! Model catalogs: DNN architectures as per-layer dimension records.
//!
//! A catalog is a line-oriented text file, one layer per line:
//!
//! ```text
//! id,kind,in_c,out_c,kh,kw,in_h,in_w,stride
//! ```
//!
//! `kind` is one of `conv`, `dense`, `pool`, `activation`, `residual_add`;
//! lines starting with `#` are comments. Output spatial dims follow
//! same-padding semantics: `out = ceil(in / stride)`. Only `conv` and `dense`
//! layers load weights; the others contribute compute time (and, for `pool`,
//! an output store) but no read traffic.
//!
//! Six catalogs ship with the crate. Their weight-layer counts match the
//! traced segment counts of the deployment they model (AlexNet 5, VGG11 7,
//! VGG16 12, ResNet18 24, ResNet34 37, ResNet50 53); where that required
//! trimming or padding a textbook definition (host-side first conv or
//! classifier head, a truncated tail, an extra block) the catalog header says
//! so.

use crate::error::{Error, Result};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Conv,
    Dense,
    Pool,
    Activation,
    ResidualAdd,
}

impl LayerKind {
    pub fn loads_weights(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Dense)
    }

    /// Layers that materialize a new output tensor emit a store; activation
    /// and residual adds run in place on the accumulator.
    pub fn stores_output(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Dense | LayerKind::Pool)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Dense => "dense",
            LayerKind::Pool => "pool",
            LayerKind::Activation => "activation",
            LayerKind::ResidualAdd => "residual_add",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "conv" => LayerKind::Conv,
            "dense" => LayerKind::Dense,
            "pool" => LayerKind::Pool,
            "activation" => LayerKind::Activation,
            "residual_add" => LayerKind::ResidualAdd,
            _ => return None,
        })
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One layer of a model: dimensions only, no weights or activations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub id: usize,
    pub kind: LayerKind,
    pub in_channels: u32,
    pub out_channels: u32,
    pub kernel_h: u32,
    pub kernel_w: u32,
    pub input_h: u32,
    pub input_w: u32,
    pub stride: u32,
    /// Bytes per weight element, copied from the owning model.
    pub element_size: u32,
}

impl LayerSpec {
    pub fn out_h(&self) -> u32 {
        self.input_h.div_ceil(self.stride)
    }

    pub fn out_w(&self) -> u32 {
        self.input_w.div_ceil(self.stride)
    }

    /// Output positions per channel.
    pub fn out_spatial(&self) -> u64 {
        self.out_h() as u64 * self.out_w() as u64
    }

    /// Total weight bytes. Zero for layers that do not load weights.
    pub fn weight_bytes(&self) -> u64 {
        if !self.kind.loads_weights() {
            return 0;
        }
        self.weight_elems() * self.element_size as u64
    }

    /// Total weight elements for conv/dense layers.
    pub fn weight_elems(&self) -> u64 {
        self.in_channels as u64
            * self.out_channels as u64
            * self.kernel_h as u64
            * self.kernel_w as u64
    }

    /// Output tensor size in bytes (what a store transaction moves).
    pub fn output_bytes(&self) -> u64 {
        self.out_spatial() * self.out_channels as u64 * self.element_size as u64
    }

    /// Multiply-accumulates for the whole layer (conv/dense).
    pub fn total_macs(&self) -> u64 {
        self.out_spatial() * self.weight_elems()
    }

    /// Elementwise ALU operations for pool/activation/residual_add layers.
    pub fn alu_ops(&self) -> u64 {
        match self.kind {
            LayerKind::Pool => {
                self.out_spatial()
                    * self.out_channels as u64
                    * (self.kernel_h as u64 * self.kernel_w as u64)
            }
            LayerKind::Activation => self.out_spatial() * self.out_channels as u64,
            // one add per output element, both inputs already on chip
            LayerKind::ResidualAdd => self.out_spatial() * self.out_channels as u64,
            LayerKind::Conv | LayerKind::Dense => 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::InvalidLayer {
            layer: self.id,
            msg,
        };
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(err("channel counts must be positive".into()));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 {
            return Err(err("kernel dims must be positive".into()));
        }
        if self.input_h == 0 || self.input_w == 0 || self.stride == 0 {
            return Err(err("spatial dims and stride must be positive".into()));
        }
        if self.kind.loads_weights() && self.weight_bytes() == 0 {
            return Err(err("weight-loading layer with zero weight bytes".into()));
        }
        match self.kind {
            LayerKind::Pool | LayerKind::Activation | LayerKind::ResidualAdd => {
                if self.in_channels != self.out_channels {
                    return Err(err(format!(
                        "{} layers must preserve channel count",
                        self.kind
                    )));
                }
            }
            LayerKind::Dense => {
                if self.input_h != 1 || self.input_w != 1 {
                    return Err(err("dense layers operate on 1x1 inputs".into()));
                }
            }
            LayerKind::Conv => {}
        }
        Ok(())
    }
}

/// A full model: ordered layers plus the quantized element width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub element_size: u32,
}

impl ModelSpec {
    /// Indices of weight-loading layers, in execution order.
    pub fn weight_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.kind.loads_weights())
            .map(|l| l.id)
            .collect()
    }

    /// Number of adjacent weight-layer boundaries ("all" in boundary reports).
    pub fn boundary_count(&self) -> usize {
        self.weight_layers().len().saturating_sub(1)
    }

    pub fn layer(&self, id: usize) -> &LayerSpec {
        &self.layers[id]
    }

    /// Dimension compatibility along the execution order. Residual-shortcut
    /// projections (a 1x1 conv immediately followed by `residual_add`) read
    /// the block input rather than the previous layer's output, so adjacency
    /// checks skip across them and across the merge point itself.
    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidLayer {
                layer: 0,
                msg: "model has no layers".into(),
            });
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.id != i {
                return Err(Error::InvalidLayer {
                    layer: l.id,
                    msg: format!("layer ids must be consecutive from 0, found {} at {}", l.id, i),
                });
            }
            l.validate()?;
        }
        for w in self.layers.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            if prev.kind == LayerKind::ResidualAdd || next.kind == LayerKind::ResidualAdd {
                continue;
            }
            if self.is_shortcut_projection(next.id) || self.is_shortcut_projection(prev.id) {
                continue;
            }
            if prev.out_channels != next.in_channels {
                return Err(Error::InvalidLayer {
                    layer: next.id,
                    msg: format!(
                        "expects {} input channels but layer {} produces {}",
                        next.in_channels, prev.id, prev.out_channels
                    ),
                });
            }
            if next.kind != LayerKind::Dense
                && (prev.out_h() != next.input_h || prev.out_w() != next.input_w)
            {
                return Err(Error::InvalidLayer {
                    layer: next.id,
                    msg: format!(
                        "expects {}x{} input but layer {} produces {}x{}",
                        next.input_h,
                        next.input_w,
                        prev.id,
                        prev.out_h(),
                        prev.out_w()
                    ),
                });
            }
        }
        Ok(())
    }

    fn is_shortcut_projection(&self, id: usize) -> bool {
        let l = &self.layers[id];
        l.kind == LayerKind::Conv
            && l.kernel_h == 1
            && l.kernel_w == 1
            && self
                .layers
                .get(id + 1)
                .is_some_and(|n| n.kind == LayerKind::ResidualAdd)
    }
}

/// Default quantized element width in bytes (8-bit weights).
pub const DEFAULT_ELEMENT_SIZE: u32 = 1;

const SHIPPED: &[(&str, &str)] = &[
    ("alexnet", include_str!("../data/alexnet.catalog")),
    ("vgg11", include_str!("../data/vgg11.catalog")),
    ("vgg16", include_str!("../data/vgg16.catalog")),
    ("resnet18", include_str!("../data/resnet18.catalog")),
    ("resnet34", include_str!("../data/resnet34.catalog")),
    ("resnet50", include_str!("../data/resnet50.catalog")),
];

/// Names of the six shipped catalogs, in canonical order.
pub fn shipped_models() -> Vec<&'static str> {
    SHIPPED.iter().map(|(n, _)| *n).collect()
}

/// Load a model by shipped name, or from a catalog file path.
pub fn load_model(name_or_path: &str) -> Result<ModelSpec> {
    load_model_with(name_or_path, DEFAULT_ELEMENT_SIZE)
}

/// Same as [`load_model`] with an explicit element width.
pub fn load_model_with(name_or_path: &str, element_size: u32) -> Result<ModelSpec> {
    if element_size == 0 {
        return Err(Error::InvalidParam("element_size must be positive".into()));
    }
    if let Some((name, text)) = SHIPPED.iter().find(|(n, _)| *n == name_or_path) {
        return parse_catalog(name, text, element_size);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::UnknownModel(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name_or_path.to_string());
    parse_catalog(&stem, &text, element_size)
}

/// Parse catalog text. Reports the offending line and field on error.
pub fn parse_catalog(name: &str, text: &str, element_size: u32) -> Result<ModelSpec> {
    let mut layers = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let cat_err = |msg: String| Error::Catalog {
            file: name.to_string(),
            line: lineno + 1,
            msg,
        };
        if fields.len() != 9 {
            return Err(cat_err(format!("expected 9 fields, got {}", fields.len())));
        }
        let num = |idx: usize, what: &str| -> Result<u32> {
            fields[idx].parse::<u32>().map_err(|_| {
                Error::Catalog {
                    file: name.to_string(),
                    line: lineno + 1,
                    msg: format!("field '{what}' is not a non-negative integer: '{}'", fields[idx]),
                }
            })
        };
        let kind = LayerKind::parse(fields[1])
            .ok_or_else(|| cat_err(format!("unknown layer kind '{}'", fields[1])))?;
        layers.push(LayerSpec {
            id: num(0, "id")? as usize,
            kind,
            in_channels: num(2, "in_c")?,
            out_channels: num(3, "out_c")?,
            kernel_h: num(4, "kh")?,
            kernel_w: num(5, "kw")?,
            input_h: num(6, "in_h")?,
            input_w: num(7, "in_w")?,
            stride: num(8, "stride")?,
            element_size,
        });
    }
    let model = ModelSpec {
        name: name.to_string(),
        layers,
        element_size,
    };
    model.validate()?;
    Ok(model)
}
