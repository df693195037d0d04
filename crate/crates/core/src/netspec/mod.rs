//! Network topologies, trained weights and datasets.
//!
//! A network file is TOML: top-level `name`, `input_shape = [rows, cols]`,
//! `input_maps`, `class_count`, `precision` (4, 8 or 32 for float) and an
//! ordered `[[layers]]` list. See `presets/networks/` for complete examples.

mod dataset;
mod weights;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cenn::{Matrix3, ZERO3};
use crate::error::{Error, Result};
use crate::grid::Shape;
use crate::nonideal::QuantSpec;
use crate::templates::{DownsampleMode, MaxNeighborhood, PoolWindow};

pub use dataset::{denormalize_byte, load_idx_dataset, normalize_byte, write_idx_images, write_idx_labels, Dataset};
pub use weights::{load_weights, read_weight_blob, save_weights, write_weight_blob, WEIGHT_MAGIC};

/// Arithmetic precision of a layer or network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Precision {
    Bits(u32),
    Float32,
}

impl Precision {
    pub fn quant(self) -> Option<QuantSpec> {
        match self {
            Precision::Bits(b) => QuantSpec::new(b).ok(),
            Precision::Float32 => None,
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Precision::Bits(b) => b,
            Precision::Float32 => 32,
        }
    }
}

impl TryFrom<u32> for Precision {
    type Error = String;

    fn try_from(v: u32) -> Result<Self, String> {
        match v {
            32 => Ok(Precision::Float32),
            b if (QuantSpec::MIN_BITS..=QuantSpec::MAX_BITS).contains(&b) => Ok(Precision::Bits(b)),
            other => Err(format!("precision must be 2..=16 bits or 32 (float), got {other}")),
        }
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.bits()
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::Bits(b) => write!(f, "{b}-bit"),
            Precision::Float32 => f.write_str("float32"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Relu,
    Pool,
    Fc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReluKind {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    #[default]
    MaxLinear,
    Avg,
    Nonlinear,
}

impl PoolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolKind::MaxLinear => "max_linear",
            PoolKind::Avg => "avg",
            PoolKind::Nonlinear => "nonlinear",
        }
    }
}

impl FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_linear" => Ok(PoolKind::MaxLinear),
            "avg" => Ok(PoolKind::Avg),
            "nonlinear" => Ok(PoolKind::Nonlinear),
            other => Err(Error::Domain(format!(
                "unknown pool kind '{other}' (expected max_linear, avg or nonlinear)"
            ))),
        }
    }
}

/// `none`, `half` or `half_floor` in network files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsampleSetting {
    #[default]
    None,
    Half,
    HalfFloor,
}

impl DownsampleSetting {
    pub fn mode(self) -> Option<DownsampleMode> {
        match self {
            DownsampleSetting::None => None,
            DownsampleSetting::Half => Some(DownsampleMode::Half),
            DownsampleSetting::HalfFloor => Some(DownsampleMode::HalfFloor),
        }
    }
}

/// Default GLOBMAX horizon, long enough for a maximum to fill its 2x2 group.
pub const DEFAULT_GLOBMAX_T_MAX: f64 = 30.0;

/// One `[[layers]]` entry as written in a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDecl {
    pub name: String,
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_maps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_maps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_shape: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relu: Option<ReluKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<PoolWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neighborhood: Option<MaxNeighborhood>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downsample: Option<DownsampleSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Precision>,
}

/// Whole network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDecl {
    pub name: String,
    pub input_shape: [usize; 2],
    #[serde(default = "one")]
    pub input_maps: usize,
    pub class_count: usize,
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    pub layers: Vec<LayerDecl>,
}

fn one() -> usize {
    1
}

/// 3x3 kernels `[out][in]` plus one bias per output map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub kernels: Vec<Vec<Matrix3>>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn zeros(out_maps: usize, in_maps: usize) -> Self {
        Self {
            kernels: vec![vec![ZERO3; in_maps]; out_maps],
            bias: vec![0.0; out_maps],
        }
    }
}

/// Dense `[out][in]` matrix plus bias. Inputs are flattened map-major, then
/// row-major within a map.
#[derive(Debug, Clone, PartialEq)]
pub struct FcWeights {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl FcWeights {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weights: vec![vec![0.0; inp]; out],
            bias: vec![0.0; out],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    Conv(ConvWeights),
    Relu(ReluKind),
    Pool {
        kind: PoolKind,
        window: PoolWindow,
        neighborhood: MaxNeighborhood,
        downsample: Option<DownsampleMode>,
        t_max: f64,
    },
    Fc(FcWeights),
}

/// A validated layer with resolved shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub op: LayerOp,
    pub in_maps: usize,
    pub out_maps: usize,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub precision: Precision,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self.op {
            LayerOp::Conv(_) => LayerKind::Conv,
            LayerOp::Relu(_) => LayerKind::Relu,
            LayerOp::Pool { .. } => LayerKind::Pool,
            LayerOp::Fc(_) => LayerKind::Fc,
        }
    }

    /// Number of weight values this layer stores in a weight blob.
    pub fn weight_count(&self) -> usize {
        match &self.op {
            LayerOp::Conv(_) => self.out_maps * self.in_maps * 9 + self.out_maps,
            LayerOp::Fc(_) => self.out_maps * self.fc_inputs() + self.out_maps,
            _ => 0,
        }
    }

    pub fn fc_inputs(&self) -> usize {
        self.in_maps * self.in_shape.cells()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    pub input_shape: Shape,
    pub input_maps: usize,
    pub class_count: usize,
    pub precision: Precision,
    pub layers: Vec<Layer>,
    /// Weight blob referenced by the network file, resolved against its
    /// directory.
    pub weights_file: Option<PathBuf>,
}

fn layer_err(layer: &str, message: impl Into<String>) -> Error {
    Error::Layer {
        layer: layer.to_string(),
        message: message.into(),
    }
}

impl NetworkSpec {
    /// Validates a parsed declaration and resolves every layer shape.
    pub fn from_decl(decl: NetworkDecl) -> Result<Self> {
        let input_shape = Shape::new(decl.input_shape[0], decl.input_shape[1]);
        if input_shape.cells() == 0 || decl.input_maps == 0 || decl.class_count == 0 {
            return Err(Error::Domain(format!(
                "network '{}': input shape, input maps and class count must be positive",
                decl.name
            )));
        }
        if decl.layers.is_empty() {
            return Err(Error::Domain(format!("network '{}' has no layers", decl.name)));
        }
        let mut maps = decl.input_maps;
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(decl.layers.len());
        let count = decl.layers.len();
        for (idx, l) in decl.layers.into_iter().enumerate() {
            let name = l.name.as_str();
            if let Some(m) = l.in_maps {
                if m != maps {
                    return Err(layer_err(name, format!("declares {m} input maps but receives {maps}")));
                }
            }
            if let Some([r, c]) = l.map_shape {
                if Shape::new(r, c) != shape {
                    return Err(layer_err(name, format!("declares {r}x{c} maps but receives {shape}")));
                }
            }
            let precision = l.precision.unwrap_or(decl.precision);
            let mut out_maps = maps;
            let mut out_shape = shape;
            let op = match l.kind {
                LayerKind::Conv => {
                    if let Some(k) = l.kernel {
                        if k != [3, 3] {
                            return Err(layer_err(
                                name,
                                format!("kernel {}x{} unsupported; only 3x3 kernels map onto a CeNN", k[0], k[1]),
                            ));
                        }
                    }
                    out_maps = l.out_maps.ok_or_else(|| layer_err(name, "conv layer needs out_maps"))?;
                    LayerOp::Conv(ConvWeights::zeros(out_maps, maps))
                }
                LayerKind::Relu => LayerOp::Relu(l.relu.unwrap_or_default()),
                LayerKind::Pool => {
                    let kind = l.pool.unwrap_or_default();
                    let downsample = l.downsample.unwrap_or_default().mode();
                    if let Some(mode) = downsample {
                        out_shape = mode.output_shape(shape).map_err(|e| layer_err(name, e.to_string()))?;
                    }
                    let t_max = l.t_max.unwrap_or(DEFAULT_GLOBMAX_T_MAX);
                    if !(t_max.is_finite() && t_max > 0.0) {
                        return Err(layer_err(name, "t_max must be positive"));
                    }
                    LayerOp::Pool {
                        kind,
                        window: l.window.unwrap_or(PoolWindow::W2x2),
                        neighborhood: l.neighborhood.unwrap_or_default(),
                        downsample,
                        t_max,
                    }
                }
                LayerKind::Fc => {
                    if idx + 1 != count {
                        return Err(layer_err(name, "fc is only supported as the final layer"));
                    }
                    out_maps = l.out_maps.ok_or_else(|| layer_err(name, "fc layer needs out_maps"))?;
                    out_shape = Shape::new(1, 1);
                    LayerOp::Fc(FcWeights::zeros(out_maps, maps * shape.cells()))
                }
            };
            if l.kind != LayerKind::Conv && l.kind != LayerKind::Fc {
                if let Some(o) = l.out_maps {
                    if o != maps {
                        return Err(layer_err(name, format!("{o} output maps but elementwise layers keep {maps}")));
                    }
                }
            }
            if out_maps == 0 || out_shape.cells() == 0 {
                return Err(layer_err(name, "layer produces an empty output"));
            }
            layers.push(Layer {
                name: l.name,
                op,
                in_maps: maps,
                out_maps,
                in_shape: shape,
                out_shape,
                precision,
            });
            maps = out_maps;
            shape = out_shape;
        }
        if maps != decl.class_count {
            let last = &layers[layers.len() - 1].name;
            return Err(layer_err(
                last,
                format!("final layer yields {maps} outputs but class_count is {}", decl.class_count),
            ));
        }
        Ok(Self {
            name: decl.name,
            input_shape,
            input_maps: decl.input_maps,
            class_count: decl.class_count,
            precision: decl.precision,
            layers,
            weights_file: decl.weights,
        })
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let decl: NetworkDecl = toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string().trim_end()))?;
        Self::from_decl(decl)
    }

    /// Shipped topology by name.
    pub fn preset(name: &str) -> Result<Self> {
        let text = presets::network(name).ok_or_else(|| {
            Error::Domain(format!(
                "unknown network preset '{name}' (available: {})",
                presets::NETWORKS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))
        })?;
        Self::parse(text, name)
    }

    pub fn has_fc(&self) -> bool {
        self.layers.iter().any(|l| l.kind() == LayerKind::Fc)
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(Layer::weight_count).sum()
    }

    /// Largest map the hardware must hold.
    pub fn max_map_shape(&self) -> Shape {
        self.layers.iter().fold(self.input_shape, |acc, l| {
            Shape::new(acc.rows.max(l.in_shape.rows), acc.cols.max(l.in_shape.cols))
        })
    }

    /// Flat weight vector in blob order.
    pub fn flat_weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weight_count());
        for l in &self.layers {
            match &l.op {
                LayerOp::Conv(w) => {
                    for per_out in &w.kernels {
                        for k in per_out {
                            out.extend(k.iter().flatten());
                        }
                    }
                    out.extend(&w.bias);
                }
                LayerOp::Fc(w) => {
                    for row in &w.weights {
                        out.extend(row);
                    }
                    out.extend(&w.bias);
                }
                _ => {}
            }
        }
        out
    }

    /// Replaces every weight from a flat vector in blob order.
    pub fn set_flat_weights(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.weight_count();
        if values.len() != expected {
            return Err(Error::WeightShape {
                layer: self.name.clone(),
                expected: format!("{expected} values"),
                actual: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("weight {i} is not finite")));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            match &mut l.op {
                LayerOp::Conv(w) => {
                    for per_out in &mut w.kernels {
                        for k in per_out.iter_mut() {
                            for v in k.iter_mut().flatten() {
                                *v = it.next().expect("length checked");
                            }
                        }
                    }
                    for b in &mut w.bias {
                        *b = it.next().expect("length checked");
                    }
                }
                LayerOp::Fc(w) => {
                    for row in &mut w.weights {
                        for v in row.iter_mut() {
                            *v = it.next().expect("length checked");
                        }
                    }
                    for b in &mut w.bias {
                        *b = it.next().expect("length checked");
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Seeded random weights, uniform with fan-in scaling.
    pub fn randomize(&mut self, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for l in &mut self.layers {
            match &mut l.op {
                LayerOp::Conv(w) => {
                    let fan_in = 9.0 * l.in_maps as f64;
                    let s = 1.5 / fan_in.sqrt();
                    for per_out in &mut w.kernels {
                        for k in per_out.iter_mut() {
                            for v in k.iter_mut().flatten() {
                                *v = rng.gen_range(-s..s);
                            }
                        }
                    }
                    for b in &mut w.bias {
                        *b = rng.gen_range(-0.1..0.1);
                    }
                }
                LayerOp::Fc(w) => {
                    let s = 1.5 / (l.in_maps as f64 * l.in_shape.cells() as f64).sqrt();
                    for row in &mut w.weights {
                        for v in row.iter_mut() {
                            *v = rng.gen_range(-s..s);
                        }
                    }
                    for b in &mut w.bias {
                        *b = rng.gen_range(-0.1..0.1);
                    }
                }
                _ => {}
            }
        }
    }

    /// Copy with every weight rounded to the grid of `q`.
    pub fn quantized(&self, q: QuantSpec) -> Self {
        let mut out = self.clone();
        let flat: Vec<f64> = self.flat_weights().into_iter().map(|v| q.quantize(v)).collect();
        out.set_flat_weights(&flat).expect("same layout");
        out
    }

    /// Copy with a different pooling kind on every pool layer.
    pub fn with_pool_kind(&self, kind: PoolKind) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            if let LayerOp::Pool { kind: k, .. } = &mut l.op {
                *k = kind;
            }
        }
        out
    }

    /// Copy with every ReLU realized by `kind`.
    pub fn with_relu_kind(&self, kind: ReluKind) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            if let LayerOp::Relu(k) = &mut l.op {
                *k = kind;
            }
        }
        out
    }
}

/// Reads and validates a network file. A relative `weights` entry is resolved
/// against the file's directory but not loaded.
pub fn load_network(path: &Path) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut net = NetworkSpec::parse(&text, &path.display().to_string())?;
    if let Some(w) = &net.weights_file {
        if w.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            net.weights_file = Some(base.join(w));
        }
    }
    Ok(net)
}

pub mod presets {
    //! Network files compiled into the library.

    pub const NETWORKS: &[(&str, &str)] = &[
        ("mnist_design1", include_str!("../../../../presets/networks/mnist_design1.toml")),
        ("mnist_design2", include_str!("../../../../presets/networks/mnist_design2.toml")),
        (
            "cifar_alexnet_c96",
            include_str!("../../../../presets/networks/cifar_alexnet_c96.toml"),
        ),
        (
            "cifar_alexnet_c64",
            include_str!("../../../../presets/networks/cifar_alexnet_c64.toml"),
        ),
        (
            "cifar_alexnet_c64_small",
            include_str!("../../../../presets/networks/cifar_alexnet_c64_small.toml"),
        ),
    ];

    pub fn network(name: &str) -> Option<&'static str> {
        NETWORKS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }
}

#[cfg(test)]
mod tests;
