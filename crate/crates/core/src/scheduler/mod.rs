//! Lowering of a network onto N physical CeNN arrays and trace execution.
//!
//! A compiled [`CeNNProgram`] is a flat, ordered list of [`TraceEvent`]s. Each
//! event belongs to a *phase*: events in one phase run concurrently on
//! different arrays, and phases run back to back. Every array holds an input
//! plane `u` and a cell plane `y`; analog memory buffers hold whole maps.
//!
//! Event semantics, per array:
//! - `MemRead`: copy a buffer region into both `u` and `y`.
//! - `TemplateApply`: `y = settle(u)` over the region.
//! - `Accumulate`: `y = sat(y + src)` where `src` is another array's `y` or a
//!   memory buffer.
//! - `MemWrite`: copy `y` of the source array (or a network input channel) into
//!   a buffer, optionally keeping one cell per 2x2 group.

mod compile;
mod exec;

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::cenn::Template;
use crate::error::{Error, Result};
use crate::grid::{Region, Shape};
use crate::netspec::{LayerKind, Precision};
use crate::templates::DownsampleMode;

pub use compile::compile;
pub use exec::{execute, execute_batch, ExecOptions, ExecutionStats, Executor, Inference};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub n_arrays: usize,
    pub array_shape: Shape,
    pub mem_slots_per_cell: usize,
    pub precision: Precision,
    /// Time-multiplex maps larger than an array over tiles.
    #[serde(default = "yes")]
    pub allow_tiling: bool,
}

fn yes() -> bool {
    true
}

impl HardwareConfig {
    pub fn new(n_arrays: usize, array_shape: Shape, mem_slots_per_cell: usize, precision: Precision) -> Result<Self> {
        let hw = Self {
            n_arrays,
            array_shape,
            mem_slots_per_cell,
            precision,
            allow_tiling: true,
        };
        hw.validate()?;
        Ok(hw)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_arrays == 0 || self.array_shape.cells() == 0 || self.mem_slots_per_cell == 0 {
            return Err(Error::Domain(
                "hardware needs at least one array, one cell and one memory slot".into(),
            ));
        }
        Ok(())
    }

    /// Four 28x28 arrays, as used for the MNIST networks.
    pub fn mnist() -> Self {
        Self::new(4, Shape::new(28, 28), 8, Precision::Bits(4)).expect("valid")
    }

    /// Four 32x32 arrays with enough memory for the widest AlexNet layer.
    pub fn cifar() -> Self {
        Self::new(4, Shape::new(32, 32), 256, Precision::Bits(4)).expect("valid")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mnist" => Ok(Self::mnist()),
            "cifar" => Ok(Self::cifar()),
            other => Err(Error::Domain(format!("unknown hardware preset '{other}' (available: mnist, cifar)"))),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let hw: Self = toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string().trim_end()))?;
        hw.validate()?;
        Ok(hw)
    }

    /// Hardware sized for a network: the MNIST preset for inputs up to 28x28,
    /// the CIFAR preset otherwise.
    pub fn for_network(net: &crate::netspec::NetworkSpec) -> Self {
        if net.max_map_shape().fits_in(Shape::new(28, 28)) {
            Self::mnist()
        } else {
            Self::cifar()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TemplateId(pub usize);

/// Template plus an optional integration horizon (for GLOBMAX).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTemplate {
    pub template: Template,
    pub t_max: Option<f64>,
}

/// Analog memory buffer: one map (or the tiles of one map) on one array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemRef {
    pub array: usize,
    pub slot: usize,
}

impl fmt::Display for MemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}s{}", self.array, self.slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccSource {
    Array(usize),
    Mem(MemRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WriteSource {
    Array(usize),
    /// Network input channel.
    Input(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SramWord {
    Template(TemplateId),
    /// Switches the arrays into accumulate mode.
    AccumulateConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Readout {
    /// Every cell of every map.
    Full,
    /// Center cell of each map.
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    TemplateApply {
        array: usize,
        template: TemplateId,
        region: Region,
    },
    Accumulate {
        array: usize,
        src: AccSource,
        region: Region,
    },
    /// One 10*Nb-bit word.
    SramRead { word: SramWord },
    MemRead {
        array: usize,
        mem: MemRef,
        region: Region,
    },
    MemWrite {
        mem: MemRef,
        src: WriteSource,
        region: Region,
        downsample: Option<DownsampleMode>,
    },
    AdcConvert {
        maps: Vec<MemRef>,
        readout: Readout,
        /// Conversions performed.
        count: usize,
    },
    DigitalFc { layer: usize, mults: u64, adds: u64 },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TemplateApply { .. } => "TemplateApply",
            EventKind::Accumulate { .. } => "Accumulate",
            EventKind::SramRead { .. } => "SramRead",
            EventKind::MemRead { .. } => "MemRead",
            EventKind::MemWrite { .. } => "MemWrite",
            EventKind::AdcConvert { .. } => "AdcConvert",
            EventKind::DigitalFc { .. } => "DigitalFc",
        }
    }

    /// Cells touched: settled/accumulated, read, or written.
    pub fn cells(&self) -> usize {
        match self {
            EventKind::TemplateApply { region, .. }
            | EventKind::Accumulate { region, .. }
            | EventKind::MemRead { region, .. } => region.cells(),
            EventKind::MemWrite { region, downsample, .. } => match downsample {
                Some(_) => (region.rows / 2) * (region.cols / 2),
                None => region.cells(),
            },
            EventKind::AdcConvert { count, .. } => *count,
            EventKind::SramRead { .. } | EventKind::DigitalFc { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub phase: usize,
    /// Index into [`CeNNProgram::layers`].
    pub layer: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    /// `None` for the final readout pseudo-layer.
    pub kind: Option<LayerKind>,
    pub in_maps: usize,
    pub out_maps: usize,
    pub in_shape: Shape,
    pub out_shape: Shape,
    /// Buffers holding the layer's output maps once its last phase is done.
    pub outputs: Vec<MemRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeNNProgram {
    pub network: String,
    pub hw: HardwareConfig,
    pub templates: Vec<StoredTemplate>,
    pub events: Vec<TraceEvent>,
    pub layers: Vec<LayerInfo>,
    pub phases: usize,
    /// Peak live buffers per array times tiles per map.
    pub slots_required: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounts {
    pub template_apply: usize,
    pub accumulate: usize,
    pub sram_read: usize,
    pub mem_read: usize,
    pub mem_write: usize,
    pub adc_convert: usize,
    pub digital_fc: usize,
}

impl EventCounts {
    pub fn add(&mut self, k: &EventKind) {
        match k {
            EventKind::TemplateApply { .. } => self.template_apply += 1,
            EventKind::Accumulate { .. } => self.accumulate += 1,
            EventKind::SramRead { .. } => self.sram_read += 1,
            EventKind::MemRead { .. } => self.mem_read += 1,
            EventKind::MemWrite { .. } => self.mem_write += 1,
            EventKind::AdcConvert { .. } => self.adc_convert += 1,
            EventKind::DigitalFc { .. } => self.digital_fc += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.template_apply + self.accumulate + self.sram_read + self.mem_read + self.mem_write + self.adc_convert + self.digital_fc
    }
}

impl CeNNProgram {
    pub fn template(&self, id: TemplateId) -> Result<&StoredTemplate> {
        self.templates
            .get(id.0)
            .ok_or_else(|| Error::Program(format!("template {} not in store", id.0)))
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn events_of_layer(&self, layer: usize) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.layer == layer)
    }

    pub fn counts(&self) -> EventCounts {
        let mut c = EventCounts::default();
        for e in &self.events {
            c.add(&e.kind);
        }
        c
    }

    pub fn layer_counts(&self, layer: usize) -> EventCounts {
        let mut c = EventCounts::default();
        for e in self.events_of_layer(layer) {
            c.add(&e.kind);
        }
        c
    }

    /// Distinct phases a layer occupies.
    pub fn layer_phases(&self, layer: usize) -> usize {
        let mut p: Vec<usize> = self.events_of_layer(layer).map(|e| e.phase).collect();
        p.dedup();
        p.len()
    }

    /// Structural replay: every read follows a write of the same buffer,
    /// template ids resolve, arrays exist and phases never decrease.
    pub fn validate(&self) -> Result<()> {
        let mut written = std::collections::HashSet::new();
        let mut last_phase = 0;
        let n = self.hw.n_arrays;
        let array_ok = |a: usize, i: usize| {
            if a >= n {
                Err(Error::Program(format!("event {i} names array {a} of {n}")))
            } else {
                Ok(())
            }
        };
        for (i, e) in self.events.iter().enumerate() {
            if e.phase < last_phase {
                return Err(Error::Program(format!("event {i} goes back to phase {}", e.phase)));
            }
            last_phase = e.phase;
            if e.layer >= self.layers.len() {
                return Err(Error::Program(format!("event {i} names layer {}", e.layer)));
            }
            let need = |m: &MemRef| {
                if written.contains(m) {
                    Ok(())
                } else {
                    Err(Error::Program(format!("event {i} reads buffer {m} before any write")))
                }
            };
            match &e.kind {
                EventKind::TemplateApply { array, template, .. } => {
                    array_ok(*array, i)?;
                    self.template(*template)?;
                }
                EventKind::SramRead { word: SramWord::Template(t) } => {
                    self.template(*t)?;
                }
                EventKind::Accumulate { array, src, .. } => {
                    array_ok(*array, i)?;
                    match src {
                        AccSource::Mem(m) => need(m)?,
                        AccSource::Array(a) => array_ok(*a, i)?,
                    }
                }
                EventKind::MemRead { array, mem, .. } => {
                    array_ok(*array, i)?;
                    need(mem)?;
                }
                EventKind::MemWrite { mem, src, .. } => {
                    array_ok(mem.array, i)?;
                    if let WriteSource::Array(a) = src {
                        array_ok(*a, i)?;
                    }
                    written.insert(*mem);
                }
                EventKind::AdcConvert { maps, .. } => {
                    for m in maps {
                        need(m)?;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// One event per line: `phase layer kind key=value...` in a fixed order.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let layer = &self.layers[e.layer].name;
            let _ = write!(out, "{} {} {}", e.phase, layer, e.kind.name());
            let reg = |r: &Region| format!("{},{},{}x{}", r.row, r.col, r.rows, r.cols);
            let _ = match &e.kind {
                EventKind::TemplateApply { array, template, region } => {
                    write!(out, " array={array} template={} region={}", template.0, reg(region))
                }
                EventKind::Accumulate { array, src, region } => {
                    let s = match src {
                        AccSource::Array(a) => format!("array{a}"),
                        AccSource::Mem(m) => m.to_string(),
                    };
                    write!(out, " array={array} src={s} region={}", reg(region))
                }
                EventKind::SramRead { word } => match word {
                    SramWord::Template(t) => write!(out, " word=template{}", t.0),
                    SramWord::AccumulateConfig => write!(out, " word=accumulate"),
                },
                EventKind::MemRead { array, mem, region } => write!(out, " array={array} mem={mem} region={}", reg(region)),
                EventKind::MemWrite { mem, src, region, downsample } => {
                    let s = match src {
                        WriteSource::Array(a) => format!("array{a}"),
                        WriteSource::Input(c) => format!("input{c}"),
                    };
                    let ds = match downsample {
                        None => "none",
                        Some(DownsampleMode::Half) => "half",
                        Some(DownsampleMode::HalfFloor) => "half_floor",
                    };
                    write!(out, " mem={mem} src={s} region={} downsample={ds}", reg(region))
                }
                EventKind::AdcConvert { maps, readout, count } => {
                    let r = match readout {
                        Readout::Full => "full",
                        Readout::Center => "center",
                    };
                    let list: Vec<String> = maps.iter().map(MemRef::to_string).collect();
                    write!(out, " readout={r} count={count} maps={}", list.join(","))
                }
                EventKind::DigitalFc { mults, adds, .. } => write!(out, " mults={mults} adds={adds}"),
            };
            out.push('\n');
        }
        out
    }
}
