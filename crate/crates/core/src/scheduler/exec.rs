//! Replays a compiled trace on simulated arrays and analog memory.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cenn::{self, BoundaryPolicy, CeNNArrayState, IdealOta, SettleConfig, Transconductance};
use crate::error::{Error, Result};
use crate::fc::{argmax, fc_eval, fc_eval_f64, FixedPointFormat};
use crate::grid::{Grid, Shape};
use crate::netspec::{LayerOp, NetworkSpec};
use crate::nonideal::{ExecMode, OtaCurve, QuantSpec};

use super::{compile, AccSource, CeNNProgram, EventCounts, EventKind, HardwareConfig, MemRef, Readout, WriteSource};

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOptions {
    pub mode: ExecMode,
    /// Transconductance curve used in nonideal mode.
    pub curve: OtaCurve,
    /// Operand width: overrides the hardware precision in quantized mode and
    /// adds quantization to nonideal mode.
    pub bits: Option<u32>,
    pub settle: SettleConfig,
    pub boundary: BoundaryPolicy,
    /// Keep every layer's output maps in [`Inference::layer_outputs`].
    pub record_layers: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            mode: ExecMode::Ideal,
            curve: OtaCurve::default_saturating(),
            bits: None,
            settle: SettleConfig::default(),
            boundary: BoundaryPolicy::Zero,
            record_layers: false,
        }
    }
}

impl ExecOptions {
    pub fn with_mode(mode: ExecMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExecutionStats {
    pub counts: EventCounts,
    /// Cells produced by template applications and accumulations.
    pub computed_cells: u64,
    /// Of those, cells whose value left `[-1, 1]` before saturation.
    pub clipped_cells: u64,
    pub fc_saturations: u64,
}

impl ExecutionStats {
    pub fn clip_rate(&self) -> f64 {
        if self.computed_cells == 0 {
            0.0
        } else {
            self.clipped_cells as f64 / self.computed_cells as f64
        }
    }

    pub fn merge(&mut self, o: &ExecutionStats) {
        let c = &mut self.counts;
        c.template_apply += o.counts.template_apply;
        c.accumulate += o.counts.accumulate;
        c.sram_read += o.counts.sram_read;
        c.mem_read += o.counts.mem_read;
        c.mem_write += o.counts.mem_write;
        c.adc_convert += o.counts.adc_convert;
        c.digital_fc += o.counts.digital_fc;
        self.computed_cells += o.computed_cells;
        self.clipped_cells += o.clipped_cells;
        self.fc_saturations += o.fc_saturations;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub scores: Vec<f64>,
    pub predicted: usize,
    pub stats: ExecutionStats,
    /// Output maps per network layer, when requested.
    pub layer_outputs: Vec<Vec<Grid>>,
}

/// A network compiled for one hardware configuration and execution mode.
///
/// Quantized mode rounds weights, inputs and every step output to the operand
/// grid; weights are rounded before lowering, so the stored conv templates
/// carry quantized values. Nonideal mode swaps in the OTA curve and quantizes
/// only when an operand width is given.
#[derive(Debug, Clone)]
pub struct Executor {
    net: NetworkSpec,
    prog: CeNNProgram,
    opts: ExecOptions,
    quant: Option<QuantSpec>,
}

impl Executor {
    pub fn new(net: &NetworkSpec, hw: &HardwareConfig, opts: ExecOptions) -> Result<Self> {
        let quant = match opts.mode {
            ExecMode::Ideal => None,
            ExecMode::Quantized => match opts.bits {
                Some(b) => Some(QuantSpec::new(b)?),
                None => hw.precision.quant(),
            },
            ExecMode::Nonideal => opts.bits.map(QuantSpec::new).transpose()?,
        };
        let net = match quant {
            Some(q) => net.quantized(q),
            None => net.clone(),
        };
        let prog = compile(&net, hw)?;
        Ok(Self { net, prog, opts, quant })
    }

    pub fn program(&self) -> &CeNNProgram {
        &self.prog
    }

    /// The network as executed, with quantized weights where applicable.
    pub fn network(&self) -> &NetworkSpec {
        &self.net
    }

    pub fn quant(&self) -> Option<QuantSpec> {
        self.quant
    }

    pub fn run(&self, image: &[Grid]) -> Result<Inference> {
        if image.len() != self.net.input_maps {
            return Err(Error::Shape(format!(
                "image has {} maps, network '{}' expects {}",
                image.len(),
                self.net.name,
                self.net.input_maps
            )));
        }
        if let Some(g) = image.iter().find(|g| g.shape() != self.net.input_shape) {
            return Err(Error::Shape(format!("image map is {}, network expects {}", g.shape(), self.net.input_shape)));
        }
        let ota: &dyn Transconductance = match self.opts.mode {
            ExecMode::Nonideal => &self.opts.curve,
            _ => &IdealOta,
        };
        let mut m = Machine {
            ex: self,
            ota,
            arrays: (0..self.prog.hw.n_arrays).map(|_| Plane::default()).collect(),
            mem: HashMap::new(),
            fc_input: Vec::new(),
            scores: Vec::new(),
            stats: ExecutionStats::default(),
            layer_outputs: Vec::new(),
        };
        m.replay(image)?;
        let predicted = argmax(&m.scores)?;
        Ok(Inference {
            scores: m.scores,
            predicted,
            stats: m.stats,
            layer_outputs: m.layer_outputs,
        })
    }

    /// Runs images in parallel on the current rayon pool; results keep input order.
    pub fn run_batch(&self, images: &[Vec<Grid>]) -> Result<Vec<Inference>> {
        images.par_iter().map(|img| self.run(img)).collect()
    }
}

/// Compiles and runs a single image.
pub fn execute(net: &NetworkSpec, hw: &HardwareConfig, image: &[Grid], opts: &ExecOptions) -> Result<Inference> {
    Executor::new(net, hw, opts.clone())?.run(image)
}

pub fn execute_batch(net: &NetworkSpec, hw: &HardwareConfig, images: &[Vec<Grid>], opts: &ExecOptions) -> Result<Vec<Inference>> {
    Executor::new(net, hw, opts.clone())?.run_batch(images)
}

/// `u` and `y` planes of one array, covering `origin` onward in map coordinates.
#[derive(Debug, Clone)]
struct Plane {
    origin: (usize, usize),
    u: Grid,
    y: Grid,
}

impl Default for Plane {
    fn default() -> Self {
        Self {
            origin: (0, 0),
            u: Grid::zeros(Shape::new(0, 0)),
            y: Grid::zeros(Shape::new(0, 0)),
        }
    }
}

impl Plane {
    fn local(&self, r: usize, c: usize) -> Result<(usize, usize)> {
        let (r0, c0) = self.origin;
        if r < r0 || c < c0 || r - r0 >= self.y.rows() || c - c0 >= self.y.cols() {
            return Err(Error::Program(format!("cell ({r}, {c}) is not loaded on the array")));
        }
        Ok((r - r0, c - c0))
    }

    fn y_at(&self, r: usize, c: usize) -> Result<f64> {
        let (lr, lc) = self.local(r, c)?;
        Ok(self.y.get(lr, lc))
    }
}

struct Machine<'a> {
    ex: &'a Executor,
    ota: &'a dyn Transconductance,
    arrays: Vec<Plane>,
    mem: HashMap<MemRef, Grid>,
    fc_input: Vec<f64>,
    scores: Vec<f64>,
    stats: ExecutionStats,
    layer_outputs: Vec<Vec<Grid>>,
}

impl Machine<'_> {
    fn replay(&mut self, image: &[Grid]) -> Result<()> {
        let prog = &self.ex.prog;
        let mut done = 0;
        for e in &prog.events {
            while done < e.layer {
                self.snapshot(done)?;
                done += 1;
            }
            self.stats.counts.add(&e.kind);
            self.step(e.layer, &e.kind, image)?;
        }
        while done < prog.layers.len() {
            self.snapshot(done)?;
            done += 1;
        }
        if self.scores.is_empty() {
            return Err(Error::Program("trace produced no scores".into()));
        }
        Ok(())
    }

    fn snapshot(&mut self, layer: usize) -> Result<()> {
        if !self.ex.opts.record_layers || layer >= self.ex.net.layers.len() {
            return Ok(());
        }
        let maps = if let LayerOp::Fc(_) = self.ex.net.layers[layer].op {
            vec![Grid::from_vec(Shape::new(1, self.scores.len()), self.scores.clone())?]
        } else {
            self.ex.prog.layers[layer].outputs.iter().map(|m| self.buffer(m).cloned()).collect::<Result<_>>()?
        };
        self.layer_outputs.push(maps);
        Ok(())
    }

    fn buffer(&self, m: &MemRef) -> Result<&Grid> {
        self.mem
            .get(m)
            .ok_or_else(|| Error::Program(format!("buffer {m} read before any write")))
    }

    fn finish(&self, v: f64) -> f64 {
        let y = cenn::clip(v);
        match self.ex.quant {
            Some(q) => q.quantize(y),
            None => y,
        }
    }

    fn step(&mut self, layer: usize, kind: &EventKind, image: &[Grid]) -> Result<()> {
        let prog = &self.ex.prog;
        match kind {
            EventKind::SramRead { .. } => {}
            EventKind::MemRead { array, mem, region } => {
                let src = self.buffer(mem)?;
                let g = Grid::from_fn(Shape::new(region.rows, region.cols), |r, c| src.get(region.row + r, region.col + c));
                self.arrays[*array] = Plane {
                    origin: (region.row, region.col),
                    u: g.clone(),
                    y: g,
                };
            }
            EventKind::TemplateApply { array, template, region } => {
                let st = prog.template(*template)?;
                let mut cfg = self.ex.opts.settle;
                if let Some(t) = st.t_max {
                    cfg.t_max = t;
                }
                let plane = &self.arrays[*array];
                let state = CeNNArrayState::new(plane.u.clone());
                let out = cenn::settle(&state, &st.template, self.ex.opts.boundary, &cfg, self.ota)?;
                let (r0, c0) = plane.local(region.row, region.col)?;
                plane.local(region.row + region.rows - 1, region.col + region.cols - 1)?;
                for r in r0..r0 + region.rows {
                    for c in c0..c0 + region.cols {
                        if out.x.get(r, c).abs() > 1.0 {
                            self.stats.clipped_cells += 1;
                        }
                    }
                }
                self.stats.computed_cells += region.cells() as u64;
                let y = out.y.map(|v| self.finish(v));
                self.arrays[*array].y = y;
            }
            EventKind::Accumulate { array, src, region } => {
                let mut sums = Vec::with_capacity(region.cells());
                for r in region.row..region.row + region.rows {
                    for c in region.col..region.col + region.cols {
                        let s = match src {
                            AccSource::Array(a) => self.arrays[*a].y_at(r, c)?,
                            AccSource::Mem(m) => self.buffer(m)?.get(r, c),
                        };
                        sums.push(self.arrays[*array].y_at(r, c)? + s);
                    }
                }
                self.stats.computed_cells += sums.len() as u64;
                self.stats.clipped_cells += sums.iter().filter(|v| v.abs() > 1.0).count() as u64;
                let mut it = sums.into_iter();
                for r in region.row..region.row + region.rows {
                    for c in region.col..region.col + region.cols {
                        let v = self.finish(it.next().expect("one sum per cell"));
                        let p = &mut self.arrays[*array];
                        let (lr, lc) = p.local(r, c)?;
                        p.y.set(lr, lc, v);
                    }
                }
            }
            EventKind::MemWrite { mem, src, region, downsample } => {
                let in_shape = prog.layers[layer].in_shape;
                let shape = match downsample {
                    Some(mode) => mode.output_shape(in_shape)?,
                    None => in_shape,
                };
                let mut vals = Vec::with_capacity(region.cells());
                for r in region.row..region.row + region.rows {
                    for c in region.col..region.col + region.cols {
                        let v = match src {
                            WriteSource::Array(a) => self.arrays[*a].y_at(r, c)?,
                            WriteSource::Input(ch) => {
                                let v = image[*ch].get(r, c);
                                match self.ex.quant {
                                    Some(q) => q.quantize(v),
                                    None => v,
                                }
                            }
                        };
                        vals.push((r, c, v));
                    }
                }
                let buf = self.mem.entry(*mem).or_insert_with(|| Grid::zeros(shape));
                if buf.shape() != shape {
                    *buf = Grid::zeros(shape);
                }
                for (r, c, v) in vals {
                    match downsample {
                        None => buf.set(r, c, v),
                        Some(_) => {
                            if r % 2 == 0 && c % 2 == 0 && r / 2 < shape.rows && c / 2 < shape.cols {
                                buf.set(r / 2, c / 2, v);
                            }
                        }
                    }
                }
            }
            EventKind::AdcConvert { maps, readout, .. } => {
                let mut vals = Vec::new();
                for m in maps {
                    let g = self.buffer(m)?;
                    match readout {
                        Readout::Full => vals.extend_from_slice(g.as_slice()),
                        Readout::Center => vals.push(g.center()),
                    }
                }
                if let Some(q) = self.ex.quant {
                    vals.iter_mut().for_each(|v| *v = q.quantize(*v));
                }
                match readout {
                    Readout::Full => self.fc_input = vals,
                    Readout::Center => self.scores = vals,
                }
            }
            EventKind::DigitalFc { layer: li, .. } => {
                let LayerOp::Fc(w) = &self.ex.net.layers[*li].op else {
                    return Err(Error::Program(format!("layer {li} is not fully connected")));
                };
                self.scores = match self.ex.quant {
                    None => fc_eval_f64(&self.fc_input, &w.weights, &w.bias)?.0,
                    Some(q) => {
                        let fmt = FixedPointFormat::new(q.bits())?;
                        let codes = |v: &[f64]| v.iter().map(|&x| q.code(x)).collect::<Vec<i64>>();
                        let rows: Vec<Vec<i64>> = w.weights.iter().map(|r| codes(r)).collect();
                        let r = fc_eval(&codes(&self.fc_input), &rows, Some(&codes(&w.bias)), fmt)?;
                        self.stats.fc_saturations += r.saturations;
                        r.scores.iter().map(|&s| s as f64 * fmt.score_scale()).collect()
                    }
                };
            }
        }
        Ok(())
    }
}
