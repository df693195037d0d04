use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netspec::{LayerOp, NetworkSpec, PoolKind, ReluKind};
use crate::scheduler::{AccSource, CeNNProgram, EventKind, HardwareConfig};
use crate::templates;

use super::CostParams;

/// Relative gap between the analytic and trace delay that flags a layer.
pub const DIVERGENCE_THRESHOLD: f64 = 0.05;

/// Active cells per trace event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activity {
    cells: Vec<usize>,
}

impl Activity {
    /// Every cell of each event's region is active; cells outside the mapped
    /// region are power-gated.
    pub fn from_program(prog: &CeNNProgram) -> Self {
        Self {
            cells: prog.events.iter().map(|e| e.kind.cells()).collect(),
        }
    }

    pub fn from_cells(cells: Vec<usize>) -> Self {
        Self { cells }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Breakdown {
    pub cenn: f64,
    pub prog: f64,
    pub mem: f64,
    pub adc: f64,
    pub fc: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.cenn + self.prog + self.mem + self.adc + self.fc
    }

    fn add(&mut self, o: &Breakdown) {
        self.cenn += o.cenn;
        self.prog += o.prog;
        self.mem += o.mem;
        self.adc += o.adc;
        self.fc += o.fc;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: String,
    pub phases: usize,
    pub delay_ns: f64,
    pub energy_pj: f64,
    pub delay: Breakdown,
    pub energy: Breakdown,
    /// Closed-form estimate, when available.
    pub analytic_delay_ns: Option<f64>,
}

impl LayerCost {
    /// Whether the closed-form delay differs from the trace delay by more
    /// than [`DIVERGENCE_THRESHOLD`].
    pub fn diverges(&self) -> bool {
        match self.analytic_delay_ns {
            Some(a) if self.delay_ns > 0.0 => ((a - self.delay_ns) / self.delay_ns).abs() > DIVERGENCE_THRESHOLD,
            Some(a) => a > 0.0,
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub network: String,
    pub preset: String,
    pub layers: Vec<LayerCost>,
    pub total_delay_ns: f64,
    pub total_energy_pj: f64,
    /// Total delay times total energy, in ns*pJ.
    pub edp: f64,
    pub delay: Breakdown,
    pub energy: Breakdown,
    pub analytic_total_ns: Option<f64>,
}

/// Costs a compiled program event by event.
pub fn trace_cost(prog: &CeNNProgram, params: &CostParams, activity: &Activity) -> Result<CostReport> {
    params.validate()?;
    if activity.cells.len() != prog.events.len() {
        return Err(Error::Model(format!(
            "activity data covers {} events, the program has {}",
            activity.cells.len(),
            prog.events.len()
        )));
    }
    let mut layers: Vec<LayerCost> = prog
        .layers
        .iter()
        .map(|l| LayerCost {
            layer: l.name.clone(),
            phases: 0,
            delay_ns: 0.0,
            energy_pj: 0.0,
            delay: Breakdown::default(),
            energy: Breakdown::default(),
            analytic_delay_ns: None,
        })
        .collect();
    let n = prog.hw.n_arrays;
    let mut start = 0;
    while start < prog.events.len() {
        let phase = prog.events[start].phase;
        let end = prog.events[start..]
            .iter()
            .position(|e| e.phase != phase)
            .map_or(prog.events.len(), |k| start + k);
        let li = prog.events[start].layer;
        let e_cell = params.e_cell_step(&prog.network, &prog.layers[li].name);
        let mut compute = false;
        let mut sram = false;
        let mut reads = false;
        let mut writes = false;
        let mut d = Breakdown::default();
        let mut en = Breakdown::default();
        for (e, &cells) in prog.events[start..end].iter().zip(&activity.cells[start..end]) {
            let cells = cells as f64;
            match &e.kind {
                EventKind::TemplateApply { .. } => {
                    compute = true;
                    en.cenn += e_cell * cells;
                }
                EventKind::Accumulate { src, .. } => {
                    compute = true;
                    en.cenn += e_cell * cells;
                    if let AccSource::Mem(_) = src {
                        reads = true;
                        en.mem += params.e_mem_read_pj * cells;
                    }
                }
                EventKind::SramRead { .. } => {
                    sram = true;
                    en.prog += params.sram_read_energy_pj;
                }
                EventKind::MemRead { .. } => {
                    reads = true;
                    en.mem += params.e_mem_read_pj * cells;
                }
                EventKind::MemWrite { .. } => {
                    writes = true;
                    en.mem += params.e_mem_write_pj * cells;
                }
                EventKind::AdcConvert { count, .. } => {
                    d.adc += count.div_ceil(n) as f64 * params.adc_delay_ns;
                    en.adc += cells * params.adc_energy_pj;
                }
                EventKind::DigitalFc { mults, adds, .. } => {
                    d.fc += *mults as f64 * params.fc_mult_delay_ns + *adds as f64 * params.fc_add_delay_ns;
                    en.fc += *mults as f64 * params.fc_mult_energy_pj + *adds as f64 * params.fc_add_energy_pj;
                }
            }
        }
        if compute {
            d.cenn += params.t_cenn_ns;
        }
        let reprog = if sram { params.reprogram_ns() } else { 0.0 };
        let mem = if reads { params.t_mem_read_ns } else { 0.0 } + if writes { params.t_mem_write_ns } else { 0.0 };
        // reprogramming and memory transfers overlap; the longer one shows
        if reprog >= mem {
            d.prog += reprog;
        } else {
            d.mem += mem;
        }
        let l = &mut layers[li];
        l.phases += 1;
        l.delay.add(&d);
        l.energy.add(&en);
        start = end;
    }
    let mut delay = Breakdown::default();
    let mut energy = Breakdown::default();
    for l in &mut layers {
        l.delay_ns = l.delay.total();
        l.energy_pj = l.energy.total();
        delay.add(&l.delay);
        energy.add(&l.energy);
    }
    let total_delay_ns: f64 = layers.iter().map(|l| l.delay_ns).sum();
    let total_energy_pj: f64 = layers.iter().map(|l| l.energy_pj).sum();
    Ok(CostReport {
        network: prog.network.clone(),
        preset: params.name.clone(),
        layers,
        total_delay_ns,
        total_energy_pj,
        edp: total_delay_ns * total_energy_pj,
        delay,
        energy,
        analytic_total_ns: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticDelay {
    pub layers: Vec<(String, f64)>,
    pub total_ns: f64,
}

/// Closed-form per-layer delay.
///
/// A conv layer with `k = C_l * C_{l-1}` kernel applications on `N` arrays
/// costs `(k/(N-1) + k/N) * step + k/(2(N-1)) * (t_read + t_write)`. ReLU and
/// pooling layers cost their template step count times `ceil(C/N)` steps. The
/// FC layer and the readout of FC-free networks are charged as in the trace
/// model.
pub fn analytic_delay(net: &NetworkSpec, hw: &HardwareConfig, params: &CostParams) -> Result<AnalyticDelay> {
    params.validate()?;
    let n = hw.n_arrays;
    let step = params.step_ns();
    let mut layers = Vec::with_capacity(net.layers.len() + 1);
    for l in &net.layers {
        let groups = l.in_maps.div_ceil(n) as f64;
        let t = match &l.op {
            LayerOp::Conv(_) => {
                if n == 1 {
                    return Err(Error::Model(format!(
                        "the closed-form delay divides by N - 1 and is undefined for one array (layer '{}'); use the trace cost",
                        l.name
                    )));
                }
                let k = (l.out_maps * l.in_maps) as f64;
                let nf = n as f64;
                (k / (nf - 1.0) + k / nf) * step + k / (2.0 * (nf - 1.0)) * (params.t_mem_read_ns + params.t_mem_write_ns)
            }
            LayerOp::Relu(kind) => {
                let steps = match kind {
                    ReluKind::Linear => templates::relu_program(),
                    ReluKind::Nonlinear => templates::nonlinear_relu_program(),
                }
                .compute_steps();
                steps as f64 * groups * step
            }
            LayerOp::Pool {
                kind,
                window,
                neighborhood,
                downsample,
                t_max,
            } => {
                let steps = match kind {
                    PoolKind::MaxLinear => templates::maxpool_program_with(*neighborhood, *downsample),
                    PoolKind::Avg => templates::avgpool_program(*window, *downsample),
                    PoolKind::Nonlinear => templates::nonlinear_pool_program(*t_max, *downsample)?,
                }
                .compute_steps();
                steps as f64 * groups * step
            }
            LayerOp::Fc(_) => {
                let conv = l.fc_inputs();
                let ops = (l.fc_inputs() * l.out_maps) as f64;
                conv.div_ceil(n) as f64 * params.adc_delay_ns + ops * (params.fc_mult_delay_ns + params.fc_add_delay_ns)
            }
        };
        layers.push((l.name.clone(), t));
    }
    if !net.has_fc() {
        layers.push(("readout".to_string(), net.class_count.div_ceil(n) as f64 * params.adc_delay_ns));
    }
    let total_ns = layers.iter().map(|(_, t)| t).sum();
    Ok(AnalyticDelay { layers, total_ns })
}

impl CostReport {
    pub fn layer(&self, name: &str) -> Option<&LayerCost> {
        self.layers.iter().find(|l| l.layer == name)
    }

    /// Fills the analytic column by layer name.
    pub fn attach_analytic(&mut self, a: &AnalyticDelay) {
        for l in &mut self.layers {
            l.analytic_delay_ns = a.layers.iter().find(|(n, _)| *n == l.layer).map(|(_, t)| *t);
        }
        self.analytic_total_ns = Some(a.total_ns);
    }

    pub fn divergent_layers(&self) -> Vec<&str> {
        self.layers.iter().filter(|l| l.diverges()).map(|l| l.layer.as_str()).collect()
    }

    pub const CSV_HEADER: &'static str = "layer,phases,delay_ns,energy_pj,cenn_ns,prog_ns,mem_ns,adc_ns,fc_ns,cenn_pj,prog_pj,mem_pj,adc_pj,fc_pj,analytic_delay_ns,divergent";

    /// One row per layer and a final `total` row, fixed column order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let row = |out: &mut String, name: &str, phases: usize, dt: f64, et: f64, d: &Breakdown, e: &Breakdown, a: Option<f64>, div: bool| {
            let a = a.map_or(String::new(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "{name},{phases},{dt:.4},{et:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{a},{div}",
                d.cenn, d.prog, d.mem, d.adc, d.fc, e.cenn, e.prog, e.mem, e.adc, e.fc
            );
        };
        for l in &self.layers {
            row(&mut out, &l.layer, l.phases, l.delay_ns, l.energy_pj, &l.delay, &l.energy, l.analytic_delay_ns, l.diverges());
        }
        let phases = self.layers.iter().map(|l| l.phases).sum();
        row(
            &mut out,
            "total",
            phases,
            self.total_delay_ns,
            self.total_energy_pj,
            &self.delay,
            &self.energy,
            self.analytic_total_ns,
            false,
        );
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("cost report serializes")
    }

    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string().trim_end()))
    }
}
