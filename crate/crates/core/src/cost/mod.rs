//! Delay and energy accounting for compiled programs.
//!
//! Two models are reported side by side. The trace model walks the compiled
//! phases: a phase that settles or accumulates costs one settle time, plus the
//! larger of the reprogramming latency (template fetch from SRAM and switch
//! setup) and the analog memory transfer latency. The analytic model is the
//! closed-form per-layer delay estimate, evaluated literally.
//!
//! Units are nanoseconds and picojoules throughout.

mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{analytic_delay, trace_cost, Activity, AnalyticDelay, Breakdown, CostReport, LayerCost, DIVERGENCE_THRESHOLD};

/// Per-(network, layer) override of the energy per active cell per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCalibration {
    pub network: String,
    pub layer: String,
    pub e_cell_step_pj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub name: String,
    pub bits: u32,
    /// Settle time of one template step.
    pub t_cenn_ns: f64,
    /// Switch setup after the template word arrives.
    pub t_prog_ns: f64,
    pub t_mem_read_ns: f64,
    pub t_mem_write_ns: f64,
    /// One 10*Nb-bit SRAM word.
    pub sram_read_delay_ns: f64,
    pub sram_read_energy_pj: f64,
    /// Energy per active cell per template step, unless calibrated.
    pub e_cell_step_pj: f64,
    pub e_mem_read_pj: f64,
    pub e_mem_write_pj: f64,
    /// One conversion round on every array in parallel.
    pub adc_delay_ns: f64,
    pub adc_energy_pj: f64,
    pub fc_mult_delay_ns: f64,
    pub fc_mult_energy_pj: f64,
    pub fc_add_delay_ns: f64,
    pub fc_add_energy_pj: f64,
    #[serde(default)]
    pub calibration: Vec<LayerCalibration>,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("t_cenn_ns", self.t_cenn_ns),
            ("t_prog_ns", self.t_prog_ns),
            ("t_mem_read_ns", self.t_mem_read_ns),
            ("t_mem_write_ns", self.t_mem_write_ns),
            ("sram_read_delay_ns", self.sram_read_delay_ns),
            ("sram_read_energy_pj", self.sram_read_energy_pj),
            ("e_cell_step_pj", self.e_cell_step_pj),
            ("e_mem_read_pj", self.e_mem_read_pj),
            ("e_mem_write_pj", self.e_mem_write_pj),
            ("adc_delay_ns", self.adc_delay_ns),
            ("adc_energy_pj", self.adc_energy_pj),
            ("fc_mult_delay_ns", self.fc_mult_delay_ns),
            ("fc_mult_energy_pj", self.fc_mult_energy_pj),
            ("fc_add_delay_ns", self.fc_add_delay_ns),
            ("fc_add_energy_pj", self.fc_add_energy_pj),
        ];
        let cal = self.calibration.iter().map(|c| ("e_cell_step_pj (calibration)", c.e_cell_step_pj));
        for (name, v) in fields.into_iter().chain(cal) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Model(format!("cost parameter {name} = {v} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    /// Reprogramming latency of a phase that fetches a template.
    pub fn reprogram_ns(&self) -> f64 {
        self.t_prog_ns + self.sram_read_delay_ns
    }

    /// Settle plus reprogramming: the time of one template step.
    pub fn step_ns(&self) -> f64 {
        self.t_cenn_ns + self.reprogram_ns()
    }

    pub fn e_cell_step(&self, network: &str, layer: &str) -> f64 {
        self.calibration
            .iter()
            .find(|c| c.network == network && c.layer == layer)
            .map_or(self.e_cell_step_pj, |c| c.e_cell_step_pj)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string().trim_end()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("cost parameters serialize")
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                Error::Model(format!("unknown cost preset '{name}' (available: {})", names.join(", ")))
            })?;
        Self::parse(text, name)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// A preset name or a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if PRESETS.iter().any(|(n, _)| *n == name_or_path) {
            Self::preset(name_or_path)
        } else {
            Self::load(std::path::Path::new(name_or_path))
        }
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("paper-4bit-32nm", include_str!("../../../../presets/cost/paper-4bit-32nm.toml")),
    ("paper-8bit-32nm", include_str!("../../../../presets/cost/paper-8bit-32nm.toml")),
];

/// Factors taking a preset from one operand width to another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionScale {
    pub bits: u32,
    /// Settle, switch and analog memory delays.
    pub analog_delay: f64,
    /// Per-cell and analog memory energies (bias current scaling).
    pub analog_energy: f64,
    /// SRAM words grow with the operand width.
    pub sram_energy: f64,
    /// Ripple-carry adder delay and energy both grow with width.
    pub fc_add: f64,
    /// Array multiplier critical path grows with width, its area with width squared.
    pub fc_mult_delay: f64,
    pub fc_mult_energy: f64,
    /// Replacement converter, if the wider path uses a different ADC.
    pub adc: Option<(f64, f64)>,
}

impl PrecisionScale {
    pub fn identity(bits: u32) -> Self {
        Self {
            bits,
            analog_delay: 1.0,
            analog_energy: 1.0,
            sram_energy: 1.0,
            fc_add: 1.0,
            fc_mult_delay: 1.0,
            fc_mult_energy: 1.0,
            adc: None,
        }
    }

    /// 4-bit to 8-bit: OTA delay x4.3 and bias current x7.5, twice-wide SRAM
    /// words and adders, multipliers x2 in delay and x4 in energy, and an
    /// 8-bit converter.
    pub fn four_to_eight() -> Self {
        Self {
            bits: 8,
            analog_delay: 4.3,
            analog_energy: 7.5,
            sram_energy: 2.0,
            fc_add: 2.0,
            fc_mult_delay: 2.0,
            fc_mult_energy: 4.0,
            adc: Some((ADC8_DELAY_NS, ADC8_ENERGY_PJ)),
        }
    }
}

/// 8-bit converter, per round and per conversion.
pub const ADC8_DELAY_NS: f64 = 0.2501;
pub const ADC8_ENERGY_PJ: f64 = 0.533;

pub fn precision_scale(p: &CostParams, s: &PrecisionScale) -> CostParams {
    let (adc_delay_ns, adc_energy_pj) = s.adc.unwrap_or((p.adc_delay_ns, p.adc_energy_pj));
    CostParams {
        name: if s.bits == p.bits {
            p.name.clone()
        } else {
            format!("{}-scaled-{}bit", p.name, s.bits)
        },
        bits: s.bits,
        t_cenn_ns: p.t_cenn_ns * s.analog_delay,
        t_prog_ns: p.t_prog_ns * s.analog_delay,
        t_mem_read_ns: p.t_mem_read_ns * s.analog_delay,
        t_mem_write_ns: p.t_mem_write_ns * s.analog_delay,
        sram_read_delay_ns: p.sram_read_delay_ns,
        sram_read_energy_pj: p.sram_read_energy_pj * s.sram_energy,
        e_cell_step_pj: p.e_cell_step_pj * s.analog_energy,
        e_mem_read_pj: p.e_mem_read_pj * s.analog_energy,
        e_mem_write_pj: p.e_mem_write_pj * s.analog_energy,
        adc_delay_ns,
        adc_energy_pj,
        fc_mult_delay_ns: p.fc_mult_delay_ns * s.fc_mult_delay,
        fc_mult_energy_pj: p.fc_mult_energy_pj * s.fc_mult_energy,
        fc_add_delay_ns: p.fc_add_delay_ns * s.fc_add,
        fc_add_energy_pj: p.fc_add_energy_pj * s.fc_add,
        calibration: p
            .calibration
            .iter()
            .map(|c| LayerCalibration {
                e_cell_step_pj: c.e_cell_step_pj * s.analog_energy,
                ..c.clone()
            })
            .collect(),
    }
}

/// Back-solves the per-cell step energy of each named layer so its trace
/// energy equals the target, all other terms held fixed.
pub fn calibrate_layers(prog: &crate::scheduler::CeNNProgram, params: &CostParams, targets: &[(&str, f64)]) -> Result<Vec<LayerCalibration>> {
    let mut zero = params.clone();
    zero.e_cell_step_pj = 0.0;
    zero.calibration.clear();
    let activity = Activity::from_program(prog);
    let base = trace_cost(prog, &zero, &activity)?;
    let mut out = Vec::with_capacity(targets.len());
    for &(layer, target) in targets {
        let li = prog
            .layer_index(layer)
            .ok_or_else(|| Error::Model(format!("no layer '{layer}' in program '{}'", prog.network)))?;
        let cells: usize = prog
            .events
            .iter()
            .zip(activity.cells())
            .filter(|(e, _)| e.layer == li && matches!(e.kind, crate::scheduler::EventKind::TemplateApply { .. } | crate::scheduler::EventKind::Accumulate { .. }))
            .map(|(_, &c)| c)
            .sum();
        let rest = base.layers[li].energy_pj;
        if cells == 0 || target < rest {
            return Err(Error::Model(format!(
                "layer '{layer}' cannot reach {target} pJ: {rest:.1} pJ outside the cells over {cells} cell steps"
            )));
        }
        out.push(LayerCalibration {
            network: prog.network.clone(),
            layer: layer.to_string(),
            e_cell_step_pj: (target - rest) / cells as f64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
