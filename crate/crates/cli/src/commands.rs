//! `compile`, `run`, `sweep` and `verify`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use cenn_forge::cost::CostParams;
use cenn_forge::scheduler::{EventCounts, EventKind};
use cenn_forge::{
    analytic_delay, precision_scale, trace_cost, Activity, CeNNProgram, CostReport, Dataset, ExecMode, ExecOptions, Executor,
    HardwareConfig, Inference, LayerKind, LayerOp, NetworkSpec, PoolKind, Precision, PrecisionScale,
};
use serde::Serialize;

use crate::checks::{self, CheckOutcome, VerifyConfig};
use crate::config::RunConfig;
use crate::report::{new_run_dir, predictions_csv, to_toml, trace_summary_csv, write_new};
use crate::{CliError, CliResult};

#[derive(Serialize)]
struct ProgramMeta {
    network: String,
    phases: usize,
    slots_required: usize,
    hardware: HardwareConfig,
    events: EventCounts,
}

fn program_meta(prog: &CeNNProgram) -> ProgramMeta {
    ProgramMeta {
        network: prog.network.clone(),
        phases: prog.phases,
        slots_required: prog.slots_required,
        hardware: prog.hw,
        events: prog.counts(),
    }
}

/// Lowers a network and writes its trace. Returns the run directory.
pub fn cmd_compile(cfg: &RunConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let (net, _) = cfg.load_network()?;
    let hw = cfg.hardware(&net)?;
    let prog = cenn_forge::compile(&net, &hw)?;
    let dir = new_run_dir(&cfg.out)?;
    write_new(&dir, "program.toml", &to_toml(&program_meta(&prog)))?;
    write_new(&dir, "trace.txt", &prog.trace_text())?;
    write_new(&dir, "trace_summary.csv", &trace_summary_csv(&prog))?;
    Ok(dir)
}

/// Trace cost with the analytic column where the closed form applies.
fn cost_report(net: &NetworkSpec, prog: &CeNNProgram, params: &CostParams) -> CliResult<CostReport> {
    let mut report = trace_cost(prog, params, &Activity::from_program(prog))?;
    // the closed form is undefined for a single array
    if let Ok(a) = analytic_delay(net, &prog.hw, params) {
        report.attach_analytic(&a);
    }
    Ok(report)
}

#[derive(Serialize)]
struct Accuracy {
    samples: usize,
    correct: usize,
    accuracy: f64,
    misclassification: f64,
    clip_rate: f64,
    computed_cells: u64,
    clipped_cells: u64,
    fc_saturations: u64,
}

fn accuracy(labels: &[usize], results: &[Inference]) -> Accuracy {
    let correct = labels.iter().zip(results).filter(|(l, r)| **l == r.predicted).count();
    let mut stats = cenn_forge::ExecutionStats::default();
    for r in results {
        stats.merge(&r.stats);
    }
    let accuracy = if results.is_empty() { 0.0 } else { correct as f64 / results.len() as f64 };
    Accuracy {
        samples: results.len(),
        correct,
        accuracy,
        misclassification: 1.0 - accuracy,
        clip_rate: stats.clip_rate(),
        computed_cells: stats.computed_cells,
        clipped_cells: stats.clipped_cells,
        fc_saturations: stats.fc_saturations,
    }
}

#[derive(Serialize)]
struct CostSummary {
    preset: String,
    total_delay_ns: f64,
    total_energy_pj: f64,
    edp_ns_pj: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic_delay_ns: Option<f64>,
    divergent_layers: Vec<String>,
}

impl CostSummary {
    fn new(r: &CostReport) -> Self {
        Self {
            preset: r.preset.clone(),
            total_delay_ns: r.total_delay_ns,
            total_energy_pj: r.total_energy_pj,
            edp_ns_pj: r.edp,
            analytic_delay_ns: r.analytic_total_ns,
            divergent_layers: r.divergent_layers().into_iter().map(str::to_string).collect(),
        }
    }
}

#[derive(Serialize)]
struct RunMeta {
    network: String,
    weights: String,
    mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    bits: Option<u32>,
    seed: u64,
    dataset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    results: Option<Accuracy>,
    cost: CostSummary,
    program: ProgramMeta,
}

fn dataset_label(cfg: &RunConfig) -> String {
    match (&cfg.images, cfg.synthetic) {
        (Some(i), _) => i.display().to_string(),
        (None, Some(n)) => format!("synthetic ({n} images, seed {})", cfg.seed),
        (None, None) => "none (cost only)".to_string(),
    }
}

/// Inference over the dataset, if any, plus the cost report. Everything is
/// computed before the run directory is created so a failed run leaves
/// nothing behind.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<PathBuf> {
    cfg.validate()?;
    let (net, weights) = cfg.load_network()?;
    let hw = cfg.hardware(&net)?;
    let params = cfg.cost_params()?;
    let data = cfg.dataset(&net)?;
    let exec = Executor::new(&net, &hw, cfg.exec_options()?)?;
    let prog = exec.program();
    let cost = cost_report(&net, prog, &params)?;
    let results = match &data {
        Some(d) => Some(exec.run_batch(&d.images)?),
        None => None,
    };

    let meta = RunMeta {
        network: net.name.clone(),
        weights,
        mode: cfg.mode.as_str().to_string(),
        bits: cfg.bits,
        seed: cfg.seed,
        dataset: dataset_label(cfg),
        results: data.as_ref().zip(results.as_ref()).map(|(d, r)| accuracy(&d.labels, r)),
        cost: CostSummary::new(&cost),
        program: program_meta(prog),
    };
    let dir = new_run_dir(&cfg.out)?;
    write_new(&dir, "run.toml", &to_toml(&meta))?;
    write_new(&dir, "cost.csv", &cost.to_csv())?;
    write_new(&dir, "trace_summary.csv", &trace_summary_csv(prog))?;
    if let (Some(d), Some(r)) = (&data, &results) {
        write_new(&dir, "predictions.csv", &predictions_csv(&d.labels, r, net.class_count))?;
    }
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Precision,
    NArrays,
    PoolKind,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Precision => "precision",
            SweepAxis::NArrays => "n_arrays",
            SweepAxis::PoolKind => "pool_kind",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "precision" => Ok(SweepAxis::Precision),
            "n_arrays" => Ok(SweepAxis::NArrays),
            "pool_kind" => Ok(SweepAxis::PoolKind),
            other => Err(CliError::Usage(format!(
                "unknown sweep axis '{other}' (expected precision, n_arrays or pool_kind)"
            ))),
        }
    }
}

/// Cost parameters for another operand width. Only the preset's own width and
/// the 4-to-8-bit step are known.
pub fn params_for_bits(base: &CostParams, bits: u32) -> CliResult<CostParams> {
    if bits == base.bits {
        Ok(base.clone())
    } else if base.bits == 4 && bits == 8 {
        Ok(precision_scale(base, &PrecisionScale::four_to_eight()))
    } else {
        Err(CliError::Usage(format!(
            "no cost scaling from {} to {bits} bits (preset '{}')",
            base.bits, base.name
        )))
    }
}

/// Phases that settle or accumulate, optionally for one layer only.
pub fn compute_steps(prog: &CeNNProgram, layer: Option<usize>) -> usize {
    prog.events
        .iter()
        .filter(|e| layer.is_none_or(|l| e.layer == l))
        .filter(|e| matches!(e.kind, EventKind::TemplateApply { .. } | EventKind::Accumulate { .. }))
        .map(|e| e.phase)
        .collect::<BTreeSet<_>>()
        .len()
}

struct Variant {
    value: String,
    net: NetworkSpec,
    hw: HardwareConfig,
    params: CostParams,
    opts: ExecOptions,
}

fn variant(axis: SweepAxis, value: &str, net: &NetworkSpec, hw: &HardwareConfig, base: &CostParams, opts: &ExecOptions) -> CliResult<Variant> {
    let bad = |what: &str| CliError::Usage(format!("sweep {}: '{value}' is not {what}", axis.as_str()));
    let mut v = Variant {
        value: value.to_string(),
        net: net.clone(),
        hw: *hw,
        params: base.clone(),
        opts: opts.clone(),
    };
    match axis {
        SweepAxis::Precision => {
            let bits: u32 = value.parse().map_err(|_| bad("a bit width"))?;
            v.hw.precision = Precision::try_from(bits).map_err(CliError::Usage)?;
            v.params = params_for_bits(base, bits)?;
            match v.hw.precision {
                Precision::Float32 => {
                    v.opts.mode = ExecMode::Ideal;
                    v.opts.bits = None;
                }
                Precision::Bits(b) => {
                    v.opts.mode = ExecMode::Quantized;
                    v.opts.bits = Some(b);
                }
            }
        }
        SweepAxis::NArrays => {
            v.hw.n_arrays = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| bad("a positive array count"))?;
        }
        SweepAxis::PoolKind => {
            let kind: PoolKind = value.parse()?;
            v.net = net.with_pool_kind(kind);
        }
    }
    Ok(v)
}

pub const SWEEP_HEADER: &str = "axis,value,network,n_arrays,bits,pool_kind,mode,phases,compute_steps,pool_steps,\
total_delay_ns,total_energy_pj,edp,analytic_delay_ns,samples,accuracy,misclassification,clip_rate";

fn pool_kind_of(net: &NetworkSpec) -> &'static str {
    net.layers
        .iter()
        .find_map(|l| match l.op {
            LayerOp::Pool { kind, .. } => Some(kind.as_str()),
            _ => None,
        })
        .unwrap_or("")
}

fn sweep_row(axis: SweepAxis, v: &Variant, data: Option<&Dataset>) -> CliResult<String> {
    let exec = Executor::new(&v.net, &v.hw, v.opts.clone())?;
    let prog = exec.program();
    let cost = cost_report(&v.net, prog, &v.params)?;
    let pool_steps = prog
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind == Some(LayerKind::Pool))
        .map(|(i, _)| compute_steps(prog, Some(i)))
        .max()
        .unwrap_or(0);
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{}",
        axis.as_str(),
        v.value,
        v.net.name,
        v.hw.n_arrays,
        v.hw.precision.bits(),
        pool_kind_of(&v.net),
        v.opts.mode.as_str(),
        prog.phases,
        compute_steps(prog, None),
        pool_steps,
        cost.total_delay_ns,
        cost.total_energy_pj,
        cost.edp,
        cost.analytic_total_ns.map_or(String::new(), |a| format!("{a:.4}")),
    );
    match data {
        Some(d) => {
            let a = accuracy(&d.labels, &exec.run_batch(&d.images)?);
            let _ = write!(row, ",{},{:.6},{:.6},{:.6}", a.samples, a.accuracy, a.misclassification, a.clip_rate);
        }
        None => row.push_str(",0,,,"),
    }
    Ok(row)
}

/// One CSV row per axis value.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[String]) -> CliResult<PathBuf> {
    cfg.validate()?;
    let values: Vec<&str> = values.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if values.is_empty() {
        return Err(CliError::Usage(format!("sweep axis '{}' has no values", axis.as_str())));
    }
    let (net, _) = cfg.load_network()?;
    let hw = cfg.hardware(&net)?;
    let base = cfg.cost_params()?;
    let opts = cfg.exec_options()?;
    let data = cfg.dataset(&net)?;
    let mut csv = format!("{SWEEP_HEADER}\n");
    for value in values {
        let v = variant(axis, value, &net, &hw, &base, &opts)?;
        csv.push_str(&sweep_row(axis, &v, data.as_ref())?);
        csv.push('\n');
    }
    let dir = new_run_dir(&cfg.out)?;
    write_new(&dir, "sweep.csv", &csv)?;
    Ok(dir)
}

/// Runs every built-in check. The caller decides what a failure means.
pub fn cmd_verify(cfg: &VerifyConfig) -> Vec<CheckOutcome> {
    checks::run_all(cfg)
}
