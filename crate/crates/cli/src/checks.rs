//! Built-in verification suite: cost calibration, template-program and
//! end-to-end equivalence against the dense reference, dynamics, trace
//! structure, the closed-form delay model, OTA handling and determinism.

use std::fmt;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use cenn_forge::cost::CostParams;
use cenn_forge::netspec::load_network;
use cenn_forge::{analytic_delay, compile, precision_scale, trace_cost, Activity, CeNNProgram, HardwareConfig, NetworkSpec, PrecisionScale};

use crate::config::DEFAULT_COST_PRESET;

mod equivalence;
mod runtime;

pub use equivalence::{check_conv, check_end_to_end, check_maxpool_cross, check_maxpool_square, check_relu};
pub use runtime::{check_determinism, check_dynamics, check_nonideal};

/// Published per-layer delay (ns) and energy (pJ) for the two MNIST designs
/// under the 4-bit preset.
pub const DESIGN1_TABLE: &[(&str, f64, f64)] = &[
    ("conv1", 5.3, 626.0),
    ("relu1", 10.7, 536.0),
    ("pool1", 85.5, 4290.0),
    ("conv2", 42.8, 2827.0),
    ("relu2", 10.7, 410.0),
    ("pool2", 85.5, 3277.0),
    ("fc", 291.1, 7875.0),
];
pub const DESIGN1_TOTAL: (f64, f64) = (531.6, 19841.0);

pub const DESIGN2_TABLE: &[(&str, f64, f64)] = &[
    ("conv1", 5.3, 626.0),
    ("relu1", 10.7, 536.0),
    ("pool1", 85.5, 3398.0),
    ("conv2", 42.8, 981.0),
    ("relu2", 10.7, 186.0),
    ("pool2", 85.5, 1489.0),
    ("conv3", 42.8, 519.0),
    ("relu3", 10.7, 115.0),
    ("pool3", 85.5, 921.0),
    ("conv4", 53.4, 582.0),
];
pub const DESIGN2_TOTAL: (f64, f64) = (432.9, 9353.0);

/// 8-bit design 1 totals.
pub const DESIGN1_8BIT_TOTAL: (f64, f64) = (1442.0, 104_900.0);

pub const TOTAL_TOL: f64 = 0.03;
pub const ROW_TOL: f64 = 0.05;
pub const STEP_TOL: f64 = 0.01;
pub const SCALED_TOL: f64 = 0.10;
pub const CONV_TOL: f64 = 1e-6;
pub const SCORE_TOL: f64 = 1e-5;
pub const DYNAMICS_TOL: f64 = 1e-6;
pub const COST_BUDGET: Duration = Duration::from_secs(1);
pub const E2E_BUDGET: Duration = Duration::from_secs(120);

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub cost_preset: String,
    /// Directory holding `mnist_design1.toml` and `mnist_design2.toml` to use
    /// instead of the built-in network presets.
    pub networks: Option<PathBuf>,
    pub seed: u64,
    /// Fraction of the full trial counts, for smoke runs.
    pub scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            cost_preset: DEFAULT_COST_PRESET.to_string(),
            networks: None,
            seed: 1,
            scale: 1.0,
        }
    }
}

impl VerifyConfig {
    /// `full` scaled down, but never below one.
    pub fn trials(&self, full: usize) -> usize {
        ((full as f64 * self.scale).ceil() as usize).max(1)
    }

    pub fn network(&self, name: &str) -> Result<NetworkSpec, String> {
        match &self.networks {
            Some(dir) => load_network(&dir.join(format!("{name}.toml"))).map_err(|e| e.to_string()),
            None => NetworkSpec::preset(name).map_err(|e| e.to_string()),
        }
    }

    pub fn cost(&self) -> Result<CostParams, String> {
        CostParams::resolve(&self.cost_preset).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(id: &'static str, name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            id,
            name,
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(id: &'static str, name: &'static str, r: Result<(bool, String), String>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(id, name, passed, detail),
            Err(e) => Self::new(id, name, false, e),
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

pub fn run_all(cfg: &VerifyConfig) -> Vec<CheckOutcome> {
    vec![
        check_cost_reproduction(cfg),
        check_step_calibration(cfg),
        check_precision_scaling(cfg),
        check_relu(cfg),
        check_maxpool_cross(cfg),
        check_maxpool_square(cfg),
        check_conv(cfg),
        check_end_to_end(cfg),
        check_dynamics(cfg),
        check_structure(cfg),
        check_analytic(cfg),
        check_nonideal(cfg),
        check_determinism(cfg),
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn program(cfg: &VerifyConfig, name: &str) -> Result<(NetworkSpec, CeNNProgram), String> {
    let net = cfg.network(name)?;
    let prog = compile(&net, &HardwareConfig::mnist()).map_err(|e| e.to_string())?;
    Ok((net, prog))
}

fn cost_of(prog: &CeNNProgram, p: &CostParams) -> Result<cenn_forge::CostReport, String> {
    trace_cost(prog, p, &Activity::from_program(prog)).map_err(|e| e.to_string())
}

/// Worst relative error over table rows and totals, and whether all are in
/// tolerance.
fn compare_table(r: &cenn_forge::CostReport, rows: &[(&str, f64, f64)], total: (f64, f64)) -> Result<(bool, f64, f64), String> {
    let mut worst_row: f64 = 0.0;
    for &(layer, d, e) in rows {
        let l = r.layer(layer).ok_or_else(|| format!("{}: no layer '{layer}' in the trace", r.network))?;
        worst_row = worst_row.max(rel(l.delay_ns, d)).max(rel(l.energy_pj, e));
    }
    let worst_total = rel(r.total_delay_ns, total.0).max(rel(r.total_energy_pj, total.1));
    Ok((worst_row <= ROW_TOL && worst_total <= TOTAL_TOL, worst_row, worst_total))
}

pub fn check_cost_reproduction(cfg: &VerifyConfig) -> CheckOutcome {
    let run = || -> Result<(bool, String), String> {
        let start = Instant::now();
        let p = cfg.cost()?;
        let mut ok = true;
        let mut detail = Vec::new();
        for (name, rows, total) in [("mnist_design1", DESIGN1_TABLE, DESIGN1_TOTAL), ("mnist_design2", DESIGN2_TABLE, DESIGN2_TOTAL)] {
            let (_, prog) = program(cfg, name)?;
            let r = cost_of(&prog, &p)?;
            let (pass, row, tot) = compare_table(&r, rows, total)?;
            ok &= pass;
            detail.push(format!(
                "{name} {:.1} ns / {:.0} pJ (total err {:.2}%, worst row {:.2}%)",
                r.total_delay_ns,
                r.total_energy_pj,
                100.0 * tot,
                100.0 * row
            ));
        }
        let elapsed = start.elapsed();
        ok &= elapsed < COST_BUDGET;
        detail.push(format!("{:.0} ms", elapsed.as_secs_f64() * 1e3));
        Ok((ok, detail.join("; ")))
    };
    CheckOutcome::from_result("1", "cost reproduction", run())
}

pub fn check_step_calibration(cfg: &VerifyConfig) -> CheckOutcome {
    let run = || -> Result<(bool, String), String> {
        let p = cfg.cost()?;
        let (_, prog) = program(cfg, "mnist_design1")?;
        let r = cost_of(&prog, &p)?;
        // settle plus reprogramming, the template fetch included
        let step = p.step_ns();
        let mut worst: f64 = 0.0;
        for (layer, steps, published) in [("relu1", 2.0, 10.7), ("relu2", 2.0, 10.7), ("pool1", 16.0, 85.5), ("pool2", 16.0, 85.5)] {
            let l = r.layer(layer).ok_or_else(|| format!("no layer '{layer}'"))?;
            worst = worst.max(rel(l.delay_ns, steps * step)).max(rel(l.delay_ns, published));
        }
        Ok((worst <= STEP_TOL, format!("step {:.3} ns, worst error {:.3}%", step, 100.0 * worst)))
    };
    CheckOutcome::from_result("2", "per-step calibration", run())
}

pub fn check_precision_scaling(cfg: &VerifyConfig) -> CheckOutcome {
    let run = || -> Result<(bool, String), String> {
        let start = Instant::now();
        let p8 = precision_scale(&cfg.cost()?, &PrecisionScale::four_to_eight());
        let (_, prog) = program(cfg, "mnist_design1")?;
        let r = cost_of(&prog, &p8)?;
        let err = rel(r.total_delay_ns, DESIGN1_8BIT_TOTAL.0).max(rel(r.total_energy_pj, DESIGN1_8BIT_TOTAL.1));
        let elapsed = start.elapsed();
        Ok((
            err <= SCALED_TOL && elapsed < COST_BUDGET,
            format!(
                "{:.0} ns / {:.0} pJ, worst error {:.2}%, {:.0} ms",
                r.total_delay_ns,
                r.total_energy_pj,
                100.0 * err,
                elapsed.as_secs_f64() * 1e3
            ),
        ))
    };
    CheckOutcome::from_result("3", "precision scaling", run())
}

pub fn check_structure(cfg: &VerifyConfig) -> CheckOutcome {
    use cenn_forge::templates;
    use cenn_forge::{LayerOp, ReluKind};
    let run = || -> Result<(bool, String), String> {
        let (net, prog) = program(cfg, "mnist_design1")?;
        if prog.hw.n_arrays != 4 {
            return Err(format!("expected 4 arrays, got {}", prog.hw.n_arrays));
        }
        let mut bad = Vec::new();
        for (li, l) in net.layers.iter().enumerate() {
            let c = prog.layer_counts(li);
            let steps = match &l.op {
                LayerOp::Conv(_) => {
                    if c.template_apply != l.out_maps * l.in_maps || c.accumulate != l.out_maps * (l.in_maps - 1) {
                        bad.push(format!("{}: {} applies, {} accumulates", l.name, c.template_apply, c.accumulate));
                    }
                    continue;
                }
                LayerOp::Relu(ReluKind::Linear) => templates::relu_program().compute_steps(),
                LayerOp::Relu(ReluKind::Nonlinear) => templates::nonlinear_relu_program().compute_steps(),
                LayerOp::Pool { .. } => prog
                    .events_of_layer(li)
                    .filter(|e| matches!(e.kind, cenn_forge::scheduler::EventKind::TemplateApply { .. } | cenn_forge::scheduler::EventKind::Accumulate { .. }))
                    .map(|e| e.phase)
                    .collect::<std::collections::BTreeSet<_>>()
                    .len(),
                LayerOp::Fc(_) => continue,
            };
            if c.sram_read != steps {
                bad.push(format!("{}: {} SRAM reads for {steps} template sets", l.name, c.sram_read));
            }
        }
        let detail = if bad.is_empty() {
            format!("{} layers, {} phases", net.layers.len(), prog.phases)
        } else {
            bad.join("; ")
        };
        Ok((bad.is_empty(), detail))
    };
    CheckOutcome::from_result("6", "scheduler structure", run())
}

/// Four 8x8 maps in and out on four arrays.
const ANALYTIC_NET: &str = r#"
name = "analytic"
input_shape = [8, 8]
input_maps = 4
class_count = 4
precision = 4

[[layers]]
name = "c"
kind = "conv"
out_maps = 4
"#;

pub fn check_analytic(cfg: &VerifyConfig) -> CheckOutcome {
    use cenn_forge::{Precision, Shape};
    let run = || -> Result<(bool, String), String> {
        let p = cfg.cost()?;
        let net = NetworkSpec::parse(ANALYTIC_NET, "analytic").map_err(|e| e.to_string())?;
        let hw = |n, slots| HardwareConfig::new(n, Shape::new(8, 8), slots, Precision::Bits(4)).map_err(|e| e.to_string());
        let a = analytic_delay(&net, &hw(4, 8)?, &p).map_err(|e| e.to_string())?;
        // C_l C_(l-1) / (N - 1) + C_l C_(l-1) / N steps, then C_l C_(l-1) / (2(N - 1)) reads and writes
        let want = (16.0 / 3.0 + 16.0 / 4.0) * p.step_ns() + 16.0 / 6.0 * (p.t_mem_read_ns + p.t_mem_write_ns);
        let got = a.layers.first().map(|l| l.1).ok_or("no analytic rows")?;
        let single = analytic_delay(&net, &hw(1, 64)?, &p);
        let ok = rel(got, want) < 1e-12 && matches!(single, Err(cenn_forge::Error::Model(_)));
        Ok((
            ok,
            format!(
                "C=4, N=4: {got:.4} ns (closed form {want:.4}); N=1: {}",
                single.err().map_or("accepted".to_string(), |e| e.to_string())
            ),
        ))
    };
    CheckOutcome::from_result("7", "analytic delay", run())
}
