use proptest::prelude::*;

use super::*;
use crate::netspec::NetworkSpec;
use crate::scheduler::{compile, CeNNProgram, HardwareConfig};

const DESIGN1: &[(&str, f64, f64)] = &[
    ("conv1", 5.3, 626.0),
    ("relu1", 10.7, 536.0),
    ("pool1", 85.5, 4290.0),
    ("conv2", 42.8, 2827.0),
    ("relu2", 10.7, 410.0),
    ("pool2", 85.5, 3277.0),
    ("fc", 291.1, 7875.0),
];

const DESIGN2: &[(&str, f64, f64)] = &[
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

fn program(name: &str) -> CeNNProgram {
    compile(&NetworkSpec::preset(name).unwrap(), &HardwareConfig::mnist()).unwrap()
}

fn cost(prog: &CeNNProgram, p: &CostParams) -> CostReport {
    trace_cost(prog, p, &Activity::from_program(prog)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn p4() -> CostParams {
    CostParams::preset("paper-4bit-32nm").unwrap()
}

#[test]
fn presets_parse() {
    for (name, _) in PRESETS {
        let p = CostParams::preset(name).unwrap();
        assert_eq!(&p.name, name);
    }
    assert!(CostParams::preset("nope").is_err());
}

#[test]
fn negative_parameter_rejected() {
    let text = p4().to_toml().replace("t_cenn_ns = 4.8", "t_cenn_ns = -4.8");
    assert!(matches!(CostParams::parse(&text, "x"), Err(Error::Model(_))));
}

#[test]
fn step_time_calibration() {
    let p = p4();
    assert!(rel(p.step_ns(), 5.34) < 1e-12);
    // 10.7 ns over two steps and 85.5 ns over sixteen
    assert!(rel(2.0 * p.step_ns(), 10.7) < 0.01);
    assert!(rel(16.0 * p.step_ns(), 85.5) < 0.01);
}

#[test]
fn relu_and_pool_cost_whole_steps() {
    let p = p4();
    let r = cost(&program("mnist_design1"), &p);
    for l in ["relu1", "relu2"] {
        assert!(rel(r.layer(l).unwrap().delay_ns, 2.0 * p.step_ns()) < 1e-12);
    }
    for l in ["pool1", "pool2"] {
        assert!(rel(r.layer(l).unwrap().delay_ns, 16.0 * p.step_ns()) < 1e-12);
    }
}

#[test]
fn published_layer_costs_reproduced() {
    for (name, rows, total) in [("mnist_design1", DESIGN1, (531.6, 19841.0)), ("mnist_design2", DESIGN2, (432.9, 9353.0))] {
        let r = cost(&program(name), &p4());
        for &(layer, d, e) in rows {
            let l = r.layer(layer).unwrap();
            assert!(rel(l.delay_ns, d) <= 0.05, "{name} {layer} delay {}", l.delay_ns);
            assert!(rel(l.energy_pj, e) <= 0.05, "{name} {layer} energy {}", l.energy_pj);
        }
        assert!(rel(r.total_delay_ns, total.0) <= 0.03, "{name} {}", r.total_delay_ns);
        assert!(rel(r.total_energy_pj, total.1) <= 0.03, "{name} {}", r.total_energy_pj);
    }
}

#[test]
fn frozen_calibration_rederives() {
    let p = p4();
    for (name, rows) in [("mnist_design1", DESIGN1), ("mnist_design2", DESIGN2)] {
        let targets: Vec<(&str, f64)> = rows.iter().filter(|r| r.0 != "fc").map(|r| (r.0, r.2)).collect();
        let got = calibrate_layers(&program(name), &p, &targets).unwrap();
        for c in got {
            let stored = p.e_cell_step(name, &c.layer);
            assert!(rel(stored, c.e_cell_step_pj) < 1e-8, "{name} {}: {stored} vs {}", c.layer, c.e_cell_step_pj);
        }
    }
}

#[test]
fn eight_bit_preset_is_the_scaled_four_bit_preset() {
    let scaled = precision_scale(&p4(), &PrecisionScale::four_to_eight());
    let stored = CostParams::preset("paper-8bit-32nm").unwrap();
    assert!(rel(scaled.t_cenn_ns, 4.3 * p4().t_cenn_ns) < 1e-12);
    let a: toml::Table = toml::from_str(&scaled.to_toml()).unwrap();
    let b: toml::Table = toml::from_str(&stored.to_toml()).unwrap();
    for (k, v) in &a {
        if let Some(x) = v.as_float() {
            let y = b[k].as_float().unwrap();
            assert!(rel(x, y) < 1e-8 || x == y, "{k}: {x} vs {y}");
        }
    }
    for (x, y) in scaled.calibration.iter().zip(&stored.calibration) {
        assert!(rel(x.e_cell_step_pj, y.e_cell_step_pj) < 1e-8);
    }
}

#[test]
fn identity_scale_is_a_no_op() {
    let p = p4();
    assert_eq!(precision_scale(&p, &PrecisionScale::identity(4)), p);
}

#[test]
fn eight_bit_design1_totals() {
    let r = cost(&program("mnist_design1"), &CostParams::preset("paper-8bit-32nm").unwrap());
    assert!(rel(r.total_delay_ns, 1442.0) <= 0.10, "{}", r.total_delay_ns);
    assert!(rel(r.total_energy_pj, 104_900.0) <= 0.10, "{}", r.total_energy_pj);
}

#[test]
fn analytic_formula_literal() {
    let text = r#"
name = "one"
input_shape = [8, 8]
input_maps = 4
class_count = 4
precision = 4
[[layers]]
name = "c"
kind = "conv"
out_maps = 4
"#;
    let net = NetworkSpec::parse(text, "t").unwrap();
    let p = p4();
    let hw = HardwareConfig::new(4, crate::grid::Shape::new(8, 8), 8, crate::netspec::Precision::Bits(4)).unwrap();
    let a = analytic_delay(&net, &hw, &p).unwrap();
    let want = (16.0 / 3.0 + 16.0 / 4.0) * 5.34 + 16.0 / 6.0 * (0.253 + 0.124);
    assert!(rel(a.layers[0].1, want) < 1e-12);
    assert_eq!(a.layers[1].0, "readout");
    let one = HardwareConfig::new(1, crate::grid::Shape::new(8, 8), 64, crate::netspec::Precision::Bits(4)).unwrap();
    assert!(matches!(analytic_delay(&net, &one, &p), Err(Error::Model(_))));
}

#[test]
fn analytic_column_flags_divergence() {
    let net = NetworkSpec::preset("mnist_design1").unwrap();
    let prog = program("mnist_design1");
    let mut r = cost(&prog, &p4());
    r.attach_analytic(&analytic_delay(&net, &HardwareConfig::mnist(), &p4()).unwrap());
    // conv1 packs four outputs into one step; the closed form charges 16/3+1 steps
    assert!(r.divergent_layers().contains(&"conv1"));
    assert!(!r.layer("relu1").unwrap().diverges());
    assert!(!r.layer("pool1").unwrap().diverges());
    assert!(r.analytic_total_ns.unwrap() > 0.0);
}

#[test]
fn report_is_internally_consistent() {
    let r = cost(&program("mnist_design2"), &p4());
    let d: f64 = r.layers.iter().map(|l| l.delay_ns).sum();
    let e: f64 = r.layers.iter().map(|l| l.energy_pj).sum();
    assert!(rel(r.total_delay_ns, d) < 1e-12);
    assert!(rel(r.total_energy_pj, e) < 1e-12);
    assert_eq!(r.edp, r.total_delay_ns * r.total_energy_pj);
    assert!(rel(r.delay.total(), r.total_delay_ns) < 1e-12);
    for l in &r.layers {
        assert!(rel(l.energy.total(), l.energy_pj) < 1e-12 || l.energy_pj == 0.0);
    }
}

#[test]
fn csv_and_toml_formats() {
    let r = cost(&program("mnist_design1"), &p4());
    let csv = r.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CostReport::CSV_HEADER);
    assert_eq!(lines.len(), r.layers.len() + 2);
    assert!(lines.last().unwrap().starts_with("total,"));
    let cols = CostReport::CSV_HEADER.split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == cols));
    assert_eq!(CostReport::from_toml(&r.to_toml(), "r").unwrap(), r);
}

#[test]
fn activity_must_cover_the_trace() {
    let prog = program("mnist_design1");
    let short = Activity::from_cells(vec![1; prog.events.len() - 1]);
    assert!(matches!(trace_cost(&prog, &p4(), &short), Err(Error::Model(_))));
}

#[test]
fn delay_ignores_active_cell_count() {
    let prog = program("mnist_design1");
    let full = cost(&prog, &p4());
    let half = Activity::from_cells(Activity::from_program(&prog).cells().iter().map(|c| c / 2).collect());
    let r = trace_cost(&prog, &p4(), &half).unwrap();
    for (a, b) in full.layers.iter().zip(&r.layers) {
        assert_eq!(a.delay_ns, b.delay_ns);
        assert!(b.energy_pj <= a.energy_pj);
    }
}

#[test]
fn downsampled_layers_cost_less_energy() {
    let mut p = p4();
    p.calibration.clear();
    let d1 = cost(&program("mnist_design1"), &p);
    let d2 = cost(&program("mnist_design2"), &p);
    for l in ["conv2", "relu2", "pool2"] {
        assert!(d2.layer(l).unwrap().energy_pj <= d1.layer(l).unwrap().energy_pj, "{l}");
    }
}

fn bump(p: &mut CostParams, field: usize, by: f64) {
    let f: [&mut f64; 15] = [
        &mut p.t_cenn_ns,
        &mut p.t_prog_ns,
        &mut p.t_mem_read_ns,
        &mut p.t_mem_write_ns,
        &mut p.sram_read_delay_ns,
        &mut p.sram_read_energy_pj,
        &mut p.e_cell_step_pj,
        &mut p.e_mem_read_pj,
        &mut p.e_mem_write_pj,
        &mut p.adc_delay_ns,
        &mut p.adc_energy_pj,
        &mut p.fc_mult_delay_ns,
        &mut p.fc_mult_energy_pj,
        &mut p.fc_add_delay_ns,
        &mut p.fc_add_energy_pj,
    ];
    *f.into_iter().nth(field).unwrap() += by;
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn totals_monotone_in_every_parameter(field in 0usize..15, by in 0.0f64..3.0, design2 in any::<bool>()) {
        let prog = program(if design2 { "mnist_design2" } else { "mnist_design1" });
        let mut p = p4();
        p.calibration.clear();
        let before = cost(&prog, &p);
        bump(&mut p, field, by);
        let after = cost(&prog, &p);
        prop_assert!(after.total_delay_ns >= before.total_delay_ns);
        prop_assert!(after.total_energy_pj >= before.total_energy_pj);
        prop_assert!(after.edp >= before.edp);
    }
}
