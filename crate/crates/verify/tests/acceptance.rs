//! One test per acceptance criterion. Each prints its PASS/FAIL line to the
//! real stdout, so the lines show even when the harness captures output.
//! Tolerances live next to the checks in `cenn_forge_cli::checks`.

use std::io::Write;

use cenn_forge_cli::checks::{self, CheckOutcome, VerifyConfig};

fn report(outcome: CheckOutcome) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {outcome}");
    let _ = out.flush();
    assert!(outcome.passed, "{outcome}");
}

fn cfg() -> VerifyConfig {
    VerifyConfig::default()
}

#[test]
fn criterion_1_cost_reproduction() {
    report(checks::check_cost_reproduction(&cfg()));
}

#[test]
fn criterion_2_step_calibration() {
    report(checks::check_step_calibration(&cfg()));
}

#[test]
fn criterion_3_precision_scaling() {
    report(checks::check_precision_scaling(&cfg()));
}

#[test]
fn criterion_4a_relu_exhaustive() {
    report(checks::check_relu(&cfg()));
}

#[test]
fn criterion_4b_maxpool_four_neighbor() {
    report(checks::check_maxpool_cross(&cfg()));
}

#[test]
fn criterion_4b_maxpool_square_window() {
    report(checks::check_maxpool_square(&cfg()));
}

#[test]
fn criterion_4c_conv() {
    report(checks::check_conv(&cfg()));
}

#[test]
fn criterion_4d_end_to_end() {
    report(checks::check_end_to_end(&cfg()));
}

#[test]
fn criterion_5_dynamics() {
    report(checks::check_dynamics(&cfg()));
}

#[test]
fn criterion_6_scheduler_structure() {
    report(checks::check_structure(&cfg()));
}

#[test]
fn criterion_7_analytic_delay() {
    report(checks::check_analytic(&cfg()));
}

#[test]
fn criterion_8_nonideal() {
    report(checks::check_nonideal(&cfg()));
}

#[test]
fn criterion_9_determinism() {
    report(checks::check_determinism(&cfg()));
}
