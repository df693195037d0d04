//! Dynamics, OTA handling and run determinism.

use std::fs;
use std::path::Path;

use cenn_forge::cenn::{settle_feedforward, settle_ode};
use cenn_forge::{
    BoundaryPolicy, CeNNArrayState, ExecMode, ExecOptions, Executor, Grid, HardwareConfig, NetworkSpec, NonlinearD, OtaCurve,
    SettleConfig, Shape, Template,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CheckOutcome, VerifyConfig, DYNAMICS_TOL};
use crate::commands::cmd_run;
use crate::config::RunConfig;

fn matrix(r: &mut ChaCha8Rng, span: f64) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for v in m.iter_mut().flatten() {
        *v = r.gen_range(-span..=span);
    }
    m
}

fn input(r: &mut ChaCha8Rng) -> Grid {
    let shape = Shape::new(r.gen_range(1..=6), r.gen_range(1..=6));
    Grid::from_fn(shape, |_, _| r.gen_range(-1.0..=1.0))
}

/// Largest |x_ode - x_closed| over one random feed-forward template, and the
/// change from halving the Euler step on a random stable feedback template.
fn dynamics_trial(seed: u64) -> Result<(f64, f64), String> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let err = |e: cenn_forge::Error| e.to_string();
    let u = input(&mut r);
    let ff = Template::feedforward(matrix(&mut r, 0.5), r.gen_range(-0.5..=0.5)).map_err(err)?;
    let state = CeNNArrayState::new(u.clone());
    let closed = settle_feedforward(&state, &ff, BoundaryPolicy::Zero).map_err(err)?;
    let ode = settle_ode(&state, &ff, BoundaryPolicy::Zero, &SettleConfig::default()).map_err(err)?;
    let gap = ode.x.max_abs_diff(&closed.x).max(ode.y.max_abs_diff(&closed.y));

    // off-center feedback summing below 1 in magnitude keeps the map contracting
    let mut a = matrix(&mut r, 0.1);
    a[1][1] = r.gen_range(-0.2..=0.2);
    let fb = Template::new(a, matrix(&mut r, 0.5), r.gen_range(-0.5..=0.5), NonlinearD::None).map_err(err)?;
    let tight = SettleConfig {
        dt: 0.01,
        t_max: 60.0,
        eps: 1e-9,
        ..SettleConfig::default()
    };
    let half = SettleConfig { dt: 0.005, ..tight };
    let coarse = settle_ode(&state, &fb, BoundaryPolicy::Zero, &tight).map_err(err)?;
    let fine = settle_ode(&state, &fb, BoundaryPolicy::Zero, &half).map_err(err)?;
    Ok((gap, coarse.y.max_abs_diff(&fine.y)))
}

pub fn check_dynamics(cfg: &VerifyConfig) -> CheckOutcome {
    let trials = cfg.trials(1000) as u64;
    let base = cfg.seed.wrapping_mul(7_919);
    let results: Result<Vec<(f64, f64)>, String> = (0..trials).into_par_iter().map(|i| dynamics_trial(base.wrapping_add(i))).collect();
    match results {
        Ok(v) => {
            let gap = v.iter().map(|t| t.0).fold(0.0, f64::max);
            let halving = v.iter().map(|t| t.1).fold(0.0, f64::max);
            CheckOutcome::new(
                "5",
                "ODE vs closed form",
                gap <= DYNAMICS_TOL && halving < DYNAMICS_TOL,
                format!("{trials} templates, max gap {gap:.1e}, step-halving change {halving:.1e}"),
            )
        }
        Err(e) => CheckOutcome::new("5", "ODE vs closed form", false, e),
    }
}

/// Small enough to run many random instances quickly.
pub const SMALL_NET: &str = r#"
name = "small"
input_shape = [10, 10]
input_maps = 1
class_count = 4
precision = 4

[[layers]]
name = "conv1"
kind = "conv"
out_maps = 2

[[layers]]
name = "relu1"
kind = "relu"

[[layers]]
name = "pool1"
kind = "pool"
pool = "max_linear"
downsample = "half"

[[layers]]
name = "conv2"
kind = "conv"
out_maps = 4
"#;

fn nonideal_trial(seed: u64) -> Result<(bool, bool), String> {
    let err = |e: cenn_forge::Error| e.to_string();
    let mut net = NetworkSpec::parse(SMALL_NET, "small").map_err(err)?;
    net.randomize(seed);
    let hw = HardwareConfig::for_network(&net);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let image = vec![Grid::from_fn(net.input_shape, |_, _| r.gen_range(-1.0..=1.0))];
    let run = |opts: ExecOptions| Executor::new(&net, &hw, opts).and_then(|e| e.run(&image)).map_err(err);
    let ideal = run(ExecOptions::default())?;
    let straight = run(ExecOptions {
        curve: OtaCurve::ideal(),
        ..ExecOptions::with_mode(ExecMode::Nonideal)
    })?;
    let saturating = run(ExecOptions {
        curve: OtaCurve::default_saturating(),
        ..ExecOptions::with_mode(ExecMode::Nonideal)
    })?;
    let identical = ideal.scores.len() == straight.scores.len()
        && ideal.scores.iter().zip(&straight.scores).all(|(a, b)| a.to_bits() == b.to_bits());
    Ok((identical, ideal.predicted == saturating.predicted))
}

pub fn check_nonideal(cfg: &VerifyConfig) -> CheckOutcome {
    let trials = cfg.trials(200) as u64;
    let base = cfg.seed.wrapping_mul(104_729);
    let results: Result<Vec<(bool, bool)>, String> = (0..trials).into_par_iter().map(|i| nonideal_trial(base.wrapping_add(i))).collect();
    match results {
        Ok(v) => {
            let identical = v.iter().filter(|t| t.0).count();
            let agree = v.iter().filter(|t| t.1).count();
            CheckOutcome::new(
                "8",
                "nonideal mode",
                identical == v.len(),
                format!(
                    "straight-line curve bit-identical on {identical}/{trials}; saturating curve argmax agreement {agree}/{trials} ({:.1}%)",
                    100.0 * agree as f64 / trials as f64
                ),
            )
        }
        Err(e) => CheckOutcome::new("8", "nonideal mode", false, e),
    }
}

fn read_tree(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = fs::read(entry.path()).map_err(|e| format!("{}: {e}", entry.path().display()))?;
        files.push((entry.file_name().to_string_lossy().into_owned(), bytes));
    }
    files.sort();
    Ok(files)
}

pub fn check_determinism(cfg: &VerifyConfig) -> CheckOutcome {
    let run = || -> Result<(bool, String), String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut trees = Vec::new();
        for out in ["a", "b"] {
            let mut rc = RunConfig::new("mnist_design1");
            rc.synthetic = Some(cfg.trials(16));
            rc.seed = cfg.seed;
            rc.cost_preset = cfg.cost_preset.clone();
            rc.out = tmp.path().join(out);
            let dir = cmd_run(&rc).map_err(|e| e.to_string())?;
            trees.push(read_tree(&dir)?);
        }
        let same = trees[0] == trees[1];
        let names: Vec<&str> = trees[0].iter().map(|(n, _)| n.as_str()).collect();
        Ok((same, format!("two seeded runs, files {} {}", names.join(", "), if same { "byte-identical" } else { "differ" })))
    };
    match run() {
        Ok((p, d)) => CheckOutcome::new("9", "determinism", p, d),
        Err(e) => CheckOutcome::new("9", "determinism", false, e),
    }
}
