//! Template programs and whole networks against the dense reference.

use std::time::Instant;

use cenn_forge::templates::{self, TemplateProgram};
use cenn_forge::{ExecOptions, Executor, Grid, HardwareConfig, Shape};
use cenn_forge_oracle as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CheckOutcome, VerifyConfig, CONV_TOL, E2E_BUDGET, SCORE_TOL};
use crate::bridge::{from_map, oracle_layers, oracle_scores, to_map};

fn rng(cfg: &VerifyConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

fn random_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize, f: impl Fn(&mut ChaCha8Rng) -> f64) -> oracle::Map {
    (0..rows).map(|_| (0..cols).map(|_| f(rng)).collect()).collect()
}

pub fn check_relu(_cfg: &VerifyConfig) -> CheckOutcome {
    let vals: Vec<f64> = (-1000..=1000).map(|k| k as f64 / 1000.0).collect();
    let g = Grid::from_vec(Shape::new(1, vals.len()), vals.clone()).expect("row");
    let out = match templates::relu_program().run(&g) {
        Ok(o) => o,
        Err(e) => return CheckOutcome::new("4a", "relu program", false, e.to_string()),
    };
    // (x - 1) + 1 rounds once when x is not dyadic
    let worst = vals.iter().zip(out.as_slice()).map(|(x, y)| (y - x.max(0.0)).abs()).fold(0.0, f64::max);
    CheckOutcome::new(
        "4a",
        "relu program",
        worst <= f64::EPSILON,
        format!("{} values in [-1, 1], max deviation {worst:.1e}", vals.len()),
    )
}

fn first_difference(a: &oracle::Map, b: &oracle::Map) -> Option<(usize, usize)> {
    if a.len() != b.len() || a.first().map(Vec::len) != b.first().map(Vec::len) {
        return Some((0, 0));
    }
    (0..a.len()).flat_map(|r| (0..a[r].len()).map(move |c| (r, c))).find(|&(r, c)| a[r][c] != b[r][c])
}

/// First grid where the program and the reference differ.
fn maxpool_mismatch(cfg: &VerifyConfig, cross_oracle: bool) -> Result<(usize, Option<String>), String> {
    let plain = templates::maxpool_program(false);
    let down = templates::maxpool_program(true);
    let filter = |m: &oracle::Map| if cross_oracle { oracle::max_filter_cross(m) } else { oracle::max_filter_square(m) };
    let compare = |p: &TemplateProgram, m: &oracle::Map, downsample: bool| -> Result<Option<String>, String> {
        let got = to_map(&p.run(&from_map(m)).map_err(|e| e.to_string())?);
        let mut want = filter(m);
        if downsample {
            want = oracle::downsample(&want, false).ok_or("odd map")?;
        }
        Ok(first_difference(&got, &want).map(|(r, c)| {
            format!(
                "{}x{} input, output cell ({r}, {c}) is {} where the reference has {}",
                m.len(),
                m[0].len(),
                got[r][c],
                want[r][c]
            )
        }))
    };

    let mut r = rng(cfg, if cross_oracle { 1 } else { 2 });
    let random = cfg.trials(10_000);
    let mut checked = 0;
    for i in 0..random {
        // values k/256 in [0, 1]: pooling always follows a ReLU
        let downsample = i % 2 == 1;
        let (rows, cols) = if downsample {
            (2 * r.gen_range(1..=4), 2 * r.gen_range(1..=4))
        } else {
            (r.gen_range(1..=8), r.gen_range(1..=8))
        };
        let m = random_map(&mut r, rows, cols, |r| r.gen_range(0..=256) as f64 / 256.0);
        checked += 1;
        if let Some(bad) = compare(if downsample { &down } else { &plain }, &m, downsample)? {
            return Ok((checked, Some(bad)));
        }
    }

    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let total = levels.len().pow(9);
    let exhaustive = cfg.trials(total).min(total);
    let found = (0..exhaustive).into_par_iter().find_map_first(|idx| {
        let mut k = idx;
        let mut m = oracle::zeros(3, 3);
        for cell in m.iter_mut().flatten() {
            *cell = levels[k % levels.len()];
            k /= levels.len();
        }
        compare(&plain, &m, false).transpose()
    });
    match found {
        Some(r) => Ok((checked + exhaustive, Some(r?))),
        None => Ok((checked + exhaustive, None)),
    }
}

fn maxpool_outcome(cfg: &VerifyConfig, id: &'static str, name: &'static str, cross: bool) -> CheckOutcome {
    match maxpool_mismatch(cfg, cross) {
        Ok((n, None)) => CheckOutcome::new(id, name, true, format!("{n} grids identical")),
        Ok((n, Some(bad))) => CheckOutcome::new(id, name, false, format!("mismatch at grid {n}: {bad}")),
        Err(e) => CheckOutcome::new(id, name, false, e),
    }
}

/// The 4-neighbor reference. The 16-step program is four in-place
/// directional compares, which together reach the full 3x3 window, so this
/// reports the first grid where the two disagree.
pub fn check_maxpool_cross(cfg: &VerifyConfig) -> CheckOutcome {
    maxpool_outcome(cfg, "4b", "maxpool program vs 4-neighbor max", true)
}

/// The same suite against the 3x3 window the program realizes.
pub fn check_maxpool_square(cfg: &VerifyConfig) -> CheckOutcome {
    maxpool_outcome(cfg, "4b*", "maxpool program vs 3x3 max", false)
}

pub fn check_conv(cfg: &VerifyConfig) -> CheckOutcome {
    let mut r = rng(cfg, 3);
    let trials = cfg.trials(1000);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut k = [[0.0; 3]; 3];
        for v in k.iter_mut().flatten() {
            *v = r.gen_range(-1.0..=1.0);
        }
        let bias = r.gen_range(-1.0..=1.0);
        let (rows, cols) = (r.gen_range(1..=8), r.gen_range(1..=8));
        let m = random_map(&mut r, rows, cols, |r| r.gen_range(-1.0..=1.0));
        let got = match templates::conv_program(k, bias).and_then(|p| p.run(&from_map(&m))) {
            Ok(g) => to_map(&g),
            Err(e) => return CheckOutcome::new("4c", "conv program", false, e.to_string()),
        };
        let want = oracle::correlate3(&m, &k, bias);
        let d = got.iter().flatten().zip(want.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
    }
    CheckOutcome::new(
        "4c",
        "conv program",
        worst <= CONV_TOL,
        format!("{trials} kernel/image pairs, max deviation {worst:.1e}"),
    )
}

struct Trial {
    deviation: f64,
    same_argmax: bool,
}

fn e2e_trial(cfg: &VerifyConfig, name: &str, seed: u64) -> Result<Trial, String> {
    let mut net = cfg.network(name)?;
    net.randomize(seed);
    let hw = HardwareConfig::mnist();
    let exec = Executor::new(&net, &hw, ExecOptions::default()).map_err(|e| e.to_string())?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let image: Vec<Grid> = (0..net.input_maps)
        .map(|_| Grid::from_fn(net.input_shape, |_, _| cenn_forge::netspec::normalize_byte(r.gen())))
        .collect();
    let got = exec.run(&image).map_err(|e| e.to_string())?;
    let layers = oracle_layers(&net).map_err(|e| e.to_string())?;
    let want = oracle_scores(&net, &layers, &image, hw.n_arrays).map_err(|e| e.to_string())?;
    let deviation = got.scores.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Trial {
        deviation,
        same_argmax: Some(got.predicted) == oracle::argmax(&want),
    })
}

pub fn check_end_to_end(cfg: &VerifyConfig) -> CheckOutcome {
    let start = Instant::now();
    let per_net = cfg.trials(500);
    let jobs: Vec<(&str, u64)> = ["mnist_design1", "mnist_design2"]
        .into_iter()
        .flat_map(|n| (0..per_net as u64).map(move |i| (n, i)))
        .collect();
    let results: Result<Vec<Trial>, String> = jobs
        .par_iter()
        .map(|&(name, i)| e2e_trial(cfg, name, cfg.seed.wrapping_mul(1_000_003).wrapping_add(i)))
        .collect();
    let results = match results {
        Ok(r) => r,
        Err(e) => return CheckOutcome::new("4d", "end-to-end vs dense reference", false, e),
    };
    let worst = results.iter().map(|t| t.deviation).fold(0.0, f64::max);
    let agree = results.iter().filter(|t| t.same_argmax).count();
    let elapsed = start.elapsed();
    CheckOutcome::new(
        "4d",
        "end-to-end vs dense reference",
        agree == results.len() && worst <= SCORE_TOL && elapsed < E2E_BUDGET,
        format!(
            "{} trials, argmax agrees on {agree}, max score deviation {worst:.1e}, {:.1} s",
            results.len(),
            elapsed.as_secs_f64()
        ),
    )
}
