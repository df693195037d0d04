//! Dense reference computations for cross-checking the simulator.
//!
//! Nothing here shares code with the simulator: maps are plain nested vectors,
//! saturation is written out piecewise and convolution is a direct
//! zero-padded correlation. Integer dot products use arbitrary precision.

#![allow(clippy::needless_range_loop, clippy::manual_clamp)]

use num_bigint::BigInt;

pub type Map = Vec<Vec<f64>>;
pub type Kernel = [[f64; 3]; 3];

/// Identity on `[-1, 1]`, `+-1` outside.
pub fn sat(x: f64) -> f64 {
    if x > 1.0 {
        1.0
    } else if x < -1.0 {
        -1.0
    } else {
        x
    }
}

pub fn zeros(rows: usize, cols: usize) -> Map {
    vec![vec![0.0; cols]; rows]
}

fn dims(m: &Map) -> (usize, usize) {
    (m.len(), m.first().map_or(0, Vec::len))
}

fn at(m: &Map, r: isize, c: isize) -> Option<f64> {
    if r < 0 || c < 0 {
        return None;
    }
    m.get(r as usize).and_then(|row| row.get(c as usize)).copied()
}

/// `sat(bias + sum k[i][j] * m[r+i-1][c+j-1])` with zeros outside the map.
pub fn correlate3(m: &Map, k: &Kernel, bias: f64) -> Map {
    let (rows, cols) = dims(m);
    let mut out = zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut s = bias;
            for (i, krow) in k.iter().enumerate() {
                for (j, &w) in krow.iter().enumerate() {
                    s += w * at(m, r as isize + i as isize - 1, c as isize + j as isize - 1).unwrap_or(0.0);
                }
            }
            out[r][c] = sat(s);
        }
    }
    out
}

pub fn add_sat(a: &Map, b: &Map) -> Map {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| sat(x + y)).collect())
        .collect()
}

pub fn relu(m: &Map) -> Map {
    m.iter().map(|row| row.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()).collect()
}

fn max_over(m: &Map, offsets: &[(isize, isize)]) -> Map {
    let (rows, cols) = dims(m);
    let mut out = zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[r][c] = offsets
                .iter()
                .filter_map(|&(dr, dc)| at(m, r as isize + dr, c as isize + dc))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}

/// Max over the cell and its 8 neighbors that lie inside the map.
pub fn max_filter_square(m: &Map) -> Map {
    let offs: Vec<(isize, isize)> = (-1..=1).flat_map(|dr| (-1..=1).map(move |dc| (dr, dc))).collect();
    max_over(m, &offs)
}

/// Max over the cell and its 4 edge neighbors that lie inside the map.
pub fn max_filter_cross(m: &Map) -> Map {
    max_over(m, &[(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)])
}

/// Zero-padded mean over a 2x2 window anchored at its top-left cell.
pub fn avg_2x2(m: &Map) -> Map {
    let (rows, cols) = dims(m);
    let mut out = zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let s: f64 = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .filter_map(|&(dr, dc)| at(m, r as isize + dr, c as isize + dc))
                .sum();
            out[r][c] = sat(0.25 * s);
        }
    }
    out
}

/// Zero-padded mean over the centered 3x3 window.
pub fn avg_3x3(m: &Map) -> Map {
    correlate3(m, &[[1.0 / 9.0; 3]; 3], 0.0)
}

/// Keeps cell `(2r, 2c)`. With `floor`, an odd trailing row or column is
/// dropped; otherwise odd dimensions are rejected.
pub fn downsample(m: &Map, floor: bool) -> Option<Map> {
    let (rows, cols) = dims(m);
    if !floor && (rows % 2 == 1 || cols % 2 == 1) {
        return None;
    }
    Some((0..rows / 2).map(|r| (0..cols / 2).map(|c| m[2 * r][2 * c]).collect()).collect())
}

/// Symmetric `Nb`-bit grid `k / 2^(Nb-1)`, `k` in `[-2^(Nb-1), 2^(Nb-1) - 1]`,
/// nearest level with ties to even `k`.
pub fn quantize(x: f64, bits: u32) -> f64 {
    let scale = (1i64 << (bits - 1)) as f64;
    let k = (x * scale).round_ties_even().clamp(-scale, scale - 1.0);
    k / scale
}

pub fn code(x: f64, bits: u32) -> i64 {
    (quantize(x, bits) * (1i64 << (bits - 1)) as f64) as i64
}

/// Exact integer scores: `bias << (Nb-1) + sum w * x` per output row.
pub fn fc_exact(inputs: &[i64], weights: &[Vec<i64>], bias: &[i64], bits: u32) -> Vec<BigInt> {
    weights
        .iter()
        .zip(bias)
        .map(|(row, &b)| {
            let mut acc = BigInt::from(b) << (bits - 1);
            for (&w, &x) in row.iter().zip(inputs) {
                acc += BigInt::from(w) * BigInt::from(x);
            }
            acc
        })
        .collect()
}

/// Float dot products plus bias.
pub fn fc_float(inputs: &[f64], weights: &[Vec<f64>], bias: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(inputs).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

/// First index of the largest value.
pub fn argmax<T: PartialOrd>(v: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        match best {
            Some(b) if v[b] >= *x => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Downsample {
    None,
    Half,
    HalfFloor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleLayer {
    /// `kernels[out][in]`, one bias per output.
    Conv { kernels: Vec<Vec<Kernel>>, bias: Vec<f64> },
    Relu,
    MaxPool { cross: bool, downsample: Downsample },
    AvgPool { window3: bool, downsample: Downsample },
    /// `weights[out][in]` over the maps flattened map-major, row-major.
    Fc { weights: Vec<Vec<f64>>, bias: Vec<f64> },
}

fn apply_downsample(m: Map, d: Downsample) -> Option<Map> {
    match d {
        Downsample::None => Some(m),
        Downsample::Half => downsample(&m, false),
        Downsample::HalfFloor => downsample(&m, true),
    }
}

/// Runs `layers` on `input`, returning every layer's output maps. An FC
/// layer's output is a single 1xK map.
///
/// Conv partial results are saturated as they are summed. The sum runs over
/// input maps in order, `group` at a time: each group's maps are summed left
/// to right, then the previous groups' running total is added.
pub fn forward(layers: &[OracleLayer], input: &[Map], group: usize) -> Option<Vec<Vec<Map>>> {
    let group = group.max(1);
    let mut maps: Vec<Map> = input.to_vec();
    let mut outs = Vec::with_capacity(layers.len());
    for layer in layers {
        maps = match layer {
            OracleLayer::Conv { kernels, bias } => kernels
                .iter()
                .zip(bias)
                .map(|(ks, &b)| {
                    let mut total: Option<Map> = None;
                    for (q, chunk) in maps.chunks(group).enumerate() {
                        let mut acc: Option<Map> = None;
                        for (j, m) in chunk.iter().enumerate() {
                            let z = if q == 0 && j == 0 { b } else { 0.0 };
                            let y = correlate3(m, &ks[q * group + j], z);
                            acc = Some(match acc {
                                None => y,
                                Some(a) => add_sat(&a, &y),
                            });
                        }
                        let acc = acc.expect("nonempty chunk");
                        total = Some(match total {
                            None => acc,
                            Some(t) => add_sat(&acc, &t),
                        });
                    }
                    total.expect("at least one input map")
                })
                .collect(),
            OracleLayer::Relu => maps.iter().map(relu).collect(),
            OracleLayer::MaxPool { cross, downsample } => maps
                .iter()
                .map(|m| {
                    let f = if *cross { max_filter_cross(m) } else { max_filter_square(m) };
                    apply_downsample(f, *downsample)
                })
                .collect::<Option<_>>()?,
            OracleLayer::AvgPool { window3, downsample } => maps
                .iter()
                .map(|m| {
                    let f = if *window3 { avg_3x3(m) } else { avg_2x2(m) };
                    apply_downsample(f, *downsample)
                })
                .collect::<Option<_>>()?,
            OracleLayer::Fc { weights, bias } => {
                let flat: Vec<f64> = maps.iter().flatten().flatten().copied().collect();
                vec![vec![fc_float(&flat, weights, bias)]]
            }
        };
        outs.push(maps.clone());
    }
    Some(outs)
}

/// Class scores: the FC output, or the center cell of each final map.
pub fn scores(outputs: &[Vec<Map>], has_fc: bool) -> Vec<f64> {
    let last = outputs.last().expect("at least one layer");
    if has_fc {
        last[0][0].clone()
    } else {
        last.iter()
            .map(|m| {
                let (r, c) = dims(m);
                m[r / 2][c / 2]
            })
            .collect()
    }
}
