//! Shared fixtures for the benchmarks.

use cenn_forge::{Grid, NetworkSpec, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded map with values in `[-1, 1]`.
pub fn random_grid(shape: Shape, seed: u64) -> Grid {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Grid::from_fn(shape, |_, _| r.gen_range(-1.0..=1.0))
}

/// A network preset with seeded random weights.
pub fn random_network(name: &str, seed: u64) -> NetworkSpec {
    let mut net = NetworkSpec::preset(name).expect("known preset");
    net.randomize(seed);
    net
}

/// Seeded input maps for `net`.
pub fn random_image(net: &NetworkSpec, seed: u64) -> Vec<Grid> {
    (0..net.input_maps).map(|i| random_grid(net.input_shape, seed + i as u64)).collect()
}
