//! Shared fixtures for the operator benchmarks.

use beltrami_core::builders::{random_smooth, rng};
use beltrami_core::{make_grid, Field, Grid};

/// Grid of side `2 L = 8` with `n` nodes per axis.
pub fn bench_grid(n: usize) -> Grid {
    make_grid(n, 4.0).expect("bench sizes are powers of two")
}

/// Seeded smooth field on `grid`.
pub fn bench_field(grid: &Grid, seed: u64) -> Field {
    random_smooth(&mut rng(seed), grid).sample(grid).expect("samples are finite")
}
