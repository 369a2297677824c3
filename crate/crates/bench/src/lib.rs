//! Fixtures shared by the benchmarks.

use nsfmc::sampling::{realize, RandomDataSpec};
use nsfmc::{Grid, ModelParams, State};

/// Vortex initial data with `Y = 0` on an `n × n` mesh.
pub fn vortex(n: usize) -> (Grid, State, ModelParams) {
    let grid = Grid::new(2, n).expect("valid mesh");
    let (state, params) = realize(&RandomDataSpec::default(), &grid, &[0.0; 7]).expect("positive data");
    (grid, state, params)
}

/// Deterministic pseudo-random field with values in `[-1, 1]`.
pub fn rough_field(len: usize, salt: u64) -> Vec<f64> {
    (0..len as u64)
        .map(|i| {
            let x = (i ^ salt).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
            (x >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}
