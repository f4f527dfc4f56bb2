//! Shared fixtures for the criterion benchmarks.

use ringwalk::Params;

/// Instances from small to the largest acceptance grid point (M = 1375).
pub const INSTANCES: [(usize, usize); 4] = [(2, 8), (3, 7), (4, 10), (5, 12)];

pub fn params(k: usize, n: usize, s: f64) -> Params {
    Params::new(k, n, s).expect("benchmark parameters are valid")
}
