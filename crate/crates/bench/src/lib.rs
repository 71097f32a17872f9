//! Shared fixtures for the benchmarks.

use acnoise_core::{GridSpec, ScalarField};

pub fn grid(n: usize) -> GridSpec {
    GridSpec::new(3, n, 4.0).expect("valid bench grid")
}

/// A smooth deterministic field so timings do not depend on a seed.
pub fn smooth(grid: GridSpec) -> ScalarField {
    let k = 2.0 * std::f64::consts::PI / grid.side();
    ScalarField::from_fn(grid, |x| (k * x[0]).cos() + 0.5 * (k * x[1]).sin() * (2.0 * k * x[2]).cos())
}
