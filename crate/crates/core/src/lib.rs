//! Numerical laboratory for the Allen-Cahn equation `du = Δu - λu³` started
//! from mollified white noise, its diffusive rescaling, and the Gaussian
//! statistics that emerge at large scales in dimension three and above.

pub mod config;
pub mod error;
pub mod grid;
pub mod mollifier;
pub mod oracle;
pub mod propagate;
pub mod rescale;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod suites;

pub use error::{Error, Result};
pub use grid::{inner_product, GridSpec, ScalarField};
pub use mollifier::{
    convolve, covariance_init, initial_condition, make_mollifier, sample_white_noise, InitialLaw,
    MollifierKind, MollifierSpec,
};
pub use rng::RngStream;
pub use spectral::{HeatSymbol, Spectral};
pub use propagate::{
    cubic_flow, heat_propagate, linearized_solve, mild_residual, solve, strang_step, Solver, StepScheme,
};
pub use rescale::{
    effective_coupling, heat_of_initial, observable, picard_n, picard_x, simulate_rescaled, SimParams, Simulator,
    TestFunction, TestFunctionKind, TestFunctionSpec, Trajectory,
};
pub use stats::{EnsembleAccumulator, MomentReport};
