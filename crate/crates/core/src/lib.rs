//! Structure-preserving finite-difference solver for two-dimensional
//! nonlinear Fokker-Planck equations with full, nonconstant diffusion
//! matrices.
//!
//! The core math is generic over [`Real`] (`f32`/`f64`); the aliases below fix
//! `f64` for everyday use.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::len_without_is_empty)]

pub mod diagnostics;
pub mod error;
pub mod flux;
pub mod grid;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod stepper;

pub use error::{Error, Result};
pub use flux::{
    assemble_fluxes, compute_delta, compute_lambda, divergence, effective_diffusions, steady_state_weights,
    Coefficients, FluxField, FluxOperator, WeightMode,
};
pub use grid::{Field, Grid};
pub use model::{builtin_test1, builtin_test2, BuiltinParams, Diffusion, Drift, Kernel, Problem};
pub use quadrature::{integrate_1d, nodes_and_weights, QuadratureRule};
pub use scalar::Real;

pub type Grid2D = Grid<f64>;
pub type DensityField = Field<f64>;
pub type ProblemSpec = Problem<f64>;
pub type DiffusionSpec = Diffusion<f64>;
pub type DriftSpec = Drift<f64>;
pub type InterfaceCoefficients = Coefficients<f64>;
