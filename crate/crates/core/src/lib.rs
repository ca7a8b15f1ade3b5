//! Mild-solution laboratory for the Boussinesq system on real hyperbolic
//! space `H^d`, worked on radially symmetric model fields.
//!
//! * [`geometry`]: radial grids, volume weights, `L^p` norms, radial operators.
//! * [`heat_kernel`]: explicit hyperbolic heat kernels and the semigroups they generate.
//! * [`estimates`]: dispersive/smoothing constants, calibration and verification.
//! * [`mild_solver`]: Duhamel operators, linear mild solver, Picard iteration.
//! * [`periodic`]: Poincaré map, Cesàro averages, periodic solutions, decay experiments.
//! * [`cli`]: configuration-driven experiment runner.

pub mod cli;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod geometry;
pub mod heat_kernel;
pub mod mild_solver;
pub mod periodic;
pub mod quad;

pub use error::{Error, Result};
pub use geometry::{RadialField, RadialGrid};
