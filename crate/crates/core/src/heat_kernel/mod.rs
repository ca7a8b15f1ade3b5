//! Hyperbolic heat kernels and the semigroups `e^{tΔ_g}`, `e^{tL}` and
//! `e^{-tA}` acting on radial fields.
//!
//! The velocity slot is a radial scalar surrogate: `L = Δ⃗ - (d-1)` acts on it
//! as the scalar semigroup damped by `e^{-(d-1)t}`. The temperature slot
//! carries the undamped Laplace–Beltrami semigroup.

mod convolution;
mod kernel;
mod spectral;

use std::sync::Arc;

pub use convolution::{AngularRule, ConvolutionOperator};
pub use kernel::{
    kernel_direct, kernel_h2, kernel_h3, kernel_recursion, support_radius, KernelTable,
    DEFAULT_TABLE_INTERVALS, SMALL_TIME,
};
pub use spectral::{SpectralPropagator, DEFAULT_REFERENCE_TIME};

use crate::error::{Error, Result};
use crate::geometry::{RadialField, RadialGrid};
use crate::mild_solver::StateVector;

/// Ricci damping rate `d - 1` of the vector semigroup.
pub fn vector_damping(d: usize) -> f64 {
    (d - 1) as f64
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTime { t, expect: ">= 0" })
    }
}

/// The matrix semigroup `e^{-tA} = diag(e^{tL}, e^{tΔ_g})` at one fixed time,
/// with its convolution operator built once and reused.
#[derive(Debug, Clone)]
pub struct MatrixSemigroup {
    t: f64,
    conv: Option<ConvolutionOperator>,
    grid: Arc<RadialGrid>,
}

impl MatrixSemigroup {
    pub fn new(grid: Arc<RadialGrid>, t: f64) -> Result<Self> {
        Self::with_rule(grid, t, AngularRule::default())
    }

    pub fn with_rule(grid: Arc<RadialGrid>, t: f64, rule: AngularRule) -> Result<Self> {
        check_time(t)?;
        let conv = if t > 0.0 {
            let table = KernelTable::new(grid.d(), t)?;
            Some(ConvolutionOperator::new(grid.clone(), &table, rule)?)
        } else {
            None
        };
        Ok(Self { t, conv, grid })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn scalar(&self, f: &RadialField) -> Result<RadialField> {
        match &self.conv {
            Some(conv) => conv.apply(f),
            None if f.same_grid_as(&self.grid) => Ok(f.clone()),
            None => Err(Error::GridMismatch),
        }
    }

    pub fn vector(&self, f: &RadialField) -> Result<RadialField> {
        let damping = (-vector_damping(self.grid.d()) * self.t).exp();
        Ok(self.scalar(f)?.scale(damping))
    }

    pub fn apply(&self, s: &StateVector) -> Result<StateVector> {
        StateVector::new(self.vector(s.u())?, self.scalar(s.theta())?)
    }
}

/// `e^{tΔ_g} f` by kernel convolution.
pub fn apply_scalar_semigroup(t: f64, f: &RadialField) -> Result<RadialField> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    MatrixSemigroup::new(f.grid().clone(), t)?.scalar(f)
}

/// `e^{tL} f = e^{-(d-1)t} e^{tΔ_g} f` on the radial surrogate.
pub fn apply_vector_semigroup(t: f64, f: &RadialField) -> Result<RadialField> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    MatrixSemigroup::new(f.grid().clone(), t)?.vector(f)
}

/// `e^{-tA}(u, θ) = (e^{tL} u, e^{tΔ_g} θ)`.
pub fn apply_matrix_semigroup(t: f64, s: &StateVector) -> Result<StateVector> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(s.clone());
    }
    MatrixSemigroup::new(s.grid().clone(), t)?.apply(s)
}

#[cfg(test)]
mod tests;
