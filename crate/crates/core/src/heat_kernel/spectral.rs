//! Spectral form of the discrete heat semigroup.
//!
//! The convolution operator `K_τ` at a short reference time is similar to
//! the symmetric matrix `S = M^{1/2} k M^{1/2}`. Diagonalising `S` gives
//! `K_τ = M^{-1/2} Q diag(μ) Qᵀ M^{1/2}`, hence generator eigenvalues
//! `λ = ln(μ)/τ` and `e^{tΔ} = M^{-1/2} Q diag(e^{λt}) Qᵀ M^{1/2}` for every
//! `t`. Modes whose `μ` is below the quadrature noise floor carry no resolved
//! information and are dropped.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::convolution::{AngularRule, ConvolutionOperator};
use super::kernel::KernelTable;
use crate::error::Result;
use crate::geometry::RadialGrid;

/// Relative eigenvalue floor below which a mode is treated as unresolved.
const MODE_FLOOR: f64 = 1e-10;

/// Default reference time of the generator.
pub const DEFAULT_REFERENCE_TIME: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    grid: Arc<RadialGrid>,
    /// Orthonormal eigenvectors of `S` (columns), restricted to resolved modes.
    basis: DMatrix<f64>,
    /// Eigenvalues of the scalar generator `Δ_g`, all `<= 0`.
    eigenvalues: Vec<f64>,
    sqrt_mass: Vec<f64>,
    inv_sqrt_mass: Vec<f64>,
}

impl SpectralPropagator {
    pub fn new(grid: Arc<RadialGrid>, reference_time: f64, rule: AngularRule) -> Result<Self> {
        let table = KernelTable::new(grid.d(), reference_time)?;
        let conv = ConvolutionOperator::new(grid.clone(), &table, rule)?;
        Ok(Self::from_operator(&conv))
    }

    pub fn with_defaults(grid: Arc<RadialGrid>) -> Result<Self> {
        Self::new(grid, DEFAULT_REFERENCE_TIME, AngularRule::default())
    }

    pub fn from_operator(conv: &ConvolutionOperator) -> Self {
        let grid = conv.grid().clone();
        let n = grid.len();
        let sqrt_mass: Vec<f64> = grid.masses().iter().map(|m| m.sqrt()).collect();
        let inv_sqrt_mass: Vec<f64> = sqrt_mass.iter().map(|s| 1.0 / s).collect();
        let k = conv.averages();
        let s = DMatrix::from_fn(n, n, |i, j| sqrt_mass[i] * k[(i, j)] * sqrt_mass[j]);
        let eig = SymmetricEigen::new(s);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let tau = conv.t();
        let keep: Vec<usize> = (0..n)
            .filter(|&i| eig.eigenvalues[i] > MODE_FLOOR * top)
            .collect();
        let mut basis = DMatrix::zeros(n, keep.len());
        let mut eigenvalues = Vec::with_capacity(keep.len());
        for (c, &i) in keep.iter().enumerate() {
            basis.set_column(c, &eig.eigenvectors.column(i));
            eigenvalues.push((eig.eigenvalues[i].min(1.0)).ln() / tau);
        }
        Self {
            grid,
            basis,
            eigenvalues,
            sqrt_mass,
            inv_sqrt_mass,
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// Generator eigenvalues of the scalar Laplace–Beltrami operator.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn to_modal(&self, values: &[f64]) -> DVector<f64> {
        let weighted = DVector::from_iterator(
            values.len(),
            values.iter().zip(&self.sqrt_mass).map(|(v, s)| v * s),
        );
        self.basis.tr_mul(&weighted)
    }

    pub fn from_modal(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        let phys = &self.basis * coeffs;
        phys.iter()
            .zip(&self.inv_sqrt_mass)
            .map(|(v, s)| v * s)
            .collect()
    }

    /// Column-wise modal transform of a batch of fields (one per column).
    pub fn to_modal_batch(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        let mut weighted = values.clone();
        for (i, s) in self.sqrt_mass.iter().enumerate() {
            weighted.row_mut(i).scale_mut(*s);
        }
        self.basis.tr_mul(&weighted)
    }

    pub fn from_modal_batch(&self, coeffs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut phys = &self.basis * coeffs;
        for (i, s) in self.inv_sqrt_mass.iter().enumerate() {
            phys.row_mut(i).scale_mut(*s);
        }
        phys
    }

    /// `e^{t(Δ - shift)} f` for `t >= 0`.
    pub fn evolve(&self, t: f64, shift: f64, values: &[f64]) -> Vec<f64> {
        if t == 0.0 {
            return values.to_vec();
        }
        let mut c = self.to_modal(values);
        for (ck, lam) in c.iter_mut().zip(&self.eigenvalues) {
            *ck *= ((lam - shift) * t).exp();
        }
        self.from_modal(&c)
    }
}
