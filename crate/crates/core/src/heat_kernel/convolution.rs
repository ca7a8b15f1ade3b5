//! Radial heat-kernel convolution on a [`RadialGrid`].

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::kernel::KernelTable;
use crate::error::{Error, Result};
use crate::geometry::{RadialField, RadialGrid};
use crate::quad::{unit_sphere_area, GaussLegendre};

/// Angular quadrature of the convolution.
///
/// The angle range that the kernel can see, `[0, φ_end]`, is split into
/// `panels` pieces whose endpoints are equispaced in geodesic distance, with
/// `nodes` Gauss–Legendre points in each. Equispacing in distance puts the
/// nodes where the kernel varies, which a fixed rule in `φ` cannot do once
/// `sinh r` is large.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AngularRule {
    pub panels: usize,
    pub nodes: usize,
}

impl Default for AngularRule {
    fn default() -> Self {
        Self { panels: 16, nodes: 16 }
    }
}

/// Dense convolution operator `f ↦ ∫ p_t(dist(x, y)) f(y) dy` restricted to
/// radial functions.
///
/// Stored as the symmetric matrix of angular averages `k_ij`, so that
/// `(K f)_i = Σ_j k_ij m_j f_j` with `m_j` the grid masses.
#[derive(Debug, Clone)]
pub struct ConvolutionOperator {
    grid: Arc<RadialGrid>,
    t: f64,
    averages: DMatrix<f64>,
}

impl ConvolutionOperator {
    pub fn new(grid: Arc<RadialGrid>, table: &KernelTable, rule: AngularRule) -> Result<Self> {
        if table.d() != grid.d() {
            return Err(Error::InvalidGrid(format!(
                "kernel table is for d = {}, grid is for d = {}",
                table.d(),
                grid.d()
            )));
        }
        let n = grid.len();
        let d = grid.d();
        let gl = GaussLegendre::new(rule.nodes);
        // the masses carry ω_{d-1}; k_ij is the average over the sphere
        let omega = unit_sphere_area(d - 2) / unit_sphere_area(d - 1);
        let sinh: Vec<f64> = grid.nodes().iter().map(|r| r.sinh()).collect();
        let rho_max = table.rho_max();
        let nodes = grid.nodes();

        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n];
                for j in i..n {
                    row[j] = omega
                        * angular_integral(
                            nodes[i], nodes[j], sinh[i], sinh[j], d, rho_max, table, &gl,
                            rule.panels,
                        );
                }
                row
            })
            .collect();
        let mut averages = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for j in i..n {
                averages[(i, j)] = row[j];
                averages[(j, i)] = row[j];
            }
        }
        Ok(Self {
            grid,
            t: table.t(),
            averages,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    /// Symmetric matrix of angular kernel averages `k_ij`.
    pub fn averages(&self) -> &DMatrix<f64> {
        &self.averages
    }

    pub fn apply_values(&self, values: &[f64]) -> Vec<f64> {
        let masses = self.grid.masses();
        let weighted: Vec<f64> = values.iter().zip(masses).map(|(v, m)| v * m).collect();
        let n = values.len();
        (0..n)
            .map(|i| {
                let row = self.averages.row(i);
                row.iter().zip(&weighted).map(|(k, w)| k * w).sum()
            })
            .collect()
    }

    pub fn apply(&self, field: &RadialField) -> Result<RadialField> {
        if !field.same_grid_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(RadialField::from_values_unchecked(
            self.grid.clone(),
            self.apply_values(field.values()),
        ))
    }
}

/// `∫_0^π p(dist(r1, r2, φ)) sin^{d-2}φ dφ`, truncated where the kernel vanishes.
#[allow(clippy::too_many_arguments)]
fn angular_integral(
    r1: f64,
    r2: f64,
    sinh1: f64,
    sinh2: f64,
    d: usize,
    rho_max: f64,
    table: &KernelTable,
    gl: &GaussLegendre,
    panels: usize,
) -> f64 {
    let gap = (r1 - r2).abs();
    if gap >= rho_max {
        return 0.0;
    }
    let rho_end = (r1 + r2).min(rho_max);
    let prod = 2.0 * sinh1 * sinh2;
    let half_gap = (0.5 * gap).sinh();
    // angle at which the geodesic distance reaches rho
    let angle_of = |rho: f64| -> f64 {
        if rho >= r1 + r2 {
            return std::f64::consts::PI;
        }
        let num = 2.0 * (0.5 * (rho + gap)).sinh() * (0.5 * (rho - gap)).sinh();
        let s = (num / prod).max(0.0).sqrt().min(1.0);
        2.0 * s.asin()
    };
    let dist_at = |phi: f64| -> f64 {
        let s = (0.5 * phi).sin();
        crate::quad::acosh1p(2.0 * half_gap * half_gap + prod * s * s)
    };
    let power = d as i32 - 2;
    let mut total = 0.0;
    let mut lo = 0.0;
    for k in 1..=panels {
        let rho = gap + (rho_end - gap) * k as f64 / panels as f64;
        let hi = if k == panels { angle_of(rho_end) } else { angle_of(rho) };
        if hi > lo {
            total += gl.integrate(lo, hi, |phi| {
                table.eval(dist_at(phi)) * phi.sin().powi(power)
            });
        }
        lo = hi;
    }
    total
}
