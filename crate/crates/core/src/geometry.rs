//! Radial geometry of real hyperbolic space in geodesic polar coordinates.
//!
//! The metric is `dr² + sinh²(r) dω²`, so a radial function integrates
//! against `ω_{d-1} sinh^{d-1}(r) dr`. Grids are composite Gauss–Legendre
//! panels on `[0, r_max]`; fields are samples at the panel nodes.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::{acosh1p, unit_sphere_area, GaussLegendre};

/// Stencil width of the derivative operators.
const STENCIL: usize = 5;

/// `ω_{d-1} sinh^{d-1}(r)`, the radial volume density.
pub fn volume_weight(r: f64, d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidGrid(format!("radius must be >= 0, got {r}")));
    }
    Ok(unit_sphere_area(d - 1) * r.sinh().powi(d as i32 - 1))
}

/// Geodesic distance between points at radii `r1`, `r2` separated by the
/// angle `phi` (hyperbolic law of cosines, written in the cancellation-free
/// form `cosh ρ = cosh(r1 - r2) + 2 sinh r1 sinh r2 sin²(φ/2)`).
pub fn geodesic_distance(r1: f64, r2: f64, phi: f64) -> f64 {
    let half_gap = (0.5 * (r1 - r2)).sinh();
    let s = (0.5 * phi).sin();
    acosh1p(2.0 * half_gap * half_gap + 2.0 * r1.sinh() * r2.sinh() * s * s)
}

/// Closed-form hyperbolic ball volume for d = 2, 3 (used by invariant checks).
pub fn ball_volume(d: usize, radius: f64) -> Option<f64> {
    use std::f64::consts::PI;
    match d {
        2 => Some(2.0 * PI * (radius.cosh() - 1.0)),
        3 => Some(PI * ((2.0 * radius).sinh() - 2.0 * radius)),
        _ => None,
    }
}

/// Default truncation radius for experiments up to time `t_max`.
pub fn default_r_max(t_max: f64) -> f64 {
    20.0 + 6.0 * t_max.max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
struct Stencil {
    idx: [usize; STENCIL],
    d1: [f64; STENCIL],
    d2: [f64; STENCIL],
}

/// Composite Gauss–Legendre discretisation of `[0, r_max]` for dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    d: usize,
    r_max: f64,
    panels: usize,
    nodes_per_panel: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    sphere_area: f64,
    /// Quadrature mass of each node: weight * ω_{d-1} sinh^{d-1}(r).
    masses: Vec<f64>,
    coth: Vec<f64>,
    stencils: Vec<Stencil>,
}

impl RadialGrid {
    pub fn new(d: usize, r_max: f64, panels: usize, nodes_per_panel: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("r_max must be positive, got {r_max}")));
        }
        if panels == 0 || nodes_per_panel == 0 {
            return Err(Error::InvalidGrid("need at least one panel and one node".into()));
        }
        // sinh^{d-1}(r_max) must stay finite
        if (d as f64 - 1.0) * r_max > 700.0 {
            return Err(Error::InvalidGrid(format!(
                "r_max = {r_max} overflows the volume density in d = {d}"
            )));
        }
        let rule = GaussLegendre::new(nodes_per_panel);
        let h = r_max / panels as f64;
        let mut nodes = Vec::with_capacity(panels * nodes_per_panel);
        let mut weights = Vec::with_capacity(panels * nodes_per_panel);
        for k in 0..panels {
            let lo = h * k as f64;
            for (x, w) in rule.on_interval(lo, lo + h) {
                nodes.push(x);
                weights.push(w);
            }
        }
        let sphere_area = unit_sphere_area(d - 1);
        let masses = nodes
            .iter()
            .zip(&weights)
            .map(|(&r, &w)| w * sphere_area * r.sinh().powi(d as i32 - 1))
            .collect();
        let coth = nodes.iter().map(|&r| 1.0 / r.tanh()).collect();
        let stencils = if nodes.len() >= STENCIL {
            build_stencils(&nodes)
        } else {
            Vec::new()
        };
        Ok(Self {
            d,
            r_max,
            panels,
            nodes_per_panel,
            nodes,
            weights,
            sphere_area,
            masses,
            coth,
            stencils,
        })
    }

    /// Grid with the default panel layout (64 panels of 8 nodes).
    pub fn with_defaults(d: usize, r_max: f64) -> Result<Self> {
        Self::new(d, r_max, 64, 8)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn panels(&self) -> usize {
        self.panels
    }
    pub fn nodes_per_panel(&self) -> usize {
        self.nodes_per_panel
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted integral of node samples against the hyperbolic volume.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.masses).map(|(v, m)| v * m).sum()
    }

    fn require_stencils(&self) -> Result<()> {
        if self.stencils.is_empty() {
            return Err(Error::GridTooCoarse {
                nodes: self.len(),
                min: STENCIL,
            });
        }
        Ok(())
    }

    pub(crate) fn first_derivative(&self, values: &[f64], i: usize) -> f64 {
        let s = &self.stencils[i];
        (0..STENCIL).map(|k| s.d1[k] * values[s.idx[k]]).sum()
    }

    pub(crate) fn second_derivative(&self, values: &[f64], i: usize) -> f64 {
        let s = &self.stencils[i];
        (0..STENCIL).map(|k| s.d2[k] * values[s.idx[k]]).sum()
    }

    /// Radial divergence `v' + (d-1) coth(r) v` of raw node samples.
    pub(crate) fn divergence_values(&self, values: &[f64]) -> Vec<f64> {
        let dm1 = (self.d - 1) as f64;
        (0..self.len())
            .map(|i| self.first_derivative(values, i) + dm1 * self.coth[i] * values[i])
            .collect()
    }
}

/// Fornberg finite-difference weights for derivatives 0..=2 at `z`.
fn fornberg(z: f64, x: &[f64]) -> [[f64; STENCIL]; 3] {
    let n = x.len();
    let mut c = [[0.0; STENCIL]; 3];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(2);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Five-point stencils over the evenly extended node set `{±r_j}`, which
/// builds the regularity condition f'(0) = 0 into every derivative.
fn build_stencils(nodes: &[f64]) -> Vec<Stencil> {
    let n = nodes.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(STENCIL - 1);
            let hi = (i + STENCIL).min(n);
            let mut cand: Vec<(f64, usize)> = (lo..hi).map(|j| (nodes[j], j)).collect();
            cand.extend((0..STENCIL.min(n)).map(|j| (-nodes[j], j)));
            let z = nodes[i];
            cand.sort_by(|a, b| (a.0 - z).abs().total_cmp(&(b.0 - z).abs()));
            let pick = &cand[..STENCIL];
            let xs: Vec<f64> = pick.iter().map(|p| p.0).collect();
            let w = fornberg(z, &xs);
            let mut idx = [0; STENCIL];
            for (k, p) in pick.iter().enumerate() {
                idx[k] = p.1;
            }
            Stencil {
                idx,
                d1: w[1],
                d2: w[2],
            }
        })
        .collect()
}

/// A real radial function sampled at the nodes of a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl PartialEq for RadialField {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<RadialGrid>, f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn same_grid_as(&self, grid: &Arc<RadialGrid>) -> bool {
        Arc::ptr_eq(&self.grid, grid) || *self.grid == **grid
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_values_unchecked(self.grid.clone(), values))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }
    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_values_unchecked(self.grid.clone(), self.values.iter().map(|v| c * v).collect())
    }

    pub fn abs(&self) -> Self {
        Self::from_values_unchecked(self.grid.clone(), self.values.iter().map(|v| v.abs()).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `L^p` norm by grid quadrature; `p = f64::INFINITY` gives the node max.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        lp_norm(self, p)
    }

    /// `L²` inner product against the hyperbolic volume.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.grid.masses())
            .map(|((a, b), m)| a * b * m)
            .sum())
    }
}

/// `L^p` norm of a radial field over the truncated manifold.
pub fn lp_norm(field: &RadialField, p: f64) -> Result<f64> {
    lp_norm_values(&field.grid, &field.values, p)
}

pub(crate) fn lp_norm_values(grid: &RadialGrid, values: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    // factor out the max to keep |f|^p in range
    let sum: f64 = values
        .iter()
        .zip(grid.masses())
        .map(|(v, m)| (v.abs() / scale).powf(p) * m)
        .sum();
    Ok(scale * sum.powf(1.0 / p))
}

/// Discrete Laplace–Beltrami operator `f'' + (d-1) coth(r) f'` on radial
/// functions.
pub fn radial_laplacian(field: &RadialField) -> Result<RadialField> {
    let grid = &field.grid;
    grid.require_stencils()?;
    let dm1 = (grid.d - 1) as f64;
    let v = &field.values;
    let out = (0..grid.len())
        .map(|i| grid.second_derivative(v, i) + dm1 * grid.coth[i] * grid.first_derivative(v, i))
        .collect();
    Ok(RadialField::from_values_unchecked(grid.clone(), out))
}

/// Divergence of the radial vector field `v(r) ∂_r`: `v' + (d-1) coth(r) v`.
pub fn radial_divergence(field: &RadialField) -> Result<RadialField> {
    let grid = &field.grid;
    grid.require_stencils()?;
    Ok(RadialField::from_values_unchecked(
        grid.clone(),
        grid.divergence_values(&field.values),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(d: usize, r_max: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::with_defaults(d, r_max).unwrap())
    }

    #[test]
    fn volume_weight_examples() {
        assert_eq!(volume_weight(0.0, 3).unwrap(), 0.0);
        assert!((volume_weight(1.0, 2).unwrap() - 7.384_006_872_882_645).abs() < 1e-10);
        assert!((volume_weight(1.0, 3).unwrap() - 17.355_387_381_771_437).abs() < 1e-10);
        assert!(matches!(volume_weight(1.0, 1), Err(Error::InvalidDimension(1))));
    }

    #[test]
    fn grid_invariants_and_ball_volume() {
        for d in [2, 3] {
            let g = RadialGrid::new(d, 1.0, 8, 8).unwrap();
            assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(g.nodes().iter().all(|&r| r > 0.0 && r < 1.0));
            assert!(g.weights().iter().all(|&w| w > 0.0));
            let vol = g.integrate(&vec![1.0; g.len()]);
            let exact = ball_volume(d, 1.0).unwrap();
            assert!(((vol - exact) / exact).abs() < 1e-10, "d={d}");
        }
    }

    #[test]
    fn lp_norm_examples() {
        let g = grid(2, 4.0);
        assert_eq!(RadialField::zeros(g.clone()).lp_norm(3.0).unwrap(), 0.0);
        // panel boundaries at multiples of 1/16 make the indicator exact
        let ind = RadialField::from_fn(g.clone(), |r| if r < 1.0 { 1.0 } else { 0.0 }).unwrap();
        let v = ind.lp_norm(1.0).unwrap();
        assert!((v - 2.0 * PI * (1f64.cosh() - 1.0)).abs() < 1e-10);
        assert!(matches!(ind.lp_norm(0.5), Err(Error::InvalidExponent(_))));
        let inf = ind.lp_norm(f64::INFINITY).unwrap();
        assert_eq!(inf, 1.0);
    }

    #[test]
    fn laplacian_of_constant_and_cosh() {
        let g = grid(3, 6.0);
        let c = RadialField::from_fn(g.clone(), |_| 2.5).unwrap();
        let lc = radial_laplacian(&c).unwrap();
        assert!(lc.max_abs() <= 1e-8 * 2.5);

        let f = RadialField::from_fn(g.clone(), f64::cosh).unwrap();
        let lf = radial_laplacian(&f).unwrap();
        for (i, &r) in g.nodes().iter().enumerate() {
            let exact = 3.0 * r.cosh();
            assert!((lf.values()[i] - exact).abs() < 1e-5 * exact, "r={r}");
        }
    }

    #[test]
    fn laplacian_of_r_squared_near_origin() {
        let g = grid(2, 2.0);
        let f = RadialField::from_fn(g.clone(), |r| r * r).unwrap();
        let lf = radial_laplacian(&f).unwrap();
        // exact value 2 + 2 r coth r -> 4 at the origin
        assert!((lf.values()[0] - 4.0).abs() < 1e-6);
        for (i, &r) in g.nodes().iter().enumerate().take(40) {
            let exact = 2.0 + 2.0 * r / r.tanh();
            assert!((lf.values()[i] - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn divergence_examples() {
        let g = grid(2, 3.0);
        let z = radial_divergence(&RadialField::zeros(g.clone())).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let v = RadialField::from_fn(g.clone(), |r| r).unwrap();
        let dv = radial_divergence(&v).unwrap();
        // v = r is odd, so the even reflection at the origin only holds
        // once the stencil clears it
        for (i, &r) in g.nodes().iter().enumerate().filter(|(_, r)| **r > 0.2) {
            let exact = 1.0 + r / r.tanh();
            assert!((dv.values()[i] - exact).abs() < 1e-8, "r={r}");
        }
        assert!((1.0 + 1.0 / 1f64.tanh() - 2.313_035_285_499_331).abs() < 1e-12);

        let g3 = grid(3, 4.0);
        let v = RadialField::from_fn(g3.clone(), |r| r.sinh().powi(-2)).unwrap();
        let dv = radial_divergence(&v).unwrap();
        for (i, &r) in g3.nodes().iter().enumerate() {
            if r > 0.5 {
                let scale = v.values()[i] / r.tanh();
                assert!(dv.values()[i].abs() < 1e-4 * scale, "r={r}");
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = Arc::new(RadialGrid::new(3, 1.0, 1, 4).unwrap());
        let f = RadialField::zeros(g);
        assert!(matches!(radial_laplacian(&f), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn geodesic_distance_examples() {
        assert_eq!(geodesic_distance(1.3, 1.3, 0.0), 0.0);
        assert!((geodesic_distance(1.0, 2.0, PI) - 3.0).abs() < 1e-12);
        assert!((geodesic_distance(1.0, 2.0, 0.0) - 1.0).abs() < 1e-12);
        let v = geodesic_distance(1.0, 1.0, PI / 2.0);
        assert!((v - (1f64.cosh().powi(2)).acosh()).abs() < 1e-12);
        assert!((v - 1.513_374_006_596_504).abs() < 1e-9);
    }

    #[test]
    fn mismatched_grids_do_not_compose() {
        let a = RadialField::zeros(grid(3, 4.0));
        let b = RadialField::zeros(grid(3, 5.0));
        assert!(matches!(a.add(&b), Err(Error::GridMismatch)));
    }
}
