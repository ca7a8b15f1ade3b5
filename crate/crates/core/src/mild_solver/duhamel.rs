//! Duhamel integrals `∫_0^t e^{-(t-s)A} g(s) ds` on a uniform time grid.
//!
//! The source is interpolated linearly between time nodes and each panel is
//! integrated exactly against the semigroup in its eigenbasis (a first-order
//! exponential integrator). Two evaluation routes share these weights: a
//! recursion over the whole trajectory, and a direct lag sum at one node.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::state::{ForcingSpec, Modulated, StateVector, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::RadialGrid;
use crate::heat_kernel::{vector_damping, SpectralPropagator};

/// `(φ1(z) - φ2(z), φ2(z))` with `φ1 = (e^z - 1)/z`, `φ2 = (e^z - 1 - z)/z²`.
fn panel_weights(z: f64) -> (f64, f64) {
    if z.abs() < 1e-2 {
        let phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0 + z.powi(4) / 120.0;
        let phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0 + z.powi(4) / 720.0;
        (phi1 - phi2, phi2)
    } else {
        let em1 = z.exp_m1();
        let phi1 = em1 / z;
        let phi2 = (em1 - z) / (z * z);
        (phi1 - phi2, phi2)
    }
}

/// Semigroup propagation and Duhamel integration for one spatial grid and
/// one time step.
#[derive(Debug, Clone)]
pub struct MildSolver {
    prop: Arc<SpectralPropagator>,
    dt: f64,
}

/// Which slot of the state a source feeds: the velocity slot is damped by
/// the Ricci term, the temperature slot is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Velocity,
    Temperature,
}

impl MildSolver {
    pub fn new(prop: Arc<SpectralPropagator>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTime { t: dt, expect: "> 0 (time step)" });
        }
        Ok(Self { prop, dt })
    }

    /// Builds the spectral propagator with default settings.
    pub fn for_grid(grid: Arc<RadialGrid>, dt: f64) -> Result<Self> {
        Self::new(Arc::new(SpectralPropagator::with_defaults(grid)?), dt)
    }

    /// Same propagator, `steps` steps per period `period`.
    pub fn per_period(prop: Arc<SpectralPropagator>, period: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("steps per period must be positive".into()));
        }
        Self::new(prop, period / steps as f64)
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(self.prop.clone(), dt)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.prop.grid()
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn propagator(&self) -> &Arc<SpectralPropagator> {
        &self.prop
    }

    pub(crate) fn shift(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Velocity => vector_damping(self.grid().d()),
            Slot::Temperature => 0.0,
        }
    }

    /// Number of steps covering `horizon`; it must be a multiple of `dt`.
    pub fn steps_for(&self, horizon: f64) -> Result<usize> {
        let x = horizon / self.dt;
        let k = x.round();
        if k < 1.0 || (x - k).abs() > 1e-9 * x.max(1.0) {
            return Err(Error::OffGrid { t: horizon });
        }
        Ok(k as usize)
    }

    pub(crate) fn check_state(&self, s: &StateVector) -> Result<()> {
        if s.u().same_grid_as(self.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `e^{-tA} x`, exact identity at `t = 0`.
    pub fn evolve(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        self.check_state(x)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidTime { t, expect: ">= 0" });
        }
        if t == 0.0 {
            return Ok(x.clone());
        }
        let u = self.prop.evolve(t, self.shift(Slot::Velocity), x.u().values());
        let th = self.prop.evolve(t, self.shift(Slot::Temperature), x.theta().values());
        Ok(StateVector::from_values(self.grid(), u, th))
    }

    /// `e^{-t_k A} x` at every node `k = 0..=steps`.
    pub fn semigroup_orbit(&self, x: &StateVector, steps: usize) -> Result<Vec<StateVector>> {
        self.check_state(x)?;
        let cu = self.prop.to_modal(x.u().values());
        let ct = self.prop.to_modal(x.theta().values());
        let lam = self.prop.eigenvalues();
        let su = self.shift(Slot::Velocity);
        let n_modes = lam.len();
        let mut mu = DMatrix::zeros(n_modes, steps);
        let mut mt = DMatrix::zeros(n_modes, steps);
        for k in 1..=steps {
            let t = k as f64 * self.dt;
            for i in 0..n_modes {
                mu[(i, k - 1)] = cu[i] * ((lam[i] - su) * t).exp();
                mt[(i, k - 1)] = ct[i] * (lam[i] * t).exp();
            }
        }
        let pu = self.prop.from_modal_batch(&mu);
        let pt = self.prop.from_modal_batch(&mt);
        let mut out = Vec::with_capacity(steps + 1);
        out.push(x.clone());
        for k in 0..steps {
            out.push(StateVector::from_values(
                self.grid(),
                pu.column(k).iter().copied().collect(),
                pt.column(k).iter().copied().collect(),
            ));
        }
        Ok(out)
    }

    /// Duhamel integral of one slot at every node, by the recursion
    /// `I_{k+1} = e^{z} I_k + Δt[(φ1-φ2)(z) g_k + φ2(z) g_{k+1}]` per mode.
    /// `sources[k]` holds the source at node `k`; `None` means zero.
    pub(crate) fn integrate(&self, slot: Slot, sources: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.grid().len();
        let len = sources.len();
        if sources.iter().all(|s| s.iter().all(|v| *v == 0.0)) {
            return vec![vec![0.0; n]; len];
        }
        let g = DMatrix::from_fn(n, len, |i, k| sources[k][i]);
        let gm = self.prop.to_modal_batch(&g);
        let shift = self.shift(slot);
        let lam = self.prop.eigenvalues();
        let mut acc = DMatrix::zeros(lam.len(), len);
        for (i, l) in lam.iter().enumerate() {
            let z = (l - shift) * self.dt;
            let e = z.exp();
            let (w0, w1) = panel_weights(z);
            let (w0, w1) = (w0 * self.dt, w1 * self.dt);
            for k in 0..len - 1 {
                acc[(i, k + 1)] = e * acc[(i, k)] + w0 * gm[(i, k)] + w1 * gm[(i, k + 1)];
            }
        }
        let phys = self.prop.from_modal_batch(&acc);
        let mut out: Vec<Vec<f64>> = (0..len).map(|k| phys.column(k).iter().copied().collect()).collect();
        out[0] = vec![0.0; n];
        out
    }

    /// The same integral at node `k` alone, summed panel by panel.
    pub(crate) fn integrate_at(&self, slot: Slot, sources: &[Vec<f64>], k: usize) -> Vec<f64> {
        let n = self.grid().len();
        if k == 0 || sources[..=k].iter().all(|s| s.iter().all(|v| *v == 0.0)) {
            return vec![0.0; n];
        }
        let g = DMatrix::from_fn(n, k + 1, |i, j| sources[j][i]);
        let gm = self.prop.to_modal_batch(&g);
        let shift = self.shift(slot);
        let lam = self.prop.eigenvalues();
        let mut c = nalgebra::DVector::zeros(lam.len());
        for (i, l) in lam.iter().enumerate() {
            let z = (l - shift) * self.dt;
            let (w0, w1) = panel_weights(z);
            let mut sum = 0.0;
            for j in 0..k {
                let decay = (z * (k - 1 - j) as f64).exp();
                sum += decay * (w0 * gm[(i, j)] + w1 * gm[(i, j + 1)]);
            }
            c[i] = self.dt * sum;
        }
        self.prop.from_modal(&c)
    }
}

/// Node values of `profile · waveform(t_k)`.
pub(crate) fn sample_modulated(m: &Modulated, dt: f64, steps: usize) -> Vec<Vec<f64>> {
    (0..=steps).map(|k| m.values_at(k as f64 * dt)).collect()
}

/// `div` of each node sample.
pub(crate) fn divergence_all(grid: &RadialGrid, samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    samples.iter().map(|s| grid.divergence_values(s)).collect()
}

/// Sources of `𝕋(F, f)` per slot.
pub(crate) fn external_sources(
    grid: &RadialGrid,
    forcing: &ForcingSpec,
    dt: f64,
    steps: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = grid.len();
    let u = if forcing.force.is_zero() {
        vec![vec![0.0; n]; steps + 1]
    } else {
        divergence_all(grid, &sample_modulated(&forcing.force, dt, steps))
    };
    let th = if forcing.flux.is_zero() {
        vec![vec![0.0; n]; steps + 1]
    } else {
        divergence_all(grid, &sample_modulated(&forcing.flux, dt, steps))
    };
    (u, th)
}

/// Source `η(t_k) h(t_k)` of `T_h(η)`.
pub(crate) fn coupling_sources(
    eta: &[Vec<f64>],
    h: &Modulated,
    dt: f64,
) -> Vec<Vec<f64>> {
    eta.iter()
        .enumerate()
        .map(|(k, e)| {
            let hk = h.values_at(k as f64 * dt);
            e.iter().zip(&hk).map(|(a, b)| a * b).collect()
        })
        .collect()
}

/// Sources of `B(a, b)` per slot: `-div(a_u b_u)` and `-div(a_u b_θ)`.
pub(crate) fn bilinear_sources(
    grid: &RadialGrid,
    a: &[StateVector],
    b: &[StateVector],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut su = Vec::with_capacity(a.len());
    let mut st = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let au = x.u().values();
        let uu: Vec<f64> = au.iter().zip(y.u().values()).map(|(p, q)| p * q).collect();
        let ut: Vec<f64> = au.iter().zip(y.theta().values()).map(|(p, q)| p * q).collect();
        su.push(grid.divergence_values(&uu).into_iter().map(|v| -v).collect());
        st.push(grid.divergence_values(&ut).into_iter().map(|v| -v).collect());
    }
    (su, st)
}

pub(crate) fn add_into(acc: &mut [Vec<f64>], other: &[Vec<f64>]) {
    for (a, o) in acc.iter_mut().zip(other) {
        for (x, y) in a.iter_mut().zip(o) {
            *x += y;
        }
    }
}

/// θ-slot samples of a trajectory.
pub(crate) fn theta_samples(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.states().iter().map(|s| s.theta().values().to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_weights_match_series_across_switch() {
        for z in [-1.1e-2, -0.9e-2, 0.9e-2, 1.1e-2] {
            let (a, b) = panel_weights(z);
            let phi1 = z.exp_m1() / z;
            let phi2 = (z.exp_m1() - z) / (z * z);
            assert!((a - (phi1 - phi2)).abs() < 1e-12);
            assert!((b - phi2).abs() < 1e-12);
        }
        let (a, b) = panel_weights(0.0);
        assert_eq!((a, b), (0.5, 0.5));
    }

    #[test]
    fn panel_weights_integrate_linear_source_exactly() {
        // ∫_0^1 e^{λ(1-s)} (g0 (1-s) + g1 s) ds for λ = -3
        let lam: f64 = -3.0;
        let (w0, w1) = panel_weights(lam);
        let exact0 = crate::quad::adaptive_gk(&|s: f64| (lam * (1.0 - s)).exp() * (1.0 - s), 0.0, 1.0, 1e-14);
        let exact1 = crate::quad::adaptive_gk(&|s: f64| (lam * (1.0 - s)).exp() * s, 0.0, 1.0, 1e-14);
        assert!((w0 - exact0).abs() < 1e-13);
        assert!((w1 - exact1).abs() < 1e-13);
    }
}
