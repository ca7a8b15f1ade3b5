use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{lp_norm_values, RadialField, RadialGrid};

/// The pair `(u, θ)`: velocity surrogate and temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    u: RadialField,
    theta: RadialField,
}

impl StateVector {
    pub fn new(u: RadialField, theta: RadialField) -> Result<Self> {
        if !u.same_grid(&theta) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u, theta })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        Self {
            u: RadialField::zeros(grid.clone()),
            theta: RadialField::zeros(grid),
        }
    }

    pub(crate) fn from_values(grid: &Arc<RadialGrid>, u: Vec<f64>, theta: Vec<f64>) -> Self {
        Self {
            u: RadialField::from_values_unchecked(grid.clone(), u),
            theta: RadialField::from_values_unchecked(grid.clone(), theta),
        }
    }

    pub fn u(&self) -> &RadialField {
        &self.u
    }
    pub fn theta(&self) -> &RadialField {
        &self.theta
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.u.grid()
    }
    pub fn into_parts(self) -> (RadialField, RadialField) {
        (self.u, self.theta)
    }

    /// Product norm `max(‖u‖_p, ‖θ‖_p)`.
    pub fn norm(&self, p: f64) -> Result<f64> {
        Ok(self.u.lp_norm(p)?.max(self.theta.lp_norm(p)?))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            u: self.u.add(&other.u)?,
            theta: self.theta.add(&other.theta)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            u: self.u.sub(&other.u)?,
            theta: self.theta.sub(&other.theta)?,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            u: self.u.scale(c),
            theta: self.theta.scale(c),
        }
    }

    /// Product-norm distance without allocating.
    pub fn distance(&self, other: &Self, p: f64) -> Result<f64> {
        if !self.u.same_grid(&other.u) {
            return Err(Error::GridMismatch);
        }
        let grid = self.grid();
        let du: Vec<f64> = diff(self.u.values(), other.u.values());
        let dt: Vec<f64> = diff(self.theta.values(), other.theta.values());
        Ok(lp_norm_values(grid, &du, p)?.max(lp_norm_values(grid, &dt, p)?))
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// States on a uniform time grid `t_k = k Δt`, `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    states: Vec<StateVector>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<StateVector>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTime { t: dt, expect: "> 0 (time step)" });
        }
        let Some(first) = states.first() else {
            return Err(Error::InvalidGrid("empty trajectory".into()));
        };
        if states.iter().any(|s| !s.u.same_grid(&first.u)) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { dt, states })
    }

    /// Trajectory that stays at `state` for `steps` steps.
    pub fn constant(state: StateVector, dt: f64, steps: usize) -> Result<Self> {
        Self::new(dt, vec![state; steps + 1])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn states(&self) -> &[StateVector] {
        &self.states
    }
    pub fn into_states(self) -> Vec<StateVector> {
        self.states
    }
    /// Number of steps `K`; there are `K + 1` states.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(move |k| k as f64 * self.dt)
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.states[0].grid()
    }
    pub fn first(&self) -> &StateVector {
        &self.states[0]
    }
    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory is never empty")
    }

    /// Index of the node at time `t`, if `t` lies on the grid.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let k = x.round();
        if k < 0.0 || (x - k).abs() > 1e-9 * x.abs().max(1.0) || k as usize > self.steps() {
            return Err(Error::OffGrid { t });
        }
        Ok(k as usize)
    }

    /// `sup_k ‖state_k‖_{p×p}`.
    pub fn sup_norm(&self, p: f64) -> Result<f64> {
        self.states
            .iter()
            .try_fold(0.0_f64, |m, s| Ok(m.max(s.norm(p)?)))
    }

    /// `sup_k ‖a_k - b_k‖_{p×p}`.
    pub fn sup_distance(&self, other: &Self, p: f64) -> Result<f64> {
        if self.states.len() != other.states.len() {
            return Err(Error::InvalidGrid("trajectories have different lengths".into()));
        }
        self.states
            .iter()
            .zip(&other.states)
            .try_fold(0.0_f64, |m, (a, b)| Ok(m.max(a.distance(b, p)?)))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dt: self.dt,
            states: self.states.iter().map(|s| s.scale(c)).collect(),
        }
    }

    /// CSV rows `t,r,u,theta` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r,u,theta\n");
        let nodes = self.grid().nodes();
        for (t, s) in self.times().zip(&self.states) {
            for (i, r) in nodes.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt17(t),
                    fmt17(*r),
                    fmt17(s.u.values()[i]),
                    fmt17(s.theta.values()[i])
                ));
            }
        }
        out
    }
}

/// Floating-point formatting with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A `T`-periodic scalar waveform `offset + amplitude · sin(2π k t / T + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waveform {
    pub period: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub harmonic: u32,
    pub phase: f64,
}

impl Waveform {
    pub fn constant(period: f64, value: f64) -> Self {
        Self {
            period,
            offset: value,
            amplitude: 0.0,
            harmonic: 1,
            phase: 0.0,
        }
    }

    pub fn sine(period: f64, amplitude: f64) -> Self {
        Self {
            period,
            offset: 0.0,
            amplitude,
            harmonic: 1,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        // phase reduction keeps waveform(t + T) == waveform(t) bit for bit
        let reduced = t.rem_euclid(self.period);
        self.offset
            + self.amplitude
                * (2.0 * PI * self.harmonic as f64 * reduced / self.period + self.phase).sin()
    }

    /// `sup_t |waveform(t)|`.
    pub fn sup_abs(&self) -> f64 {
        self.offset.abs() + self.amplitude.abs()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            offset: c * self.offset,
            amplitude: c * self.amplitude,
            ..*self
        }
    }
}

/// A radial profile modulated in time: `profile(r) · waveform(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulated {
    pub profile: RadialField,
    pub waveform: Waveform,
}

impl Modulated {
    pub fn new(profile: RadialField, waveform: Waveform) -> Self {
        Self { profile, waveform }
    }

    pub fn zero(grid: Arc<RadialGrid>, period: f64) -> Self {
        Self {
            profile: RadialField::zeros(grid),
            waveform: Waveform::constant(period, 0.0),
        }
    }

    pub fn at(&self, t: f64) -> RadialField {
        self.profile.scale(self.waveform.eval(t))
    }

    pub fn values_at(&self, t: f64) -> Vec<f64> {
        let w = self.waveform.eval(t);
        self.profile.values().iter().map(|v| v * w).collect()
    }

    /// `sup_t ‖profile · waveform(t)‖_p`.
    pub fn sup_norm(&self, p: f64) -> Result<f64> {
        Ok(self.waveform.sup_abs() * self.profile.lp_norm(p)?)
    }

    pub fn is_zero(&self) -> bool {
        self.waveform.sup_abs() == 0.0 || self.profile.max_abs() == 0.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            profile: self.profile.clone(),
            waveform: self.waveform.scaled(c),
        }
    }
}

/// Time-periodic data of the system: the external-force surrogate `F`, the
/// temperature flux `f` and the gravitational coupling `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    pub force: Modulated,
    pub flux: Modulated,
    pub gravity: Modulated,
    period: f64,
}

impl ForcingSpec {
    pub fn new(force: Modulated, flux: Modulated, gravity: Modulated) -> Result<Self> {
        let period = force.waveform.period;
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidTime { t: period, expect: "> 0 (period)" });
        }
        for m in [&flux, &gravity] {
            if (m.waveform.period - period).abs() > 1e-14 * period {
                return Err(Error::Precondition(format!(
                    "all forcing components must share the period T = {period}, found {}",
                    m.waveform.period
                )));
            }
        }
        if !force.profile.same_grid(&flux.profile) || !force.profile.same_grid(&gravity.profile) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            force,
            flux,
            gravity,
            period,
        })
    }

    pub fn zero(grid: Arc<RadialGrid>, period: f64) -> Self {
        Self {
            force: Modulated::zero(grid.clone(), period),
            flux: Modulated::zero(grid.clone(), period),
            gravity: Modulated::zero(grid, period),
            period,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.force.profile.grid()
    }

    /// `‖h‖_{∞, L^{p/2}}`.
    pub fn gravity_norm(&self, p: f64) -> Result<f64> {
        self.gravity.sup_norm(p / 2.0)
    }

    /// `‖(F, f)‖_{∞, L^{p/2} × L^{p/2}}`.
    pub fn force_norm(&self, p: f64) -> Result<f64> {
        Ok(self.force.sup_norm(p / 2.0)?.max(self.flux.sup_norm(p / 2.0)?))
    }

    /// Same profiles with every waveform multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            force: self.force.scaled(c),
            flux: self.flux.scaled(c),
            gravity: self.gravity.scaled(c),
            period: self.period,
        }
    }

    /// Scales `F` and `f` only, leaving the coupling `h` untouched.
    pub fn with_force_scaled(&self, c: f64) -> Self {
        Self {
            force: self.force.scaled(c),
            flux: self.flux.scaled(c),
            gravity: self.gravity.clone(),
            period: self.period,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_is_exactly_periodic() {
        // dyadic times make t + T exact, so the phase reduction is bitwise
        let w = Waveform::sine(0.5, 1.3);
        for k in 0..64 {
            let t = k as f64 / 64.0;
            assert_eq!(w.eval(t), w.eval(t + 0.5));
        }
        let w = Waveform::sine(0.7, 1.3);
        for k in 0..50 {
            let t = 0.0137 * k as f64;
            assert!((w.eval(t) - w.eval(t + 0.7)).abs() < 1e-12);
        }
    }

    #[test]
    fn product_norm_is_max_of_slots() {
        let g = Arc::new(RadialGrid::new(3, 5.0, 8, 8).unwrap());
        let u = RadialField::from_fn(g.clone(), |r| (-r * r).exp()).unwrap();
        let th = u.scale(3.0);
        let s = StateVector::new(u.clone(), th.clone()).unwrap();
        assert_eq!(s.norm(2.0).unwrap(), th.lp_norm(2.0).unwrap());
        assert_eq!(s.distance(&s, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn node_index_rejects_off_grid_times() {
        let g = Arc::new(RadialGrid::new(3, 5.0, 8, 8).unwrap());
        let tr = Trajectory::constant(StateVector::zeros(g), 0.25, 4).unwrap();
        assert_eq!(tr.node_index(0.75).unwrap(), 3);
        assert!(matches!(tr.node_index(0.3), Err(Error::OffGrid { .. })));
        assert!(matches!(tr.node_index(1.25), Err(Error::OffGrid { .. })));
    }

    #[test]
    fn mismatched_periods_rejected() {
        let g = Arc::new(RadialGrid::new(3, 5.0, 8, 8).unwrap());
        let z = RadialField::zeros(g);
        let r = ForcingSpec::new(
            Modulated::new(z.clone(), Waveform::sine(1.0, 1.0)),
            Modulated::new(z.clone(), Waveform::sine(2.0, 1.0)),
            Modulated::new(z, Waveform::sine(1.0, 1.0)),
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }
}
