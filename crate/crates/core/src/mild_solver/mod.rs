//! Duhamel operators of the Boussinesq system in matrix form, the linear
//! mild solver and the Picard fixed-point solver.
//!
//! Radial surrogate closure: `u ⊗ v ↦ u·v`, `uξ ↦ u·ξ`, `div` is the radial
//! divergence and the Kodaira–Hodge projection is the identity.

mod duhamel;
mod state;

pub use duhamel::MildSolver;
pub use state::{fmt17, ForcingSpec, Modulated, StateVector, Trajectory, Waveform};

use duhamel::{
    add_into, bilinear_sources, coupling_sources, external_sources, sample_modulated,
    theta_samples, Slot,
};

use crate::error::{Error, Result};
use crate::estimates::{require_p_above_d, EstimateConstants};

/// Parameters of the Picard iteration on the ball `B_ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Lebesgue exponent, `p > d`.
    pub p: f64,
    /// Radius of the ball the iteration lives in.
    pub rho: f64,
    /// Relative sup-norm tolerance between consecutive iterates.
    pub picard_tol: f64,
    pub max_iters: usize,
    /// Uniform time steps per period.
    pub steps_per_period: usize,
}

impl SolverConfig {
    pub fn new(p: f64, rho: f64) -> Self {
        Self {
            p,
            rho,
            picard_tol: 1e-8,
            max_iters: 200,
            steps_per_period: 128,
        }
    }
}

/// Contraction margin `2Mρ + N‖h‖_{∞,p/2}`.
pub fn contraction_margin(consts: &EstimateConstants, rho: f64, h_norm: f64) -> Result<f64> {
    Ok(2.0 * consts.smoothing_constant_m()? * rho + consts.linear_constant_n()? * h_norm)
}

/// Left side of the ball condition `‖init‖ + M(ρ² + ‖(F,f)‖) + N‖h‖ρ ≤ ρ`.
pub fn ball_condition_lhs(
    consts: &EstimateConstants,
    rho: f64,
    init_norm: f64,
    force_norm: f64,
    h_norm: f64,
) -> Result<f64> {
    let m = consts.smoothing_constant_m()?;
    let n = consts.linear_constant_n()?;
    Ok(init_norm + m * (rho * rho + force_norm) + n * h_norm * rho)
}

/// Outcome of a Picard run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// `‖x_{n+1} - x_n‖_{∞, p×p}` per iteration.
    pub diffs: Vec<f64>,
    /// `diffs[n] / diffs[n-1]`.
    pub ratios: Vec<f64>,
    pub margin: f64,
    pub ball_lhs: f64,
    /// Largest sup-norm of any iterate.
    pub max_iterate_norm: f64,
}

impl ConvergenceReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,diff_norm,ratio\n");
        for (i, d) in self.diffs.iter().enumerate() {
            let r = if i == 0 { String::new() } else { fmt17(self.ratios[i - 1]) };
            out.push_str(&format!("{},{},{}\n", i + 1, fmt17(*d), r));
        }
        out
    }
}

impl MildSolver {
    fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if !traj.first().u().same_grid_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        if (traj.dt() - self.dt()).abs() > 1e-12 * self.dt() {
            return Err(Error::InvalidGrid(format!(
                "trajectory step {} differs from solver step {}",
                traj.dt(),
                self.dt()
            )));
        }
        Ok(())
    }

    fn node_of(&self, traj: &Trajectory, t: f64) -> Result<usize> {
        self.check_trajectory(traj)?;
        traj.node_index(t)
    }

    /// `T_h(η)(t) = ∫_0^t e^{-(t-s)A} [η h; 0](s) ds`, with `η` the θ-slot of
    /// `eta_traj`.
    #[allow(non_snake_case)]
    pub fn op_T_h(&self, eta_traj: &Trajectory, h: &Modulated, t: f64) -> Result<StateVector> {
        let k = self.node_of(eta_traj, t)?;
        if !h.profile.same_grid_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        let n = self.grid().len();
        let src = coupling_sources(&theta_samples(eta_traj)[..=k], h, self.dt());
        let u = self.integrate_at(Slot::Velocity, &src, k);
        Ok(StateVector::from_values(self.grid(), u, vec![0.0; n]))
    }

    /// `𝕋(F, f)(t) = ∫_0^t e^{-(t-s)A} div[F; f](s) ds`.
    #[allow(non_snake_case)]
    pub fn op_T_ext(&self, forcing: &ForcingSpec, t: f64) -> Result<StateVector> {
        if !forcing.force.profile.same_grid_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        let k = self.steps_at(t)?;
        let (su, st) = external_sources(self.grid(), forcing, self.dt(), k);
        Ok(StateVector::from_values(
            self.grid(),
            self.integrate_at(Slot::Velocity, &su, k),
            self.integrate_at(Slot::Temperature, &st, k),
        ))
    }

    /// `B(a, b)(t) = -∫_0^t e^{-(t-s)A} div[a_u b_u; a_u b_θ](s) ds`.
    #[allow(non_snake_case)]
    pub fn op_B(&self, a: &Trajectory, b: &Trajectory, t: f64) -> Result<StateVector> {
        let k = self.node_of(a, t)?;
        self.check_trajectory(b)?;
        if b.steps() < k {
            return Err(Error::OffGrid { t });
        }
        let (su, st) = bilinear_sources(self.grid(), &a.states()[..=k], &b.states()[..=k]);
        Ok(StateVector::from_values(
            self.grid(),
            self.integrate_at(Slot::Velocity, &su, k),
            self.integrate_at(Slot::Temperature, &st, k),
        ))
    }

    /// Right side of the mild formulation at one node, evaluated by direct
    /// lag sums: `e^{-tA} init + B(x, x)(t) + T_h(x_θ)(t) + 𝕋(F, f)(t)`.
    pub fn duhamel_rhs(
        &self,
        init: &StateVector,
        traj: &Trajectory,
        forcing: &ForcingSpec,
        t: f64,
    ) -> Result<StateVector> {
        let k = self.node_of(traj, t)?;
        self.check_state(init)?;
        if k == 0 {
            return Ok(init.clone());
        }
        let lin = self.evolve(t, init)?;
        let b = self.op_B(traj, traj, t)?;
        let th = self.op_T_h(traj, &forcing.gravity, t)?;
        let ext = self.op_T_ext(forcing, t)?;
        lin.add(&b)?.add(&th)?.add(&ext)
    }

    /// Right side of the linear equation with prescribed `η` at one node:
    /// `e^{-tA} init + T_h(η)(t) + 𝕋(F, f)(t)`.
    pub fn linear_rhs(
        &self,
        init: &StateVector,
        forcing: &ForcingSpec,
        eta: &Modulated,
        t: f64,
    ) -> Result<StateVector> {
        self.check_state(init)?;
        let k = self.steps_at(t)?;
        if k == 0 {
            return Ok(init.clone());
        }
        let eta_samples = sample_modulated(eta, self.dt(), k);
        let src = coupling_sources(&eta_samples, &forcing.gravity, self.dt());
        let n = self.grid().len();
        let th = StateVector::from_values(
            self.grid(),
            self.integrate_at(Slot::Velocity, &src, k),
            vec![0.0; n],
        );
        self.evolve(t, init)?.add(&th)?.add(&self.op_T_ext(forcing, t)?)
    }

    fn steps_at(&self, t: f64) -> Result<usize> {
        if t == 0.0 {
            return Ok(0);
        }
        self.steps_for(t)
    }

    /// Mild solution of the linear equation with prescribed `η` over
    /// `steps` time steps.
    pub fn solve_linear(
        &self,
        init: &StateVector,
        forcing: &ForcingSpec,
        eta: &Modulated,
        steps: usize,
        p: f64,
    ) -> Result<Trajectory> {
        require_p_above_d(self.grid().d(), p)?;
        self.check_state(init)?;
        if !eta.profile.same_grid_as(self.grid()) || !forcing.force.profile.same_grid_as(self.grid()) {
            return Err(Error::GridMismatch);
        }
        let orbit = self.semigroup_orbit(init, steps)?;
        let (mut su, st) = external_sources(self.grid(), forcing, self.dt(), steps);
        if !forcing.gravity.is_zero() && !eta.is_zero() {
            let eta_samples = sample_modulated(eta, self.dt(), steps);
            add_into(&mut su, &coupling_sources(&eta_samples, &forcing.gravity, self.dt()));
        }
        self.combine(orbit, su, st)
    }

    fn combine(
        &self,
        orbit: Vec<StateVector>,
        su: Vec<Vec<f64>>,
        st: Vec<Vec<f64>>,
    ) -> Result<Trajectory> {
        let iu = self.integrate(Slot::Velocity, &su);
        let it = self.integrate(Slot::Temperature, &st);
        let states = orbit
            .iter()
            .zip(iu.iter().zip(&it))
            .enumerate()
            .map(|(k, (s, (a, b)))| {
                if k == 0 {
                    // the initial state itself, untouched by modal projection
                    return s.clone();
                }
                let u = s.u().values().iter().zip(a).map(|(x, y)| x + y).collect();
                let th = s.theta().values().iter().zip(b).map(|(x, y)| x + y).collect();
                StateVector::from_values(self.grid(), u, th)
            })
            .collect();
        Trajectory::new(self.dt(), states)
    }

    /// The Picard map `Φ(x) = e^{-tA} init + B(x, x) + T_h(x_θ) + 𝕋(F, f)`
    /// on a whole trajectory.
    pub fn picard_map(
        &self,
        init: &StateVector,
        x: &Trajectory,
        forcing: &ForcingSpec,
    ) -> Result<Trajectory> {
        self.check_trajectory(x)?;
        let steps = x.steps();
        let orbit = self.semigroup_orbit(init, steps)?;
        let (mut su, mut st) = external_sources(self.grid(), forcing, self.dt(), steps);
        let (bu, bt) = bilinear_sources(self.grid(), x.states(), x.states());
        add_into(&mut su, &bu);
        add_into(&mut st, &bt);
        if !forcing.gravity.is_zero() {
            add_into(&mut su, &coupling_sources(&theta_samples(x), &forcing.gravity, self.dt()));
        }
        self.combine(orbit, su, st)
    }

    /// Fixed point of `Φ` on `[0, steps·Δt]` inside the ball `B_ρ`.
    ///
    /// Refuses to iterate unless the contraction margin is below one and the
    /// ball condition holds. `warm` seeds the iteration; zero otherwise.
    pub fn picard_solve(
        &self,
        init: &StateVector,
        forcing: &ForcingSpec,
        cfg: &SolverConfig,
        consts: &EstimateConstants,
        steps: usize,
        warm: Option<&Trajectory>,
    ) -> Result<(Trajectory, ConvergenceReport)> {
        require_p_above_d(self.grid().d(), cfg.p)?;
        self.check_state(init)?;
        let p = cfg.p;
        let h_norm = forcing.gravity_norm(p)?;
        let m = consts.smoothing_constant_m()?;
        let n = consts.linear_constant_n()?;
        let margin = contraction_margin(consts, cfg.rho, h_norm)?;
        if margin >= 1.0 {
            return Err(Error::ContractionMargin {
                margin,
                m,
                n,
                rho: cfg.rho,
                h_norm,
            });
        }
        let ball_lhs =
            ball_condition_lhs(consts, cfg.rho, init.norm(p)?, forcing.force_norm(p)?, h_norm)?;
        if ball_lhs > cfg.rho {
            return Err(Error::BallCondition {
                lhs: ball_lhs,
                rho: cfg.rho,
            });
        }

        let mut x = match warm {
            Some(w) => {
                self.check_trajectory(w)?;
                if w.steps() != steps {
                    return Err(Error::InvalidGrid("warm start has the wrong length".into()));
                }
                w.clone()
            }
            None => Trajectory::constant(StateVector::zeros(self.grid().clone()), self.dt(), steps)?,
        };
        let mut diffs = Vec::new();
        let mut ratios = Vec::new();
        let mut max_norm = 0.0_f64;
        for iter in 1..=cfg.max_iters {
            let next = self.picard_map(init, &x, forcing)?;
            let diff = next.sup_distance(&x, p)?;
            let norm = next.sup_norm(p)?;
            max_norm = max_norm.max(norm);
            if let Some(prev) = diffs.last() {
                if *prev > 0.0 {
                    ratios.push(diff / prev);
                }
            }
            diffs.push(diff);
            x = next;
            if diff <= cfg.picard_tol * norm || diff == 0.0 {
                return Ok((
                    x,
                    ConvergenceReport {
                        iterations: iter,
                        diffs,
                        ratios,
                        margin,
                        ball_lhs,
                        max_iterate_norm: max_norm,
                    },
                ));
            }
        }
        Err(Error::NotConverged {
            iterations: cfg.max_iters,
            last_diff: diffs.last().copied().unwrap_or(f64::NAN),
            ratios,
        })
    }
}
