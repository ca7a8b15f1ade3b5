//! Poincaré maps, Cesàro averages and time-periodic mild solutions.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimates::EstimateConstants;
use crate::mild_solver::{
    fmt17, ForcingSpec, MildSolver, Modulated, SolverConfig, StateVector, Trajectory,
};

/// How the temperature slot enters the velocity equation over one period.
#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Linear equation with a prescribed `T`-periodic `η`.
    Linear { eta: &'a Modulated, p: f64 },
    /// Full nonlinear system solved by Picard iteration.
    Nonlinear {
        cfg: &'a SolverConfig,
        consts: &'a EstimateConstants,
    },
}

impl Mode<'_> {
    pub fn p(&self) -> f64 {
        match self {
            Mode::Linear { p, .. } => *p,
            Mode::Nonlinear { cfg, .. } => cfg.p,
        }
    }
}

/// Mild solution over `steps` steps from `init` in the given mode.
pub fn solve(
    solver: &MildSolver,
    init: &StateVector,
    forcing: &ForcingSpec,
    mode: Mode<'_>,
    steps: usize,
    warm: Option<&Trajectory>,
) -> Result<Trajectory> {
    match mode {
        Mode::Linear { eta, p } => solver.solve_linear(init, forcing, eta, steps, p),
        Mode::Nonlinear { cfg, consts } => {
            Ok(solver.picard_solve(init, forcing, cfg, consts, steps, warm)?.0)
        }
    }
}

fn period_steps(solver: &MildSolver, forcing: &ForcingSpec) -> Result<usize> {
    solver.steps_for(forcing.period())
}

/// `P(x)`: the state at `t = T` of the mild solution started at `x`.
pub fn poincare_map(
    solver: &MildSolver,
    init: &StateVector,
    forcing: &ForcingSpec,
    mode: Mode<'_>,
) -> Result<StateVector> {
    let steps = period_steps(solver, forcing)?;
    Ok(solve(solver, init, forcing, mode, steps, None)?.last().clone())
}

/// The linear Poincaré map as the affine map `P(x) = e^{-TA} x + P(0)`,
/// diagonal in the eigenbasis of the semigroup.
#[derive(Debug, Clone)]
pub struct LinearPoincare<'a> {
    solver: &'a MildSolver,
    offset: StateVector,
    offset_modal: (DVector<f64>, DVector<f64>),
    factors: (Vec<f64>, Vec<f64>),
    period: f64,
}

impl<'a> LinearPoincare<'a> {
    pub fn new(solver: &'a MildSolver, forcing: &ForcingSpec, eta: &Modulated, p: f64) -> Result<Self> {
        let zero = StateVector::zeros(solver.grid().clone());
        let offset = poincare_map(solver, &zero, forcing, Mode::Linear { eta, p })?;
        let prop = solver.propagator();
        let period = forcing.period();
        let d = solver.grid().d();
        let damping = crate::heat_kernel::vector_damping(d);
        let lam = prop.eigenvalues();
        let factors = (
            lam.iter().map(|l| ((l - damping) * period).exp()).collect(),
            lam.iter().map(|l| (l * period).exp()).collect(),
        );
        let offset_modal = (
            prop.to_modal(offset.u().values()),
            prop.to_modal(offset.theta().values()),
        );
        Ok(Self {
            solver,
            offset,
            offset_modal,
            factors,
            period,
        })
    }

    /// `P(0)`.
    pub fn offset(&self) -> &StateVector {
        &self.offset
    }

    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        self.solver.evolve(self.period, x)?.add(&self.offset)
    }

    fn physical(&self, cu: &DVector<f64>, ct: &DVector<f64>) -> StateVector {
        let prop = self.solver.propagator();
        StateVector::new(
            crate::geometry::RadialField::new(self.solver.grid().clone(), prop.from_modal(cu))
                .expect("finite"),
            crate::geometry::RadialField::new(self.solver.grid().clone(), prop.from_modal(ct))
                .expect("finite"),
        )
        .expect("same grid")
    }

    fn step_modal(&self, cu: &mut DVector<f64>, ct: &mut DVector<f64>) {
        for (i, c) in cu.iter_mut().enumerate() {
            *c = self.factors.0[i] * *c + self.offset_modal.0[i];
        }
        for (i, c) in ct.iter_mut().enumerate() {
            *c = self.factors.1[i] * *c + self.offset_modal.1[i];
        }
    }

    /// `P^k(0)` for `k = 1..=n`.
    pub fn orbit_from_zero(&self, n: usize) -> Vec<StateVector> {
        let m = self.factors.0.len();
        let (mut cu, mut ct) = (DVector::zeros(m), DVector::zeros(m));
        (0..n)
            .map(|_| {
                self.step_modal(&mut cu, &mut ct);
                self.physical(&cu, &ct)
            })
            .collect()
    }

    /// The Cesàro average `P_n(0) = (1/n) Σ_{k=1}^n P^k(0)`.
    pub fn cesaro(&self, n: usize) -> Result<StateVector> {
        if n == 0 {
            return Err(Error::Precondition("Cesàro index must be >= 1".into()));
        }
        let (su, st) = self.cesaro_sums(n);
        Ok(self.physical(&(su / n as f64), &(st / n as f64)))
    }

    fn cesaro_sums(&self, n: usize) -> (DVector<f64>, DVector<f64>) {
        let m = self.factors.0.len();
        let (mut cu, mut ct) = (DVector::zeros(m), DVector::zeros(m));
        let (mut su, mut st) = (DVector::zeros(m), DVector::zeros(m));
        for _ in 0..n {
            self.step_modal(&mut cu, &mut ct);
            su += &cu;
            st += &ct;
        }
        (su, st)
    }

    /// Cesàro averages until `n ‖P_{n+1}(0) - P_n(0)‖_p ≤ tol`, an estimate
    /// of the remaining `O(1/n)` error. Checked at doubling `n`.
    pub fn cesaro_limit(&self, p: f64, tol: f64, max_terms: usize) -> Result<(StateVector, usize)> {
        let m = self.factors.0.len();
        let (mut cu, mut ct) = (DVector::zeros(m), DVector::zeros(m));
        let (mut su, mut st) = (DVector::zeros(m), DVector::zeros(m));
        let mut next_check = 16;
        let mut last = f64::NAN;
        for n in 1..=max_terms {
            self.step_modal(&mut cu, &mut ct);
            su += &cu;
            st += &ct;
            if n == next_check {
                next_check *= 2;
                let nf = n as f64;
                let avg = self.physical(&(&su / nf), &(&st / nf));
                // P_{n+1} - P_n = (P^{n+1}(0) - P_n) / (n + 1)
                let (mut nu, mut nt) = (cu.clone(), ct.clone());
                self.step_modal(&mut nu, &mut nt);
                let next = self.physical(&nu, &nt);
                let inc = next.sub(&avg)?.norm(p)? / (nf + 1.0);
                last = nf * inc;
                if last <= tol {
                    return Ok((avg, n));
                }
            }
        }
        Err(Error::NotConverged {
            iterations: max_terms,
            last_diff: last,
            ratios: Vec::new(),
        })
    }
}

/// `P_n(0)` for the linear equation.
pub fn cesaro_state(
    n: usize,
    solver: &MildSolver,
    forcing: &ForcingSpec,
    eta: &Modulated,
    p: f64,
) -> Result<StateVector> {
    LinearPoincare::new(solver, forcing, eta, p)?.cesaro(n)
}

/// A periodic orbit together with how it was found.
#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    pub trajectory: Trajectory,
    /// Poincaré iterations used.
    pub iterations: usize,
    /// `‖x_{n+1} - x_n‖` per Poincaré iteration.
    pub steps: Vec<f64>,
    /// `‖state(T) - state(0)‖_{p×p}`.
    pub defect: f64,
    /// Total inner Picard iterations (nonlinear mode only).
    pub inner_iterations: usize,
}

impl PeriodicSolution {
    pub fn state(&self) -> &StateVector {
        self.trajectory.first()
    }
}

const MAX_POINCARE: usize = 2000;

/// Fixed point of the linear Poincaré map by direct iteration from `start`
/// (zero by default), stopped once a step falls below `tol / 10`.
pub fn find_periodic_linear(
    solver: &MildSolver,
    forcing: &ForcingSpec,
    eta: &Modulated,
    p: f64,
    tol: f64,
    start: Option<&StateVector>,
) -> Result<PeriodicSolution> {
    let map = LinearPoincare::new(solver, forcing, eta, p)?;
    let mut x = match start {
        Some(s) => s.clone(),
        None => StateVector::zeros(solver.grid().clone()),
    };
    let mut steps = Vec::new();
    loop {
        let next = map.apply(&x)?;
        let step = next.distance(&x, p)?;
        steps.push(step);
        x = next;
        if step <= 0.1 * tol {
            break;
        }
        if steps.len() >= MAX_POINCARE {
            return Err(not_converged(&steps));
        }
    }
    let n_steps = period_steps(solver, forcing)?;
    let trajectory = solver.solve_linear(&x, forcing, eta, n_steps, p)?;
    let defect = check_periodicity(&trajectory, forcing.period(), p)?;
    Ok(PeriodicSolution {
        trajectory,
        iterations: steps.len(),
        steps,
        defect,
        inner_iterations: 0,
    })
}

fn not_converged(steps: &[f64]) -> Error {
    let ratios = steps.windows(2).rev().take(8).map(|w| w[1] / w[0]).collect();
    Error::NotConverged {
        iterations: steps.len(),
        last_diff: steps.last().copied().unwrap_or(f64::NAN),
        ratios,
    }
}

/// Periodic solution of the full system: Poincaré iteration outside,
/// Picard iteration over one period inside, warm-started from the previous
/// period's trajectory.
pub fn find_periodic_nonlinear(
    solver: &MildSolver,
    forcing: &ForcingSpec,
    cfg: &SolverConfig,
    consts: &EstimateConstants,
    tol: f64,
) -> Result<PeriodicSolution> {
    let n_steps = period_steps(solver, forcing)?;
    let mut x = StateVector::zeros(solver.grid().clone());
    let mut warm: Option<Trajectory> = None;
    let mut steps = Vec::new();
    let mut inner = 0;
    let trajectory = loop {
        let (traj, report) = solver.picard_solve(&x, forcing, cfg, consts, n_steps, warm.as_ref())?;
        inner += report.iterations;
        let next = traj.last().clone();
        let step = next.distance(&x, cfg.p)?;
        steps.push(step);
        if step <= 0.1 * tol {
            // one more period from the converged state gives the orbit
            let (traj, report) = solver.picard_solve(&next, forcing, cfg, consts, n_steps, Some(&traj))?;
            inner += report.iterations;
            break traj;
        }
        if steps.len() >= MAX_POINCARE {
            return Err(not_converged(&steps));
        }
        x = next;
        warm = Some(traj);
    };
    let defect = check_periodicity(&trajectory, forcing.period(), cfg.p)?;
    Ok(PeriodicSolution {
        trajectory,
        iterations: steps.len(),
        steps,
        defect,
        inner_iterations: inner,
    })
}

/// `max_t ‖state(t + T) - state(t)‖_{p×p}` over the overlapping nodes.
pub fn check_periodicity(traj: &Trajectory, period: f64, p: f64) -> Result<f64> {
    if traj.horizon() < period * (1.0 - 1e-12) {
        return Err(Error::HorizonTooShort {
            horizon: traj.horizon(),
            period,
        });
    }
    let m = traj.node_index(period)?;
    let states = traj.states();
    let mut worst = 0.0_f64;
    for k in 0..states.len() - m {
        worst = worst.max(states[k + m].distance(&states[k], p)?);
    }
    Ok(worst)
}

/// Distance between two solutions with different initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub deltas: Vec<f64>,
    /// `-slope` of the least-squares line through `ln δ(t)` over the second
    /// half of the horizon; infinite when `δ` vanishes there.
    pub fitted_rate: f64,
}

impl DecayReport {
    pub fn max_delta(&self) -> f64 {
        self.deltas.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,delta\n");
        for (t, d) in self.times.iter().zip(&self.deltas) {
            let _ = writeln!(out, "{},{}", fmt17(*t), fmt17(*d));
        }
        out
    }
}

/// Least-squares decay rate of `ln δ` over the second half of the samples.
pub fn fit_decay_rate(times: &[f64], deltas: &[f64]) -> f64 {
    let start = times.len() / 2;
    let pts: Vec<(f64, f64)> = times[start..]
        .iter()
        .zip(&deltas[start..])
        .filter(|(_, d)| **d > 0.0)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    -sxy / sxx
}

/// Solves from two initial states with the same forcing and reports
/// `δ(t) = ‖x_a(t) - x_b(t)‖_{p×p}` on every node of `[0, steps·Δt]`.
pub fn uniqueness_experiment(
    solver: &MildSolver,
    init_a: &StateVector,
    init_b: &StateVector,
    forcing: &ForcingSpec,
    mode: Mode<'_>,
    steps: usize,
) -> Result<DecayReport> {
    let a = solve(solver, init_a, forcing, mode, steps, None)?;
    let b = solve(solver, init_b, forcing, mode, steps, None)?;
    let p = mode.p();
    let deltas = a
        .states()
        .iter()
        .zip(b.states())
        .map(|(x, y)| x.distance(y, p))
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = a.times().collect();
    let fitted_rate = fit_decay_rate(&times, &deltas);
    Ok(DecayReport {
        times,
        deltas,
        fitted_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_rate_of_pure_exponential() {
        let times: Vec<f64> = (0..=40).map(|k| 0.1 * k as f64).collect();
        let deltas: Vec<f64> = times.iter().map(|t| 3.0 * (-1.7 * t).exp()).collect();
        assert!((fit_decay_rate(&times, &deltas) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn decay_rate_of_zero_curve_is_infinite() {
        let times = [0.0, 1.0, 2.0, 3.0];
        assert!(fit_decay_rate(&times, &[0.0; 4]).is_infinite());
    }
}
