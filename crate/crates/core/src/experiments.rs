//! Named experiments shared by the command line runner and the acceptance
//! suite. Each returns an [`Outcome`]: a list of checks plus CSV tables.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimates::{
    fit_constants, gamma_integral, gamma_integral_numeric, lift, measure, reports_to_csv,
    sample_library, semigroups_for, slot_reports_to_csv, sweep, BoundReport, EstimateConstants,
    EstimateKind, Fit, Sample, SweepGrid,
};
use crate::geometry::{default_r_max, RadialField, RadialGrid};
use crate::heat_kernel::{kernel_h3, KernelTable, MatrixSemigroup, SpectralPropagator};
use crate::mild_solver::{
    fmt17, ForcingSpec, MildSolver, Modulated, SolverConfig, StateVector, Trajectory, Waveform,
};
use crate::periodic::{
    check_periodicity, find_periodic_linear, find_periodic_nonlinear, uniqueness_experiment,
    LinearPoincare, Mode,
};

/// One assertion of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<="` or `">="`.
    pub relation: &'static str,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<=",
            limit,
            pass: value <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">=",
            limit,
            pass: value >= limit,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6e} {} {:.6e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.relation,
            self.limit
        )
    }
}

/// Checks, informational notes and CSV tables produced by an experiment.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// `(file name, contents)`.
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn merge(&mut self, other: Outcome) {
        self.checks.extend(other.checks);
        self.notes.extend(other.notes);
        self.tables.extend(other.tables);
    }

    pub fn summary(&self, title: &str) -> String {
        let mut out = format!("{title}: {}\n", if self.passed() { "PASS" } else { "FAIL" });
        for c in &self.checks {
            let _ = writeln!(out, "  {}", c.line());
        }
        for n in &self.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        out
    }
}

fn default_d() -> usize {
    3
}

/// Radial grid of a solver experiment.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_d")]
    pub d: usize,
    /// Defaults to `20 + 6 √t_max` for the longest time the experiment needs.
    pub r_max: Option<f64>,
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            d: 3,
            r_max: None,
            panels: 32,
            nodes_per_panel: 8,
        }
    }
}

impl GridSpec {
    pub fn build(&self, t_max: f64) -> Result<Arc<RadialGrid>> {
        let r_max = self.r_max.unwrap_or_else(|| default_r_max(t_max));
        Ok(Arc::new(RadialGrid::new(self.d, r_max, self.panels, self.nodes_per_panel)?))
    }

    pub fn refined(&self) -> Self {
        Self {
            panels: 2 * self.panels,
            ..self.clone()
        }
    }
}

/// Data of the solver experiments: Gaussian profiles of width `width` with
/// periodic waveforms of period `period`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub p: f64,
    pub period: f64,
    pub steps_per_period: usize,
    pub width: f64,
    pub init_amplitude: f64,
    pub force_amplitude: f64,
    pub flux_amplitude: f64,
    pub gravity_amplitude: f64,
    /// Amplitude of the prescribed temperature `η` of the linear equation.
    pub eta_amplitude: f64,
    /// Target contraction margin `2Mρ + N‖h‖`; fixes `ρ`.
    pub margin: f64,
    pub picard_tol: f64,
    pub max_iters: usize,
    /// Periodicity tolerance of the periodic-orbit search.
    pub periodic_tol: f64,
    /// Horizon of the uniqueness runs, in periods.
    pub periods: usize,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            p: 4.0,
            period: 1.0,
            steps_per_period: 128,
            width: 1.0,
            init_amplitude: 0.5,
            force_amplitude: 0.5,
            flux_amplitude: 0.5,
            gravity_amplitude: 0.2,
            eta_amplitude: 0.5,
            margin: 0.5,
            picard_tol: 1e-8,
            max_iters: 200,
            periodic_tol: 1e-7,
            periods: 2,
        }
    }
}

impl ProblemSpec {
    /// The small-data regime of the nonlinear theory.
    pub fn small() -> Self {
        Self {
            init_amplitude: 1e-3,
            force_amplitude: 5e-5,
            flux_amplitude: 5e-5,
            gravity_amplitude: 5e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        crate::estimates::require_p_above_d(d, self.p)?;
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidTime { t: self.period, expect: "> 0 (period)" });
        }
        if self.steps_per_period == 0 || self.max_iters == 0 || self.periods == 0 {
            return Err(Error::Config(
                "steps_per_period, max_iters and periods must be positive".into(),
            ));
        }
        if !(self.width > 0.0) || !(self.picard_tol > 0.0) || !(self.periodic_tol > 0.0) {
            return Err(Error::Config("width and tolerances must be positive".into()));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::Config(format!("margin must lie in (0, 1), got {}", self.margin)));
        }
        Ok(())
    }

    fn bump(&self, grid: &Arc<RadialGrid>, center: f64) -> Result<RadialField> {
        let w2 = 2.0 * self.width * self.width;
        RadialField::from_fn(grid.clone(), |r| (-(r - center) * (r - center) / w2).exp())
    }

    pub fn init(&self, grid: &Arc<RadialGrid>) -> Result<StateVector> {
        StateVector::new(
            self.bump(grid, 0.0)?.scale(self.init_amplitude),
            self.bump(grid, 1.0)?.scale(self.init_amplitude),
        )
    }

    /// A second initial state, different in both slots.
    pub fn other_init(&self, grid: &Arc<RadialGrid>) -> Result<StateVector> {
        StateVector::new(
            self.bump(grid, 2.0)?.scale(-self.init_amplitude),
            self.bump(grid, 0.0)?.scale(0.5 * self.init_amplitude),
        )
    }

    fn wave(&self, amplitude: f64, phase: f64) -> Waveform {
        Waveform {
            phase,
            ..Waveform::sine(self.period, amplitude)
        }
    }

    /// `F = a_F g sin`, `f = a_f g(· - 1) cos`, `h = a_h g (1 + sin/2)`.
    pub fn forcing(&self, grid: &Arc<RadialGrid>) -> Result<ForcingSpec> {
        let g = self.bump(grid, 0.0)?;
        ForcingSpec::new(
            Modulated::new(g.clone(), self.wave(self.force_amplitude, 0.0)),
            Modulated::new(self.bump(grid, 1.0)?, self.wave(self.flux_amplitude, 0.5 * PI)),
            Modulated::new(
                g,
                Waveform {
                    offset: self.gravity_amplitude,
                    ..Waveform::sine(self.period, 0.5 * self.gravity_amplitude)
                },
            ),
        )
    }

    pub fn eta(&self, grid: &Arc<RadialGrid>) -> Result<Modulated> {
        Ok(Modulated::new(self.bump(grid, 0.0)?, self.wave(self.eta_amplitude, 0.25 * PI)))
    }

    /// Ball radius giving the target margin: `ρ = (margin - N‖h‖) / 2M`.
    pub fn solver_config(
        &self,
        consts: &EstimateConstants,
        forcing: &ForcingSpec,
    ) -> Result<SolverConfig> {
        let nh = consts.linear_constant_n()? * forcing.gravity_norm(self.p)?;
        let rho = (self.margin - nh) / (2.0 * consts.smoothing_constant_m()?);
        if rho <= 0.0 {
            return Err(Error::Precondition(format!(
                "N|h| = {nh:.6e} leaves no room for the margin {}; reduce gravity_amplitude",
                self.margin
            )));
        }
        Ok(SolverConfig {
            p: self.p,
            rho,
            picard_tol: self.picard_tol,
            max_iters: self.max_iters,
            steps_per_period: self.steps_per_period,
        })
    }
}

/// Grid, propagator and solver of one solver experiment.
pub struct Setup {
    pub grid: Arc<RadialGrid>,
    pub solver: MildSolver,
    pub problem: ProblemSpec,
}

impl Setup {
    /// `t_max` sizes the default radial domain.
    pub fn new(grid: &GridSpec, problem: &ProblemSpec, t_max: f64) -> Result<Self> {
        problem.validate(grid.d)?;
        let g = grid.build(t_max)?;
        let prop = Arc::new(SpectralPropagator::with_defaults(g.clone())?);
        let solver = MildSolver::per_period(prop, problem.period, problem.steps_per_period)?;
        Ok(Self {
            grid: g,
            solver,
            problem: problem.clone(),
        })
    }

    fn with_steps(&self, steps_per_period: usize) -> Result<Self> {
        let solver = MildSolver::per_period(
            self.solver.propagator().clone(),
            self.problem.period,
            steps_per_period,
        )?;
        Ok(Self {
            grid: self.grid.clone(),
            solver,
            problem: ProblemSpec {
                steps_per_period,
                ..self.problem.clone()
            },
        })
    }
}

fn require_dimension(consts: &EstimateConstants, d: usize) -> Result<EstimateConstants> {
    if consts.d != d {
        return Err(Error::Constants(format!(
            "constants are calibrated for d = {}, the experiment runs in d = {d}",
            consts.d
        )));
    }
    Ok(*consts)
}

// ---------------------------------------------------------------- kernel

/// Kernel normalization, the closed form at the origin and the semigroup law.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    pub dims: Vec<usize>,
    pub times: Vec<f64>,
    pub mass_tol: f64,
    /// Reference value of the `d = 3` kernel at `t = 1, r = 0`.
    pub reference: f64,
    pub reference_tol: f64,
    /// Dimensions and split times of the semigroup-law check `K_s K_s = K_2s`.
    pub semigroup_dims: Vec<usize>,
    pub semigroup_time: f64,
    pub semigroup_tol: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            dims: vec![2, 3, 4],
            times: vec![0.1, 1.0, 10.0],
            mass_tol: 1e-6,
            reference: 8.2586e-3,
            reference_tol: 1e-6,
            semigroup_dims: vec![2, 3],
            semigroup_time: 0.5,
            semigroup_tol: 1e-6,
        }
    }
}

pub fn kernel_check(spec: &KernelSpec) -> Result<Outcome> {
    let mut out = Outcome::default();
    let jobs: Vec<(usize, f64)> = spec
        .dims
        .iter()
        .flat_map(|&d| spec.times.iter().map(move |&t| (d, t)))
        .collect();
    let masses: Vec<f64> = jobs
        .par_iter()
        .map(|&(d, t)| Ok(KernelTable::new(d, t)?.mass()))
        .collect::<Result<_>>()?;
    let mut csv = String::from("d,t,mass,residual\n");
    let mut worst = 0.0_f64;
    for (&(d, t), m) in jobs.iter().zip(&masses) {
        let res = (m - 1.0).abs();
        worst = worst.max(res);
        let _ = writeln!(csv, "{d},{},{},{}", fmt17(t), fmt17(*m), fmt17(res));
    }
    out.tables.push(("kernel_mass.csv".into(), csv));
    out.checks.push(Check::at_most("kernel mass |m - 1|", worst, spec.mass_tol));

    let value = kernel_h3(1.0, 0.0)?;
    out.checks.push(Check::at_most(
        format!("d=3 kernel at t=1, r=0 vs {:e} (relative)", spec.reference),
        (value - spec.reference).abs() / spec.reference.abs(),
        spec.reference_tol,
    ));
    // (4π)^{-3/2} e^{-1}
    let exact = 8.258_301_266_124_23e-3;
    out.notes.push(format!(
        "d=3 kernel at t=1, r=0 is {value:.12e}; exact (4 pi)^(-3/2) e^(-1) = {exact:.12e}, relative difference {:.3e}",
        (value - exact).abs() / exact
    ));

    let s = spec.semigroup_time;
    let mut law = String::from("d,s,defect_l2\n");
    let mut worst_law = 0.0_f64;
    for &d in &spec.semigroup_dims {
        let grid = Arc::new(RadialGrid::with_defaults(d, default_r_max(2.0 * s))?);
        let sgs = semigroups_for(&grid, &[s, 2.0 * s])?;
        let f = RadialField::from_fn(grid.clone(), |r| (-r * r).exp() * (1.0 + 0.5 * r))?;
        let twice = sgs[0].scalar(&sgs[0].scalar(&f)?)?;
        let once = sgs[1].scalar(&f)?;
        let defect = twice.sub(&once)?.lp_norm(2.0)? / f.lp_norm(2.0)?;
        worst_law = worst_law.max(defect);
        let _ = writeln!(law, "{d},{},{}", fmt17(s), fmt17(defect));
    }
    out.tables.push(("semigroup_law.csv".into(), law));
    out.checks.push(Check::at_most("semigroup law defect (relative L2)", worst_law, spec.semigroup_tol));
    Ok(out)
}

// ------------------------------------------------------------ constants

/// `∫_0^∞ s^{-θ} e^{-βs} ds` in closed form against direct quadrature.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSpec {
    pub pairs: Vec<[f64; 2]>,
    pub tol: f64,
}

impl Default for GammaSpec {
    fn default() -> Self {
        Self {
            pairs: vec![[0.75, 2.5], [0.875, 2.6875]],
            tol: 1e-6,
        }
    }
}

pub fn gamma_identity(spec: &GammaSpec, consts: Option<&EstimateConstants>) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut csv = String::from("theta,beta,closed_form,numeric,relative_error\n");
    let mut worst = 0.0_f64;
    for &[theta, beta] in &spec.pairs {
        if !(0.0..1.0).contains(&theta) || beta <= 0.0 {
            return Err(Error::Config(format!(
                "gamma identity needs 0 <= theta < 1 and beta > 0, got ({theta}, {beta})"
            )));
        }
        let a = gamma_integral(theta, beta);
        let b = gamma_integral_numeric(theta, beta);
        let rel = (a - b).abs() / a.abs();
        worst = worst.max(rel);
        let _ = writeln!(csv, "{},{},{},{},{}", fmt17(theta), fmt17(beta), fmt17(a), fmt17(b), fmt17(rel));
    }
    out.tables.push(("gamma_identity.csv".into(), csv));
    out.checks.push(Check::at_most("Gamma integral identity (relative)", worst, spec.tol));
    if let Some(c) = consts {
        let n = (c.linear_constant_n()? - c.linear_constant_n_numeric()?).abs() / c.linear_constant_n()?;
        let m = (c.smoothing_constant_m()? - c.smoothing_constant_m_numeric()?).abs()
            / c.smoothing_constant_m()?;
        out.checks.push(Check::at_most("N closed form vs quadrature (relative)", n, spec.tol));
        out.checks.push(Check::at_most("M closed form vs quadrature (relative)", m, spec.tol));
    }
    Ok(out)
}

// ---------------------------------------------------------- estimates

fn default_t_grid() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

/// Sweep grid of the calibration and of the estimate verification.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSpec {
    pub dims: Vec<usize>,
    /// Exponent whose proof pairs join the calibration.
    pub p: f64,
    pub t_grid: Vec<f64>,
    pub dispersive: Vec<[f64; 2]>,
    pub smoothing: Vec<[f64; 2]>,
    /// Times of the smoothing verification, a subset of `t_grid`.
    pub smoothing_times: Vec<f64>,
    /// Dimensions of the smoothing verification.
    pub smoothing_dims: Vec<usize>,
    pub r_max: Option<f64>,
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Lower bound on the worst ratio that makes a fit non-vacuous.
    pub min_worst_ratio: f64,
}

impl Default for EstimateSpec {
    fn default() -> Self {
        let inf = f64::INFINITY;
        Self {
            dims: vec![2, 3],
            p: 4.0,
            t_grid: default_t_grid(),
            dispersive: vec![[1.0, 1.0], [2.0, 2.0], [2.0, 4.0], [2.0, inf], [4.0, 4.0], [1.0, inf]],
            smoothing: vec![[2.0, 2.0], [2.0, 4.0], [4.0, 4.0]],
            smoothing_times: vec![0.25, 1.0, 4.0],
            smoothing_dims: vec![3],
            r_max: None,
            panels: 64,
            nodes_per_panel: 8,
            min_worst_ratio: 0.5,
        }
    }
}

fn pairs(v: &[[f64; 2]]) -> Vec<(f64, f64)> {
    v.iter().map(|&[p, q]| (p, q)).collect()
}

/// Semigroups and samples of one dimension, reused by calibration and
/// verification.
pub struct SweepContext {
    pub d: usize,
    pub grid: Arc<RadialGrid>,
    pub library: Vec<Sample>,
    pub t_grid: Vec<f64>,
    pub semigroups: Vec<MatrixSemigroup>,
}

impl SweepContext {
    pub fn new(d: usize, spec: &EstimateSpec, seed: Option<u64>) -> Result<Self> {
        if spec.t_grid.is_empty() {
            return Err(Error::Config("t_grid is empty".into()));
        }
        let t_max = spec.t_grid.iter().cloned().fold(0.0, f64::max);
        let r_max = spec.r_max.unwrap_or_else(|| default_r_max(t_max));
        let grid = Arc::new(RadialGrid::new(d, r_max, spec.panels, spec.nodes_per_panel)?);
        let library = sample_library(&grid, seed)?;
        let semigroups = semigroups_for(&grid, &spec.t_grid)?;
        Ok(Self {
            d,
            grid,
            library,
            t_grid: spec.t_grid.clone(),
            semigroups,
        })
    }

    fn semigroups_at(&self, times: &[f64]) -> Result<Vec<MatrixSemigroup>> {
        times
            .iter()
            .map(|t| {
                self.semigroups
                    .iter()
                    .find(|sg| sg.t() == *t)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("time {t} is not in t_grid")))
            })
            .collect()
    }
}

/// Calibrates `(C, δ_d)` for one dimension.
pub fn calibrate(ctx: &SweepContext, spec: &EstimateSpec) -> Result<Fit> {
    let grid = SweepGrid {
        t_grid: ctx.t_grid.clone(),
        dispersive: pairs(&spec.dispersive),
        smoothing: pairs(&spec.smoothing),
    }
    .with_proof_pairs(spec.p);
    let ms = sweep(&ctx.library, &ctx.semigroups, &grid)?;
    fit_constants(&ms, spec.p)
}

pub fn calibration_outcome(fits: &[Fit]) -> Outcome {
    let mut out = Outcome::default();
    for fit in fits {
        let c = &fit.constants;
        out.notes.push(format!(
            "d={}: C = {:.6e}, delta_d = {:.6e}, worst calibration ratio {:.6e} at {}",
            c.d, c.c, c.delta_d, fit.worst_ratio, fit.worst_tuple
        ));
        if let (Ok(n), Ok(m)) = (c.linear_constant_n(), c.smoothing_constant_m()) {
            out.notes.push(format!("d={}: N = {n:.6e}, M = {m:.6e} at p = {}", c.d, c.p));
        }
        if let Some(w) = c.exponent_warning() {
            out.notes.push(w);
        }
    }
    out
}

fn verify_reports(
    ctx: &SweepContext,
    consts: &EstimateConstants,
    kind: EstimateKind,
    times: &[f64],
    pairs: &[(f64, f64)],
) -> Result<Vec<BoundReport>> {
    let sgs = ctx.semigroups_at(times)?;
    let mut jobs = Vec::new();
    for sg in &sgs {
        for s in &ctx.library {
            for &(p, q) in pairs {
                jobs.push((sg, s, p, q));
            }
        }
    }
    jobs.par_iter()
        .map(|&(sg, s, p, q)| {
            let mut m = measure(kind, &lift(&s.field), sg, p, q)?;
            m.sample_id = s.id.clone();
            m.report(consts)
        })
        .collect()
}

fn estimate_outcome(reports: &[BoundReport], label: &str, min_worst: Option<f64>) -> Outcome {
    let mut out = Outcome::default();
    let n = reports.len().max(1) as f64;
    let pass = reports.iter().filter(|r| r.pass).count() as f64 / n;
    let worst = reports.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let vel_pass = reports.iter().filter(|r| r.velocity_pass()).count() as f64 / n;
    let vel_worst = reports.iter().map(|r| r.velocity_ratio()).fold(0.0, f64::max);
    let temp_worst = reports.iter().map(|r| r.temperature_ratio()).fold(0.0, f64::max);
    out.checks.push(Check::at_least(format!("{label} pass rate on states (f, f)"), pass, 1.0));
    if let Some(m) = min_worst {
        out.checks.push(Check::at_least(format!("{label} worst ratio (non-vacuous fit)"), worst, m));
    }
    out.notes.push(format!(
        "{label}: {} tuples, worst ratio {worst:.6e}; velocity slot pass rate {vel_pass:.4}, worst {vel_worst:.6e}; temperature slot worst {temp_worst:.6e}",
        reports.len()
    ));
    out
}

/// Dispersive estimate over every dimension of `ctxs`, with the matching
/// constants.
pub fn verify_dispersive(
    ctxs: &[(SweepContext, EstimateConstants)],
    spec: &EstimateSpec,
) -> Result<Outcome> {
    let mut all = Vec::new();
    for (ctx, consts) in ctxs {
        let c = require_dimension(consts, ctx.d)?;
        all.extend(verify_reports(ctx, &c, EstimateKind::Dispersive, &spec.t_grid, &pairs(&spec.dispersive))?);
    }
    let mut out = estimate_outcome(&all, "dispersive", Some(spec.min_worst_ratio));
    out.tables.push(("dispersive.csv".into(), reports_to_csv(&all)));
    out.tables.push(("dispersive_slots.csv".into(), slot_reports_to_csv(&all)));
    Ok(out)
}

pub fn verify_smoothing(
    ctxs: &[(SweepContext, EstimateConstants)],
    spec: &EstimateSpec,
) -> Result<Outcome> {
    let mut all = Vec::new();
    for (ctx, consts) in ctxs.iter().filter(|(c, _)| spec.smoothing_dims.contains(&c.d)) {
        let c = require_dimension(consts, ctx.d)?;
        all.extend(verify_reports(
            ctx,
            &c,
            EstimateKind::Smoothing,
            &spec.smoothing_times,
            &pairs(&spec.smoothing),
        )?);
    }
    if all.is_empty() {
        return Err(Error::Config("no dimension of the sweep is listed in smoothing_dims".into()));
    }
    let mut out = estimate_outcome(&all, "smoothing", None);
    out.tables.push(("smoothing.csv".into(), reports_to_csv(&all)));
    out.tables.push(("smoothing_slots.csv".into(), slot_reports_to_csv(&all)));
    Ok(out)
}

// -------------------------------------------------------------- solvers

/// Sup-norm of a trajectory and its node-wise values for the CSV.
fn norm_table(traj: &Trajectory, p: f64, bound: Option<f64>) -> Result<String> {
    let mut csv = String::from("t,norm,bound\n");
    for (t, s) in traj.times().zip(traj.states()) {
        let b = bound.map(fmt17).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{}", fmt17(t), fmt17(s.norm(p)?), b);
    }
    Ok(csv)
}

/// Linear solve of one period: the bound with `C, N, M` at every node and
/// the residual against the independent single-node evaluation.
pub fn solve_linear(setup: &Setup, consts: &EstimateConstants, residual_tol: f64) -> Result<(Outcome, f64)> {
    let c = require_dimension(consts, setup.grid.d())?;
    let pr = &setup.problem;
    let p = pr.p;
    let init = pr.init(&setup.grid)?;
    let forcing = pr.forcing(&setup.grid)?;
    let eta = pr.eta(&setup.grid)?;
    let solver = &setup.solver;
    let traj = solver.solve_linear(&init, &forcing, &eta, pr.steps_per_period, p)?;

    let bound = c.c * init.norm(p)?
        + c.linear_constant_n()? * forcing.gravity_norm(p)? * eta.sup_norm(p)?
        + c.smoothing_constant_m()? * forcing.force_norm(p)?;
    let sup = traj.sup_norm(p)?;
    let residual = linear_residual(solver, &traj, &init, &forcing, &eta, p)?;

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("linear solution sup-norm vs C|x0| + N|h||eta| + M|(F,f)|", sup, bound));
    out.checks.push(Check::at_most("Duhamel residual (relative)", residual, residual_tol));
    out.tables.push(("solve_linear.csv".into(), traj.to_csv()));
    out.tables.push(("solve_linear_norms.csv".into(), norm_table(&traj, p, Some(bound))?));
    Ok((out, sup))
}

/// `max_k ‖x_k - rhs_k‖ / (1 + sup ‖x‖)` with `rhs_k` summed lag by lag.
fn linear_residual(
    solver: &MildSolver,
    traj: &Trajectory,
    init: &StateVector,
    forcing: &ForcingSpec,
    eta: &Modulated,
    p: f64,
) -> Result<f64> {
    let times: Vec<f64> = traj.times().collect();
    let worst = times
        .par_iter()
        .zip(traj.states())
        .map(|(&t, x)| solver.linear_rhs(init, forcing, eta, t)?.distance(x, p))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst / (1.0 + traj.sup_norm(p)?))
}

/// Picard iteration over one period in the small-data regime.
pub fn solve_nonlinear(
    setup: &Setup,
    consts: &EstimateConstants,
    max_ratio: f64,
    max_iterations: usize,
) -> Result<Outcome> {
    let c = require_dimension(consts, setup.grid.d())?;
    let pr = &setup.problem;
    let init = pr.init(&setup.grid)?;
    let forcing = pr.forcing(&setup.grid)?;
    let cfg = pr.solver_config(&c, &forcing)?;
    let (traj, report) =
        setup.solver.picard_solve(&init, &forcing, &cfg, &c, pr.steps_per_period, None)?;
    let residual = fixed_point_residual(&setup.solver, &init, &traj, &forcing, cfg.p)?;

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("largest consecutive-iterate ratio", report.max_ratio(), max_ratio));
    out.checks.push(Check::at_most("Picard iterations", report.iterations as f64, max_iterations as f64));
    out.checks.push(Check::at_most(
        "fixed-point residual / (1 + |x|)",
        residual,
        cfg.picard_tol,
    ));
    out.checks.push(Check::at_most("sup-norm of every iterate vs rho", report.max_iterate_norm, cfg.rho));
    out.notes.push(format!(
        "rho = {:.6e}, configured margin {:.3}, ball condition {:.6e} <= rho, {} iterations",
        cfg.rho, report.margin, report.ball_lhs, report.iterations
    ));
    out.tables.push(("solve_nonlinear.csv".into(), traj.to_csv()));
    out.tables.push(("convergence.csv".into(), report.to_csv()));
    Ok(out)
}

/// `‖x - Φ(x)‖_{∞,p×p} / (1 + ‖x‖)` with `Φ` evaluated node by node.
fn fixed_point_residual(
    solver: &MildSolver,
    init: &StateVector,
    traj: &Trajectory,
    forcing: &ForcingSpec,
    p: f64,
) -> Result<f64> {
    let times: Vec<f64> = traj.times().collect();
    let worst = times
        .par_iter()
        .zip(traj.states())
        .map(|(&t, x)| solver.duhamel_rhs(init, traj, forcing, t)?.distance(x, p))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(worst / (1.0 + traj.sup_norm(p)?))
}

/// Tolerances of the periodic experiment.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicTolerances {
    pub defect: f64,
    pub cesaro_agreement: f64,
    pub multi_period: f64,
    pub cesaro_max_terms: usize,
}

impl Default for PeriodicTolerances {
    fn default() -> Self {
        Self {
            defect: 1e-7,
            cesaro_agreement: 1e-6,
            multi_period: 3e-7,
            cesaro_max_terms: 1 << 24,
        }
    }
}

/// Sup-norms of the periodic orbits, for the refinement study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicNorms {
    pub linear: f64,
    pub nonlinear: f64,
}

/// Linear periodic orbit by direct iteration, cross-checked by the Cesàro
/// limit and a second start, with the bound carrying the `(C + 1)` factor.
pub fn periodic_linear(
    setup: &Setup,
    consts: &EstimateConstants,
    tols: &PeriodicTolerances,
) -> Result<(Outcome, f64)> {
    let c = require_dimension(consts, setup.grid.d())?;
    let pr = &setup.problem;
    let p = pr.p;
    let forcing = pr.forcing(&setup.grid)?;
    let eta = pr.eta(&setup.grid)?;
    let solver = &setup.solver;
    let sol = find_periodic_linear(solver, &forcing, &eta, p, pr.periodic_tol, None)?;
    let other = find_periodic_linear(solver, &forcing, &eta, p, pr.periodic_tol, Some(&pr.other_init(&setup.grid)?))?;
    let map = LinearPoincare::new(solver, &forcing, &eta, p)?;
    let (cesaro, terms) = map.cesaro_limit(p, 0.1 * tols.cesaro_agreement, tols.cesaro_max_terms)?;

    let bound = (c.c + 1.0)
        * (c.linear_constant_n()? * forcing.gravity_norm(p)? * eta.sup_norm(p)?
            + c.smoothing_constant_m()? * forcing.force_norm(p)?);
    let sup = sol.trajectory.sup_norm(p)?;

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("linear periodicity defect", sol.defect, tols.defect));
    out.checks.push(Check::at_most(
        "Cesaro limit vs direct iteration",
        cesaro.distance(sol.state(), p)?,
        tols.cesaro_agreement,
    ));
    out.checks.push(Check::at_most(
        "periodic state from a second start",
        other.state().distance(sol.state(), p)?,
        10.0 * pr.periodic_tol,
    ));
    out.checks.push(Check::at_most("linear periodic sup-norm vs (C+1)(N|h||eta| + M|(F,f)|)", sup, bound));
    out.notes.push(format!(
        "linear: {} Poincare iterations, Cesaro average of {terms} terms",
        sol.iterations
    ));
    out.tables.push(("periodic_linear.csv".into(), sol.trajectory.to_csv()));
    out.tables.push(("periodic_linear_steps.csv".into(), steps_csv(&sol.steps)));
    Ok((out, sup))
}

/// Nonlinear periodic orbit, then a three-period solve from its initial
/// state that must return to it after each period.
pub fn periodic_nonlinear(
    setup: &Setup,
    consts: &EstimateConstants,
    tols: &PeriodicTolerances,
) -> Result<(Outcome, f64)> {
    let c = require_dimension(consts, setup.grid.d())?;
    let pr = &setup.problem;
    let forcing = pr.forcing(&setup.grid)?;
    let cfg = pr.solver_config(&c, &forcing)?;
    let sol = find_periodic_nonlinear(&setup.solver, &forcing, &cfg, &c, pr.periodic_tol)?;
    let x0 = sol.state().clone();
    let (long, _) = setup.solver.picard_solve(&x0, &forcing, &cfg, &c, 3 * pr.steps_per_period, None)?;
    let mut ret = 0.0_f64;
    for k in 1..=3 {
        let idx = long.node_index(k as f64 * pr.period)?;
        ret = ret.max(long.states()[idx].distance(&x0, cfg.p)?);
    }
    let sup = sol.trajectory.sup_norm(cfg.p)?;

    let mut out = Outcome::default();
    out.checks.push(Check::at_most("nonlinear periodicity defect", sol.defect, tols.defect));
    out.checks.push(Check::at_most("return to the periodic state at T, 2T, 3T", ret, tols.multi_period));
    out.checks.push(Check::at_most("nonlinear periodic sup-norm vs rho", sup, cfg.rho));
    out.notes.push(format!(
        "nonlinear: {} Poincare iterations, {} Picard iterations in total, three-period defect {:.3e}",
        sol.iterations,
        sol.inner_iterations,
        check_periodicity(&long, pr.period, cfg.p)?
    ));
    out.tables.push(("periodic_nonlinear.csv".into(), sol.trajectory.to_csv()));
    out.tables.push(("periodic_nonlinear_steps.csv".into(), steps_csv(&sol.steps)));
    Ok((out, sup))
}

fn steps_csv(steps: &[f64]) -> String {
    let mut csv = String::from("iter,step\n");
    for (i, s) in steps.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", i + 1, fmt17(*s));
    }
    csv
}

/// Both periodic experiments; `small` drives the nonlinear one.
pub fn periodic(
    linear: &Setup,
    small: &Setup,
    consts: &EstimateConstants,
    tols: &PeriodicTolerances,
) -> Result<(Outcome, PeriodicNorms)> {
    let (mut out, lin) = periodic_linear(linear, consts, tols)?;
    let (nl, non) = periodic_nonlinear(small, consts, tols)?;
    out.merge(nl);
    Ok((out, PeriodicNorms { linear: lin, nonlinear: non }))
}

/// Identical initial data in the nonlinear regime, and differing initial
/// data in the linear equation.
pub fn uniqueness(
    linear: &Setup,
    small: &Setup,
    consts: &EstimateConstants,
    identical_tol: f64,
    rate_factor: f64,
) -> Result<Outcome> {
    let c = require_dimension(consts, small.grid.d())?;
    let d = linear.grid.d();
    let mut out = Outcome::default();

    let pr = &small.problem;
    let forcing = pr.forcing(&small.grid)?;
    let cfg = pr.solver_config(&c, &forcing)?;
    let steps = pr.periods * pr.steps_per_period;
    let init = pr.init(&small.grid)?;
    let same = uniqueness_experiment(
        &small.solver,
        &init,
        &init,
        &forcing,
        Mode::Nonlinear { cfg: &cfg, consts: &c },
        steps,
    )?;
    out.checks.push(Check::at_most("identical initial data: sup delta(t)", same.max_delta(), identical_tol));

    let pr = &linear.problem;
    let forcing = pr.forcing(&linear.grid)?;
    let eta = pr.eta(&linear.grid)?;
    let steps = pr.periods * pr.steps_per_period;
    let (a, b) = (pr.init(&linear.grid)?, pr.other_init(&linear.grid)?);
    let mode = Mode::Linear { eta: &eta, p: pr.p };
    let diff = uniqueness_experiment(&linear.solver, &a, &b, &forcing, mode, steps)?;
    out.checks.push(Check::at_least(
        "differing initial data: fitted decay rate",
        diff.fitted_rate,
        rate_factor * (d - 1) as f64,
    ));

    // the difference of two linear solutions is the free evolution of the
    // difference of the data
    let delta0 = a.sub(&b)?;
    let mut exact = 0.0_f64;
    for (t, dl) in diff.times.iter().zip(&diff.deltas) {
        let free = linear.solver.evolve(*t, &delta0)?.norm(pr.p)?;
        exact = exact.max((free - dl).abs() / free.max(f64::MIN_POSITIVE));
    }
    out.checks.push(Check::at_most("delta(t) vs |e^{-tA}(x_a - x_b)| (relative)", exact, 1e-9));

    let slots = slot_rates(linear, &delta0, steps)?;
    out.notes.push(format!(
        "decay rates of the free difference: velocity slot {:.4}, temperature slot {:.4}, (d-1) = {}",
        slots.0,
        slots.1,
        d - 1
    ));
    out.tables.push(("uniqueness_identical.csv".into(), same.to_csv()));
    out.tables.push(("uniqueness_decay.csv".into(), diff.to_csv()));
    Ok(out)
}

/// Fitted decay rates of each slot of `e^{-tA} x`.
fn slot_rates(setup: &Setup, x: &StateVector, steps: usize) -> Result<(f64, f64)> {
    let p = setup.problem.p;
    let orbit = setup.solver.semigroup_orbit(x, steps)?;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * setup.solver.dt()).collect();
    let u = orbit.iter().map(|s| s.u().lp_norm(p)).collect::<Result<Vec<_>>>()?;
    let th = orbit.iter().map(|s| s.theta().lp_norm(p)).collect::<Result<Vec<_>>>()?;
    Ok((
        crate::periodic::fit_decay_rate(&times, &u),
        crate::periodic::fit_decay_rate(&times, &th),
    ))
}

/// Relative change of the linear and periodic sup-norms when `Δt` or the
/// radial spacing is halved.
pub fn refinement(
    grid: &GridSpec,
    linear: &ProblemSpec,
    small: &ProblemSpec,
    consts: &EstimateConstants,
    tols: &PeriodicTolerances,
    limit: f64,
) -> Result<Outcome> {
    let t_max = 3.0 * linear.period;
    let base_lin = Setup::new(grid, linear, t_max)?;
    let base_small = Setup::new(grid, small, t_max)?;
    let fine_lin = Setup::new(&grid.refined(), linear, t_max)?;
    let fine_small = Setup::new(&grid.refined(), small, t_max)?;

    let norms = |lin: &Setup, sm: &Setup| -> Result<[f64; 3]> {
        let (_, s4) = solve_linear(lin, consts, f64::INFINITY)?;
        let (_, s6) = periodic(lin, sm, consts, tols)?;
        Ok([s4, s6.linear, s6.nonlinear])
    };
    let base = norms(&base_lin, &base_small)?;
    let half_dt = norms(
        &base_lin.with_steps(2 * linear.steps_per_period)?,
        &base_small.with_steps(2 * small.steps_per_period)?,
    )?;
    let half_dr = norms(&fine_lin, &fine_small)?;

    let mut out = Outcome::default();
    let names = ["linear solve", "linear periodic orbit", "nonlinear periodic orbit"];
    let mut csv = String::from("quantity,base,half_dt,half_dr\n");
    for i in 0..3 {
        let _ = writeln!(csv, "{},{},{},{}", names[i].replace(' ', "_"), fmt17(base[i]), fmt17(half_dt[i]), fmt17(half_dr[i]));
        let rel = |x: f64| (x - base[i]).abs() / base[i];
        out.checks.push(Check::at_most(format!("{}: relative change, dt halved", names[i]), rel(half_dt[i]), limit));
        out.checks.push(Check::at_most(format!("{}: relative change, dr halved", names[i]), rel(half_dr[i]), limit));
    }
    out.tables.push(("refinement.csv".into(), csv));
    Ok(out)
}

/// Setups of the solver experiments on the default three-period domain.
pub fn setups(grid: &GridSpec, linear: &ProblemSpec, small: &ProblemSpec) -> Result<(Setup, Setup)> {
    let t_max = 3.0 * linear.period.max(small.period);
    let a = Setup::new(grid, linear, t_max)?;
    // same grid and propagator for both
    let b = Setup {
        grid: a.grid.clone(),
        solver: MildSolver::per_period(a.solver.propagator().clone(), small.period, small.steps_per_period)?,
        problem: {
            small.validate(grid.d)?;
            small.clone()
        },
    };
    Ok((a, b))
}

/// Norm of a `(p, q)` tuple for printing.
pub fn exponent_label(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_relations() {
        assert!(Check::at_most("a", 1.0, 1.0).pass);
        assert!(!Check::at_most("a", 1.1, 1.0).pass);
        assert!(Check::at_least("b", 2.0, 1.8).pass);
        assert!(!Check::at_least("b", f64::NAN, 1.8).pass);
        assert!(Check::at_most("c", 0.5, 1.0).line().starts_with("PASS c:"));
    }

    #[test]
    fn problem_validation_rejects_p_not_above_d() {
        let pr = ProblemSpec { p: 3.0, ..ProblemSpec::default() };
        let err = pr.validate(3).unwrap_err();
        assert!(err.to_string().contains("for p > d"));
    }

    #[test]
    fn gamma_identity_default_passes() {
        let out = gamma_identity(&GammaSpec::default(), None).unwrap();
        assert!(out.passed(), "{}", out.summary("gamma"));
    }
}
