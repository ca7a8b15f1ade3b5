//! Constants of the linear and bilinear bounds, and numerical verification
//! of the dispersive and smoothing estimates of the matrix semigroup.

mod constants;
mod library;

use std::fmt::Write as _;

use rayon::prelude::*;

pub use constants::{
    gamma_factor, gamma_integral, gamma_integral_numeric, gamma_pq, h_d, linear_constant_N,
    require_p_above_d, smoothing_constant_M, EstimateConstants,
};
pub use library::{sample_library, Sample};

use constants::inv;

use crate::error::{Error, Result};
use crate::geometry::{radial_divergence, RadialField};
use crate::heat_kernel::MatrixSemigroup;
use crate::mild_solver::{fmt17, StateVector};

/// Relative slack of the pass test.
pub const PASS_SLACK: f64 = 1e-9;

/// Safety factor of the calibration: the binding tuple ends at ratio 0.9.
pub const FIT_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    /// `‖e^{-tA} x‖_q ≤ h^{1/p-1/q} e^{-t(d-1+γ_{p,q})} ‖x‖_p`.
    Dispersive,
    /// `‖e^{-tA} div x‖_q ≤ h^{1/p-1/q+1/d} e^{-t(d-1+(γ_{q,q}+γ_{p,q})/2)} ‖x‖_p`.
    Smoothing,
}

impl EstimateKind {
    fn check(self, p: f64, q: f64) -> Result<()> {
        gamma_factor(p, q)?;
        if self == EstimateKind::Smoothing && (p <= 1.0 || q.is_infinite()) {
            return Err(Error::Precondition(format!(
                "smoothing estimate needs 1 < p <= q < infinity, got p = {p}, q = {q}"
            )));
        }
        Ok(())
    }

    /// Exponent of `h_d(t)` on the right side.
    fn h_power(self, d: usize, p: f64, q: f64) -> f64 {
        match self {
            EstimateKind::Dispersive => inv(p) - inv(q),
            EstimateKind::Smoothing => inv(p) - inv(q) + 1.0 / d as f64,
        }
    }

    /// Extra rate beyond `d - 1`, per unit `δ_d`.
    fn rate_factor(self, p: f64, q: f64) -> Result<f64> {
        match self {
            EstimateKind::Dispersive => gamma_factor(p, q),
            EstimateKind::Smoothing => Ok(0.5 * (gamma_factor(q, q)? + gamma_factor(p, q)?)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimateKind::Dispersive => "dispersive",
            EstimateKind::Smoothing => "smoothing",
        }
    }
}

/// Right side of an estimate for unit input norm.
pub fn bound_factor(
    kind: EstimateKind,
    consts: &EstimateConstants,
    t: f64,
    p: f64,
    q: f64,
) -> Result<f64> {
    kind.check(p, q)?;
    let d = consts.d;
    let h = consts.h_d(t)?;
    let rate = (d - 1) as f64 + consts.delta_d * kind.rate_factor(p, q)?;
    Ok(h.powf(kind.h_power(d, p, q)) * (-t * rate).exp())
}

/// One evaluated inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: EstimateKind,
    pub d: usize,
    pub t: f64,
    pub p: f64,
    pub q: f64,
    pub sample_id: String,
    /// Product norm `max` of the two slots.
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
    pub lhs_velocity: f64,
    pub lhs_temperature: f64,
}

impl BoundReport {
    /// The inequality restricted to the velocity slot.
    pub fn velocity_ratio(&self) -> f64 {
        ratio_of(self.lhs_velocity, self.rhs)
    }
    pub fn velocity_pass(&self) -> bool {
        self.lhs_velocity <= self.rhs * (1.0 + PASS_SLACK)
    }
    pub fn temperature_ratio(&self) -> f64 {
        ratio_of(self.lhs_temperature, self.rhs)
    }
}

fn ratio_of(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

fn fmt_exp(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

/// CSV with columns `d,t,p,q,sample_id,lhs,rhs,ratio,pass`.
pub fn reports_to_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from("d,t,p,q,sample_id,lhs,rhs,ratio,pass\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.d,
            fmt17(r.t),
            fmt_exp(r.p),
            fmt_exp(r.q),
            r.sample_id,
            fmt17(r.lhs),
            fmt17(r.rhs),
            fmt17(r.ratio),
            r.pass
        );
    }
    out
}

/// Per-slot CSV with columns `d,t,p,q,sample_id,velocity_ratio,temperature_ratio`.
pub fn slot_reports_to_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from("d,t,p,q,sample_id,velocity_ratio,temperature_ratio\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.d,
            fmt17(r.t),
            fmt_exp(r.p),
            fmt_exp(r.q),
            r.sample_id,
            fmt17(r.velocity_ratio()),
            fmt17(r.temperature_ratio())
        );
    }
    out
}

/// The state `(f, f)` carrying one field in both slots.
pub fn lift(f: &RadialField) -> StateVector {
    StateVector::new(f.clone(), f.clone()).expect("same grid")
}

/// Semigroup image norms of one input, before any constants enter.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub kind: EstimateKind,
    pub d: usize,
    pub sample_id: String,
    pub t: f64,
    pub p: f64,
    pub q: f64,
    pub lhs_velocity: f64,
    pub lhs_temperature: f64,
    pub input_norm: f64,
}

impl Measurement {
    pub fn report(&self, consts: &EstimateConstants) -> Result<BoundReport> {
        let rhs = self.input_norm * bound_factor(self.kind, consts, self.t, self.p, self.q)?;
        let lhs = self.lhs_velocity.max(self.lhs_temperature);
        Ok(BoundReport {
            kind: self.kind,
            d: self.d,
            t: self.t,
            p: self.p,
            q: self.q,
            sample_id: self.sample_id.clone(),
            lhs,
            rhs,
            ratio: ratio_of(lhs, rhs),
            pass: lhs <= rhs * (1.0 + PASS_SLACK),
            lhs_velocity: self.lhs_velocity,
            lhs_temperature: self.lhs_temperature,
        })
    }

    /// Velocity-slot ratio for `C = 1, δ_d = 0`, divided out of the
    /// constants: `ratio(C, δ) = base · C^{-a} e^{tδg}`.
    fn base_ratio(&self) -> f64 {
        let d = self.d;
        let a = self.kind.h_power(d, self.p, self.q);
        let shape = self.t.powf(-0.5 * d as f64).max(1.0).powf(a);
        let damping = (-((d - 1) as f64) * self.t).exp();
        ratio_of(self.lhs_velocity, self.input_norm * shape * damping)
    }
}

/// Measures one state against the estimate of the given kind.
pub fn measure(
    kind: EstimateKind,
    state: &StateVector,
    sg: &MatrixSemigroup,
    p: f64,
    q: f64,
) -> Result<Measurement> {
    kind.check(p, q)?;
    if sg.t() <= 0.0 {
        return Err(Error::InvalidTime { t: sg.t(), expect: "> 0" });
    }
    let image = match kind {
        EstimateKind::Dispersive => sg.apply(state)?,
        EstimateKind::Smoothing => {
            let div = StateVector::new(radial_divergence(state.u())?, radial_divergence(state.theta())?)?;
            sg.apply(&div)?
        }
    };
    Ok(Measurement {
        kind,
        d: state.grid().d(),
        sample_id: String::new(),
        t: sg.t(),
        p,
        q,
        lhs_velocity: image.u().lp_norm(q)?,
        lhs_temperature: image.theta().lp_norm(q)?,
        input_norm: state.norm(p)?,
    })
}

/// Dispersive estimate for `state` at the semigroup's time.
pub fn verify_dispersive(
    state: &StateVector,
    sg: &MatrixSemigroup,
    p: f64,
    q: f64,
    consts: &EstimateConstants,
) -> Result<BoundReport> {
    measure(EstimateKind::Dispersive, state, sg, p, q)?.report(consts)
}

/// Smoothing estimate for the pair `state = (F, f)` at the semigroup's time.
pub fn verify_smoothing(
    state: &StateVector,
    sg: &MatrixSemigroup,
    p: f64,
    q: f64,
    consts: &EstimateConstants,
) -> Result<BoundReport> {
    measure(EstimateKind::Smoothing, state, sg, p, q)?.report(consts)
}

/// Times and exponent pairs of a calibration or verification sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub t_grid: Vec<f64>,
    pub dispersive: Vec<(f64, f64)>,
    pub smoothing: Vec<(f64, f64)>,
}

impl SweepGrid {
    /// The exponent pairs the bounds for `N` and `M` consume at exponent `p`.
    pub fn proof_pairs(p: f64) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        (vec![(p / 3.0, p)], vec![(p, p), (p / 2.0, p)])
    }

    /// Adds the pairs consumed by the bounds at exponent `p`.
    pub fn with_proof_pairs(mut self, p: f64) -> Self {
        let (disp, smooth) = Self::proof_pairs(p);
        for pair in disp {
            if !self.dispersive.contains(&pair) {
                self.dispersive.push(pair);
            }
        }
        for pair in smooth {
            if !self.smoothing.contains(&pair) {
                self.smoothing.push(pair);
            }
        }
        self
    }
}

/// Builds one semigroup per time, in parallel.
pub fn semigroups_for(
    grid: &std::sync::Arc<crate::geometry::RadialGrid>,
    t_grid: &[f64],
) -> Result<Vec<MatrixSemigroup>> {
    t_grid
        .par_iter()
        .map(|&t| MatrixSemigroup::new(grid.clone(), t))
        .collect()
}

/// Every (sample, t, pair) measurement of a sweep on lifted states `(f, f)`.
pub fn sweep(
    library: &[Sample],
    semigroups: &[MatrixSemigroup],
    pairs: &SweepGrid,
) -> Result<Vec<Measurement>> {
    let mut jobs = Vec::new();
    for sg in semigroups {
        for s in library {
            for &(p, q) in &pairs.dispersive {
                jobs.push((EstimateKind::Dispersive, sg, s, p, q));
            }
            for &(p, q) in &pairs.smoothing {
                jobs.push((EstimateKind::Smoothing, sg, s, p, q));
            }
        }
    }
    jobs.par_iter()
        .map(|&(kind, sg, s, p, q)| {
            let mut m = measure(kind, &lift(&s.field), sg, p, q)?;
            m.sample_id = s.id.clone();
            Ok(m)
        })
        .collect()
}

/// Result of [`fit_constants`].
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub constants: EstimateConstants,
    /// Largest velocity-slot ratio over the calibration set.
    pub worst_ratio: f64,
    pub worst_tuple: String,
}

fn describe(m: &Measurement) -> String {
    format!(
        "{} d={} t={} p={} q={} sample={}",
        m.kind.name(),
        m.d,
        m.t,
        fmt_exp(m.p),
        fmt_exp(m.q),
        m.sample_id
    )
}

/// Calibrates `(C, δ_d)` on the velocity slot of the measured estimates.
///
/// `δ_d` is 0.9 times the largest rate for which every `p = q` dispersive
/// tuple holds; there the prefactor exponent vanishes, so `C` cannot help.
/// `C` is then the smallest prefactor for which every other tuple holds
/// with ratio at most 0.9. Tuples whose rate does not depend on `δ_d` and
/// carry no prefactor must hold on their own. `p` is stored in the result.
pub fn fit_constants(measurements: &[Measurement], p: f64) -> Result<Fit> {
    let Some(first) = measurements.first() else {
        return Err(Error::InfeasibleFit("no measurements".into()));
    };
    let d = first.d;
    let mut delta_max = f64::INFINITY;
    let mut binding = None;
    for m in measurements {
        if m.d != d {
            return Err(Error::InfeasibleFit("measurements mix dimensions".into()));
        }
        let a = m.kind.h_power(d, m.p, m.q);
        let g = m.kind.rate_factor(m.p, m.q)?;
        let base = m.base_ratio();
        if a == 0.0 && g == 0.0 {
            if base > 1.0 + PASS_SLACK {
                return Err(Error::InfeasibleFit(format!(
                    "{} has ratio {base:.6e} > 1 independently of C and delta_d",
                    describe(m)
                )));
            }
        } else if a == 0.0 && base > 0.0 {
            let cap = -base.ln() / (m.t * g);
            if cap < delta_max {
                delta_max = cap;
                binding = Some(m);
            }
        }
    }
    if !delta_max.is_finite() {
        return Err(Error::InfeasibleFit(
            "no p = q tuple with a positive rate constrains delta_d".into(),
        ));
    }
    if delta_max <= 0.0 {
        let m = binding.expect("set with delta_max");
        return Err(Error::InfeasibleFit(format!(
            "{} exceeds the bound for every positive delta_d",
            describe(m)
        )));
    }
    let delta = FIT_SAFETY * delta_max;

    let mut c: f64 = 0.0;
    for m in measurements {
        let a = m.kind.h_power(d, m.p, m.q);
        if a > 0.0 {
            let g = m.kind.rate_factor(m.p, m.q)?;
            let need = (m.base_ratio() * (m.t * delta * g).exp() / FIT_SAFETY).powf(1.0 / a);
            c = c.max(need);
        }
    }
    if c == 0.0 {
        c = 1.0;
    }
    let constants = EstimateConstants::new(d, c, delta, p)?;
    let mut worst = (0.0, String::new());
    for m in measurements {
        let r = m.report(&constants)?.velocity_ratio();
        if r > worst.0 {
            worst = (r, describe(m));
        }
    }
    Ok(Fit {
        constants,
        worst_ratio: worst.0,
        worst_tuple: worst.1,
    })
}
