//! Configuration-driven experiment runner.
//!
//! A run reads one TOML file naming an experiment, executes it, writes its
//! CSV tables and a `summary.txt` into the output directory and maps the
//! result onto a process exit code.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimates::EstimateConstants;
use crate::experiments::{
    self, calibration_outcome, EstimateSpec, GammaSpec, GridSpec, KernelSpec, Outcome,
    PeriodicTolerances, ProblemSpec, Setup, SweepContext,
};
use crate::mild_solver::fmt17;

/// Exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCode {
    Ok = 0,
    AssertionFailed = 1,
    Config = 2,
    UnknownExperiment = 3,
    InvalidRange = 4,
    Precondition = 5,
    Constants = 6,
    Io = 7,
    NotConverged = 8,
}

impl ExitCode {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Exit code of a failed run.
pub fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::InvalidDimension(_)
        | Error::InvalidExponent(_)
        | Error::ExponentOrder { .. }
        | Error::InvalidTime { .. }
        | Error::GridTooCoarse { .. }
        | Error::InvalidGrid(_)
        | Error::OffGrid { .. }
        | Error::HorizonTooShort { .. } => ExitCode::InvalidRange,
        Error::Precondition(_) | Error::ContractionMargin { .. } | Error::BallCondition { .. } => {
            ExitCode::Precondition
        }
        Error::NotConverged { .. } | Error::InfeasibleFit(_) => ExitCode::NotConverged,
        Error::Constants(_) => ExitCode::Constants,
        Error::Io(_) => ExitCode::Io,
        Error::Config(_) | Error::GridMismatch | Error::NonFinite { .. } => ExitCode::Config,
    }
}

pub const EXPERIMENTS: &[&str] = &[
    "kernel-check",
    "calibrate",
    "verify-dispersive",
    "verify-smoothing",
    "gamma-identity",
    "solve-linear",
    "solve-nonlinear",
    "periodic-linear",
    "periodic-nonlinear",
    "uniqueness",
    "refinement",
];

/// Amplitudes of the small-data problem; everything else comes from
/// `[problem]`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallData {
    pub init_amplitude: Option<f64>,
    pub force_amplitude: Option<f64>,
    pub flux_amplitude: Option<f64>,
    pub gravity_amplitude: Option<f64>,
}

impl SmallData {
    pub fn apply(&self, base: &ProblemSpec) -> ProblemSpec {
        let s = ProblemSpec::small();
        ProblemSpec {
            init_amplitude: self.init_amplitude.unwrap_or(s.init_amplitude),
            force_amplitude: self.force_amplitude.unwrap_or(s.force_amplitude),
            flux_amplitude: self.flux_amplitude.unwrap_or(s.flux_amplitude),
            gravity_amplitude: self.gravity_amplitude.unwrap_or(s.gravity_amplitude),
            ..base.clone()
        }
    }
}

/// Assertion thresholds of the solver experiments.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Assertions {
    pub residual_tol: f64,
    pub max_ratio: f64,
    pub max_iterations: usize,
    pub identical_tol: f64,
    pub rate_factor: f64,
    pub refinement_tol: f64,
}

impl Default for Assertions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-6,
            max_ratio: 0.55,
            max_iterations: 40,
            identical_tol: 1e-7,
            rate_factor: 0.9,
            refinement_tol: 5e-3,
        }
    }
}

/// A parsed experiment configuration.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: String,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub estimates: EstimateSpec,
    #[serde(default)]
    pub gamma: GammaSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub small: SmallData,
    #[serde(default)]
    pub periodic: PeriodicTolerances,
    #[serde(default)]
    pub assert: Assertions,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn small_problem(&self) -> ProblemSpec {
        self.small.apply(&self.problem)
    }
}

/// Options of one run besides the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub constants: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub experiment: String,
    pub outcome: Outcome,
    pub summary: String,
}

impl RunReport {
    pub fn exit_code(&self) -> ExitCode {
        if self.outcome.passed() {
            ExitCode::Ok
        } else {
            ExitCode::AssertionFailed
        }
    }
}

// ------------------------------------------------------------ constants

const CONSTANT_KEYS: [&str; 4] = ["d", "C", "delta_d", "p"];

/// Writes `consts` as `key = value` lines; derived quantities follow for
/// the reader and are checked on load.
pub fn emit_constants(consts: &EstimateConstants, path: &Path) -> Result<()> {
    fs::write(path, constants_text(consts)?)?;
    Ok(())
}

pub fn constants_text(c: &EstimateConstants) -> Result<String> {
    let mut s = String::from("# estimate constants\n");
    let _ = writeln!(s, "d = {}", c.d);
    let _ = writeln!(s, "C = {}", fmt17(c.c));
    let _ = writeln!(s, "delta_d = {}", fmt17(c.delta_d));
    let _ = writeln!(s, "p = {}", fmt17(c.p));
    s.push_str("# derived\n");
    let _ = writeln!(s, "theta_exp = {}", fmt17(c.theta_exp()));
    let _ = writeln!(s, "theta_tilde = {}", fmt17(c.theta_tilde()));
    if c.theta_exp() < 1.0 {
        let _ = writeln!(s, "beta = {}", fmt17(c.beta()?));
        let _ = writeln!(s, "beta_tilde = {}", fmt17(c.beta_tilde()?));
        let _ = writeln!(s, "N = {}", fmt17(c.linear_constant_n()?));
        let _ = writeln!(s, "M = {}", fmt17(c.smoothing_constant_m()?));
    }
    Ok(s)
}

pub fn load_constants(path: &Path) -> Result<EstimateConstants> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Constants(format!("cannot read {}: {e}", path.display())))?;
    parse_constants(&text)
}

pub fn parse_constants(text: &str) -> Result<EstimateConstants> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Constants(format!("line {}: expected key = value", i + 1)));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Constants(format!("line {}: {:?} is not a number", i + 1, v.trim())))?;
        map.insert(k.trim().to_string(), v);
    }
    for key in CONSTANT_KEYS {
        if !map.contains_key(key) {
            return Err(Error::Constants(format!("missing key {key}")));
        }
    }
    let d = map["d"];
    if d.fract() != 0.0 || d < 2.0 {
        return Err(Error::Constants(format!("d must be an integer >= 2, got {d}")));
    }
    let d = d as usize;
    let p = map["p"];
    let theta = map.get("theta_exp").copied().unwrap_or(d as f64 / p);
    if !(theta < 1.0) || !(d as f64 / p < 1.0) {
        return Err(Error::Constants(format!(
            "theta_exp = d/p = {theta} violates theta_exp < 1"
        )));
    }
    EstimateConstants::new(d, map["C"], map["delta_d"], p)
        .map_err(|e| Error::Constants(e.to_string()))
}

// ---------------------------------------------------------------- runs

/// Supplies constants per dimension: loaded files first, calibration
/// otherwise.
struct ConstantsSource<'a> {
    loaded: Vec<EstimateConstants>,
    spec: &'a EstimateSpec,
    seed: Option<u64>,
    notes: Vec<String>,
}

impl<'a> ConstantsSource<'a> {
    fn new(paths: &[PathBuf], spec: &'a EstimateSpec, seed: Option<u64>) -> Result<Self> {
        let loaded = paths.iter().map(|p| load_constants(p)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            loaded,
            spec,
            seed,
            notes: Vec::new(),
        })
    }

    fn at(&mut self, d: usize, p: f64, ctx: Option<&SweepContext>) -> Result<EstimateConstants> {
        if let Some(c) = self.loaded.iter().find(|c| c.d == d) {
            return c.with_p(p);
        }
        let fit = match ctx {
            Some(ctx) => experiments::calibrate(ctx, self.spec)?,
            None => {
                let ctx = SweepContext::new(d, self.spec, self.seed)?;
                experiments::calibrate(&ctx, self.spec)?
            }
        };
        let c = fit.constants.with_p(p)?;
        self.notes.push(format!(
            "no constants file for d={d}; calibrated in process: C = {:.6e}, delta_d = {:.6e}",
            c.c, c.delta_d
        ));
        Ok(c)
    }
}

fn run_estimates(cfg: &Config, opts: &RunOptions, smoothing: bool) -> Result<Outcome> {
    let spec = &cfg.estimates;
    let mut source = ConstantsSource::new(&opts.constants, spec, opts.seed)?;
    let dims: Vec<usize> = if smoothing {
        spec.smoothing_dims.clone()
    } else {
        spec.dims.clone()
    };
    let mut ctxs = Vec::new();
    for d in dims {
        let ctx = SweepContext::new(d, spec, opts.seed)?;
        let c = source.at(d, spec.p, Some(&ctx))?;
        ctxs.push((ctx, c));
    }
    let mut out = if smoothing {
        experiments::verify_smoothing(&ctxs, spec)?
    } else {
        experiments::verify_dispersive(&ctxs, spec)?
    };
    out.notes.extend(source.notes);
    Ok(out)
}

fn run_calibrate(cfg: &Config, opts: &RunOptions) -> Result<Outcome> {
    let spec = &cfg.estimates;
    let mut fits = Vec::new();
    for &d in &spec.dims {
        let ctx = SweepContext::new(d, spec, opts.seed)?;
        fits.push(experiments::calibrate(&ctx, spec)?);
    }
    let mut out = calibration_outcome(&fits);
    for fit in &fits {
        out.tables.push((
            format!("constants_d{}.txt", fit.constants.d),
            constants_text(&fit.constants)?,
        ));
    }
    Ok(out)
}

fn solver_constants(cfg: &Config, opts: &RunOptions) -> Result<(EstimateConstants, Vec<String>)> {
    let mut source = ConstantsSource::new(&opts.constants, &cfg.estimates, opts.seed)?;
    let c = source.at(cfg.grid.d, cfg.problem.p, None)?;
    Ok((c, source.notes))
}

/// Runs the configured experiment and returns its outcome without touching
/// the file system.
pub fn execute(cfg: &Config, opts: &RunOptions) -> Result<Outcome> {
    let name = cfg.experiment.as_str();
    if !EXPERIMENTS.contains(&name) {
        return Err(Error::Config(format!("unknown experiment {name:?}")));
    }
    // exponent preconditions come before any expensive work
    if name.starts_with("solve") || name.starts_with("periodic") || name == "uniqueness" || name == "refinement" {
        cfg.problem.validate(cfg.grid.d)?;
    }
    match name {
        "kernel-check" => experiments::kernel_check(&cfg.kernel),
        "calibrate" => run_calibrate(cfg, opts),
        "verify-dispersive" => run_estimates(cfg, opts, false),
        "verify-smoothing" => run_estimates(cfg, opts, true),
        "gamma-identity" => {
            let consts = match opts.constants.first() {
                Some(p) => Some(load_constants(p)?),
                None => None,
            };
            experiments::gamma_identity(&cfg.gamma, consts.as_ref())
        }
        _ => {
            let (consts, notes) = solver_constants(cfg, opts)?;
            let small = cfg.small_problem();
            let a = &cfg.assert;
            let mut out = match name {
                "solve-linear" => {
                    let setup = Setup::new(&cfg.grid, &cfg.problem, cfg.problem.period)?;
                    experiments::solve_linear(&setup, &consts, a.residual_tol)?.0
                }
                "solve-nonlinear" => {
                    let setup = Setup::new(&cfg.grid, &small, small.period)?;
                    experiments::solve_nonlinear(&setup, &consts, a.max_ratio, a.max_iterations)?
                }
                "periodic-linear" => {
                    let (lin, _) = experiments::setups(&cfg.grid, &cfg.problem, &small)?;
                    experiments::periodic_linear(&lin, &consts, &cfg.periodic)?.0
                }
                "periodic-nonlinear" => {
                    let (_, sm) = experiments::setups(&cfg.grid, &cfg.problem, &small)?;
                    experiments::periodic_nonlinear(&sm, &consts, &cfg.periodic)?.0
                }
                "uniqueness" => {
                    let (lin, sm) = experiments::setups(&cfg.grid, &cfg.problem, &small)?;
                    experiments::uniqueness(&lin, &sm, &consts, a.identical_tol, a.rate_factor)?
                }
                "refinement" => experiments::refinement(
                    &cfg.grid,
                    &cfg.problem,
                    &small,
                    &consts,
                    &cfg.periodic,
                    a.refinement_tol,
                )?,
                _ => unreachable!("checked against EXPERIMENTS"),
            };
            out.notes.extend(notes);
            Ok(out)
        }
    }
}

/// Writes every table of `outcome` and the summary into `dir`.
pub fn write_outputs(dir: &Path, outcome: &Outcome, summary: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in &outcome.tables {
        fs::write(dir.join(name), body)?;
    }
    fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}

/// Loads, executes and writes one experiment.
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunReport> {
    let cfg = Config::load(config_path)?;
    let outcome = execute(&cfg, opts)?;
    let summary = outcome.summary(&cfg.experiment);
    write_outputs(&opts.out, &outcome, &summary)?;
    Ok(RunReport {
        experiment: cfg.experiment.clone(),
        outcome,
        summary,
    })
}

/// Maps a run result onto an exit code, printing the summary or the error.
pub fn finish(result: Result<RunReport>, quiet: bool) -> ExitCode {
    match result {
        Ok(report) => {
            if !quiet {
                print!("{}", report.summary);
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            match &e {
                Error::Config(msg) if msg.starts_with("unknown experiment") => {
                    eprintln!("known experiments: {}", EXPERIMENTS.join(", "));
                    ExitCode::UnknownExperiment
                }
                _ => exit_code(&e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_round_trip_is_bitwise() {
        let c = EstimateConstants::new(3, 1.4172076867759797, 0.9941398470925303, 4.0).unwrap();
        let back = parse_constants(&constants_text(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.c.to_bits(), c.c.to_bits());
        assert_eq!(back.delta_d.to_bits(), c.delta_d.to_bits());
    }

    #[test]
    fn missing_key_is_named() {
        let err = parse_constants("d = 3\nC = 1.5\np = 4\n").unwrap_err();
        assert!(err.to_string().contains("delta_d"), "{err}");
        assert_eq!(exit_code(&err), ExitCode::Constants);
    }

    #[test]
    fn theta_exp_at_least_one_is_rejected() {
        let err = parse_constants("d = 3\nC = 1.5\ndelta_d = 0.5\np = 3\n").unwrap_err();
        assert!(err.to_string().contains("theta_exp"), "{err}");
        let err = parse_constants("d = 3\nC = 1.5\ndelta_d = 0.5\np = 4\ntheta_exp = 1.2\n").unwrap_err();
        assert!(err.to_string().contains("theta_exp < 1"), "{err}");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse_constants("d 3").is_err());
        assert!(parse_constants("d = three").is_err());
    }

    #[test]
    fn config_defaults_and_unknown_fields() {
        let cfg = Config::parse("experiment = \"solve-linear\"\n[problem]\np = 5.0\n").unwrap();
        assert_eq!(cfg.problem.p, 5.0);
        assert_eq!(cfg.grid, GridSpec::default());
        assert!(Config::parse("experiment = \"x\"\nbogus = 1\n").is_err());
        let small = cfg.small_problem();
        assert_eq!(small.p, 5.0);
        assert_eq!(small.gravity_amplitude, ProblemSpec::small().gravity_amplitude);
    }

    #[test]
    fn unknown_experiment_maps_to_its_code() {
        let cfg = Config::parse("experiment = \"warp-drive\"").unwrap();
        let err = execute(&cfg, &RunOptions::default()).unwrap_err();
        assert_eq!(finish(Err(err), true), ExitCode::UnknownExperiment);
    }

    #[test]
    fn p_not_above_d_is_a_precondition_failure() {
        let cfg = Config::parse("experiment = \"solve-linear\"\n[problem]\np = 3.0\n").unwrap();
        let err = execute(&cfg, &RunOptions::default()).unwrap_err();
        assert!(err.to_string().contains("for p > d"), "{err}");
        assert_eq!(exit_code(&err), ExitCode::Precondition);
    }
}
