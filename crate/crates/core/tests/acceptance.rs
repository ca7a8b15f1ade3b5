//! Acceptance suite. Drives the shipped configs, prints one PASS/FAIL line
//! per criterion followed by its individual checks, and exits nonzero if any
//! criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use hyperbolic_boussinesq::cli::Config;
use hyperbolic_boussinesq::estimates::EstimateConstants;
use hyperbolic_boussinesq::experiments::{self, Outcome, Setup, SweepContext};
use hyperbolic_boussinesq::Result;

fn config(name: &str) -> Config {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn report(&mut self, n: usize, title: &str, started: Instant, res: Result<Outcome>) {
        let secs = started.elapsed().as_secs_f64();
        match res {
            Ok(out) => {
                let verdict = if out.passed() { "PASS" } else { "FAIL" };
                if !out.passed() {
                    self.failed += 1;
                }
                println!("{verdict} criterion {n}: {title} ({secs:.1} s)");
                for c in &out.checks {
                    println!("    {}", c.line());
                }
                for note in &out.notes {
                    println!("    note: {note}");
                }
            }
            Err(e) => {
                self.failed += 1;
                println!("FAIL criterion {n}: {title}: error: {e}");
            }
        }
    }
}

fn calibrated(cfg: &Config) -> Result<Vec<(SweepContext, EstimateConstants)>> {
    let spec = &cfg.estimates;
    spec.dims
        .iter()
        .map(|&d| {
            let ctx = SweepContext::new(d, spec, None)?;
            let fit = experiments::calibrate(&ctx, spec)?;
            Ok((ctx, fit.constants))
        })
        .collect()
}

fn constants_for(ctxs: &[(SweepContext, EstimateConstants)], d: usize, p: f64) -> Result<EstimateConstants> {
    ctxs.iter().find(|(c, _)| c.d == d).expect("dimension calibrated").1.with_p(p)
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: 0 };

    let t = Instant::now();
    let cfg = config("kernel_check.toml");
    suite.report(1, "kernel fidelity", t, experiments::kernel_check(&cfg.kernel));

    let t = Instant::now();
    let est = config("verify_dispersive.toml");
    let ctxs = match calibrated(&est) {
        Ok(c) => c,
        Err(e) => {
            println!("FAIL calibration: {e}");
            return ExitCode::FAILURE;
        }
    };
    for (ctx, c) in &ctxs {
        println!(
            "calibrated d={}: C = {:.6e}, delta_d = {:.6e} ({:.1} s)",
            ctx.d,
            c.c,
            c.delta_d,
            t.elapsed().as_secs_f64()
        );
    }

    let t = Instant::now();
    suite.report(2, "dispersive estimate", t, experiments::verify_dispersive(&ctxs, &est.estimates));

    let t = Instant::now();
    let sm = config("verify_smoothing.toml");
    suite.report(3, "smoothing estimate", t, experiments::verify_smoothing(&ctxs, &sm.estimates));

    let t = Instant::now();
    let cfg = config("solve_linear.toml");
    let res = constants_for(&ctxs, cfg.grid.d, cfg.problem.p).and_then(|c| {
        let setup = Setup::new(&cfg.grid, &cfg.problem, cfg.problem.period)?;
        Ok(experiments::solve_linear(&setup, &c, cfg.assert.residual_tol)?.0)
    });
    suite.report(4, "linear bound and Duhamel residual", t, res);

    let t = Instant::now();
    let cfg = config("solve_nonlinear.toml");
    let res = constants_for(&ctxs, cfg.grid.d, cfg.problem.p).and_then(|c| {
        let small = cfg.small_problem();
        let setup = Setup::new(&cfg.grid, &small, small.period)?;
        experiments::solve_nonlinear(&setup, &c, cfg.assert.max_ratio, cfg.assert.max_iterations)
    });
    suite.report(5, "Picard contraction", t, res);

    let t = Instant::now();
    let lin = config("periodic_linear.toml");
    let non = config("periodic_nonlinear.toml");
    let res = constants_for(&ctxs, lin.grid.d, lin.problem.p).and_then(|c| {
        let (a, _) = experiments::setups(&lin.grid, &lin.problem, &lin.small_problem())?;
        let (_, b) = experiments::setups(&non.grid, &non.problem, &non.small_problem())?;
        let (mut out, _) = experiments::periodic_linear(&a, &c, &lin.periodic)?;
        out.merge(experiments::periodic_nonlinear(&b, &c, &non.periodic)?.0);
        Ok(out)
    });
    suite.report(6, "periodic solutions", t, res);

    let t = Instant::now();
    let cfg = config("uniqueness.toml");
    let res = constants_for(&ctxs, cfg.grid.d, cfg.problem.p).and_then(|c| {
        let (a, b) = experiments::setups(&cfg.grid, &cfg.problem, &cfg.small_problem())?;
        experiments::uniqueness(&a, &b, &c, cfg.assert.identical_tol, cfg.assert.rate_factor)
    });
    suite.report(7, "uniqueness and decay", t, res);

    let t = Instant::now();
    let cfg = config("gamma_identity.toml");
    let res = constants_for(&ctxs, 3, 4.0).and_then(|c| experiments::gamma_identity(&cfg.gamma, Some(&c)));
    suite.report(8, "Gamma-integral identity behind N and M", t, res);

    let t = Instant::now();
    let cfg = config("refinement.toml");
    let res = constants_for(&ctxs, cfg.grid.d, cfg.problem.p).and_then(|c| {
        experiments::refinement(
            &cfg.grid,
            &cfg.problem,
            &cfg.small_problem(),
            &c,
            &cfg.periodic,
            cfg.assert.refinement_tol,
        )
    });
    suite.report(9, "refinement stability", t, res);

    println!("{} of 9 criteria failed", suite.failed);
    if suite.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
