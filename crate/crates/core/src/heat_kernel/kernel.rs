//! Closed-form and tabulated heat kernels of `H^d`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{acosh1p, unit_sphere_area, GaussLegendre};

/// Below this time the kernel is replaced by its Euclidean leading term.
pub const SMALL_TIME: f64 = 1e-3;

/// Default number of intervals of a kernel table.
pub const DEFAULT_TABLE_INTERVALS: usize = 8192;

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTime { t, expect: "> 0" })
    }
}

/// `r / sinh r` with its removable singularity at 0.
fn r_over_sinh(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 - r * r / 6.0
    } else {
        r / r.sinh()
    }
}

/// Heat kernel of `H³`: `(4πt)^{-3/2} e^{-t} (r / sinh r) e^{-r²/4t}`.
pub fn kernel_h3(t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    let r = r.abs();
    Ok((4.0 * PI * t).powf(-1.5) * (-t - r * r / (4.0 * t)).exp() * r_over_sinh(r))
}

/// Heat kernel of `H²` by the classical integral formula
/// `(√2 e^{-t/4} / (4πt)^{3/2}) ∫_r^∞ s e^{-s²/4t} / √(cosh s - cosh r) ds`.
pub fn kernel_h2(t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    let r = r.abs();
    let prefactor = 2f64.sqrt() * (-0.25 * t).exp() / (4.0 * PI * t).powf(1.5);
    Ok(prefactor * abel_h2(t, r))
}

/// `∫_r^∞ s e^{-s²/4t} / √(cosh s - cosh r) ds`.
///
/// Near the endpoint the substitution `w² = cosh s - cosh r` removes the
/// inverse square root; the remainder is smooth and integrated in `s`.
fn abel_h2(t: f64, r: f64) -> f64 {
    thread_local! {
        static RULE: GaussLegendre = GaussLegendre::new(16);
    }
    let phi = |s: f64| s * (-s * s / (4.0 * t)).exp();
    let s_end = (r * r + 160.0 * t).sqrt() + 1.0;
    let split = 0.5_f64.min(s_end - r);
    let half_r = (0.5 * r).sinh();
    let cosh_r_m1 = 2.0 * half_r * half_r;

    RULE.with(|rule| {
        // cosh(r + a) - cosh(r) = 2 sinh(r + a/2) sinh(a/2)
        let w_max = (2.0 * (r + 0.5 * split).sinh() * (0.5 * split).sinh()).sqrt();
        let mut near = 0.0;
        let panels = 4;
        let hw = w_max / panels as f64;
        for k in 0..panels {
            let lo = hw * k as f64;
            near += rule.integrate(lo, lo + hw, |w| {
                let s = acosh1p(cosh_r_m1 + w * w);
                if s == 0.0 {
                    2.0
                } else {
                    2.0 * phi(s) / s.sinh()
                }
            });
        }

        let lo = r + split;
        let mut far = 0.0;
        if s_end > lo {
            let width = (0.5 * t.sqrt()).clamp(0.05, 0.5);
            let panels = ((s_end - lo) / width).ceil().max(1.0) as usize;
            let hs = (s_end - lo) / panels as f64;
            for k in 0..panels {
                let a = lo + hs * k as f64;
                far += rule.integrate(a, a + hs, |s| {
                    let gap = 2.0 * (0.5 * (s + r)).sinh() * (0.5 * (s - r)).sinh();
                    phi(s) / gap.sqrt()
                });
            }
        }
        near + far
    })
}

/// Euclidean leading term with the curvature correction, used for `t < SMALL_TIME`.
fn small_time_kernel(d: usize, t: f64, r: f64) -> f64 {
    let dm1 = (d - 1) as f64;
    (4.0 * PI * t).powf(-0.5 * d as f64)
        * r_over_sinh(r).powf(0.5 * dm1)
        * (-r * r / (4.0 * t) - 0.25 * dm1 * dm1 * t).exp()
}

/// Distance beyond which the kernel carries less than ~e^{-40} of its mass.
pub fn support_radius(d: usize, t: f64) -> f64 {
    (d - 1) as f64 * t + (160.0 * t).sqrt() + 1.0
}

/// The heat kernel of `H^d` at time `t`, tabulated on a uniform distance
/// grid over `[0, ρ_max]` and evaluated by monotone cubic Hermite
/// interpolation. Zero beyond `ρ_max`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    d: usize,
    t: f64,
    step: f64,
    rho_max: f64,
    samples: Vec<f64>,
    slopes: Vec<f64>,
}

impl KernelTable {
    pub fn new(d: usize, t: f64) -> Result<Self> {
        Self::with_intervals(d, t, DEFAULT_TABLE_INTERVALS)
    }

    pub fn with_intervals(d: usize, t: f64, intervals: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        check_time(t)?;
        if intervals < 16 {
            return Err(Error::InvalidGrid(format!(
                "kernel table needs at least 16 intervals, got {intervals}"
            )));
        }
        let rho_max = support_radius(d, t);
        let step = rho_max / intervals as f64;
        let grid = |len: usize| (0..len).map(move |i| step * i as f64);

        let samples = if t < SMALL_TIME {
            grid(intervals + 1).map(|r| small_time_kernel(d, t, r)).collect()
        } else {
            let base = if d % 2 == 1 { 3 } else { 2 };
            // each descent consumes the stencil's half-width past the end
            let pad = HALF_WIDTH * (d - base) / 2;
            let grid = grid(intervals + 1 + pad);
            let mut values: Vec<f64> = if base == 3 {
                grid.map(|r| kernel_h3(t, r)).collect::<Result<_>>()?
            } else {
                grid.map(|r| kernel_h2(t, r)).collect::<Result<_>>()?
            };
            let mut k = base;
            while k < d {
                values = descend(&values, step, k, t);
                values.truncate(values.len() - HALF_WIDTH);
                // differencing leaves roundoff-sized negatives in the far tail
                let floor = 1e-14 * values.iter().cloned().fold(0.0, f64::max);
                for v in values.iter_mut().filter(|v| **v < 0.0 && -**v < floor) {
                    *v = 0.0;
                }
                k += 2;
            }
            values
        };
        let slopes = monotone_slopes(&samples, step);
        Ok(Self {
            d,
            t,
            step,
            rho_max,
            samples,
            slopes,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.rho_max {
            return 0.0;
        }
        let x = r / self.step;
        let i = (x as usize).min(self.samples.len() - 2);
        let s = x - i as f64;
        let h = self.step;
        let (y0, y1) = (self.samples[i], self.samples[i + 1]);
        let (m0, m1) = (self.slopes[i], self.slopes[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * m1;
        v.max(0.0)
    }

    /// `∫_0^{ρ_max} p(r) ω_{d-1} sinh^{d-1}(r) dr` of the interpolant.
    pub fn mass(&self) -> f64 {
        let rule = GaussLegendre::new(4);
        let area = unit_sphere_area(self.d - 1);
        let dm1 = self.d as i32 - 1;
        (0..self.samples.len() - 1)
            .map(|i| {
                let a = self.step * i as f64;
                rule.integrate(a, a + self.step, |r| self.eval(r) * area * r.sinh().powi(dm1))
            })
            .sum()
    }
}

const HALF_WIDTH: usize = 4;

/// One step of the dimension descent
/// `p^{k+2}(r) = -(e^{-kt} / (2π sinh r)) ∂_r p^k(r)`,
/// with `∂_r` by eighth-order central differences on the even extension.
/// At `r = 0` the quotient is replaced by its limit `p''(0)`.
fn descend(values: &[f64], step: f64, k: usize, t: f64) -> Vec<f64> {
    const D1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    const D2: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let n = values.len() as isize;
    let at = |i: isize| -> f64 {
        let j = i.abs();
        if j < n {
            values[j as usize]
        } else {
            0.0
        }
    };
    let factor = -(-(k as f64) * t).exp() / (2.0 * PI);
    (0..n)
        .map(|i| {
            if i == 0 {
                let mut d2 = D2[0] * at(0);
                for (m, c) in D2.iter().enumerate().skip(1) {
                    d2 += c * (at(m as isize) + at(-(m as isize)));
                }
                factor * d2 / (step * step)
            } else {
                let mut d1 = 0.0;
                for (m, c) in D1.iter().enumerate() {
                    let m = m as isize + 1;
                    d1 += c * (at(i + m) - at(i - m));
                }
                let r = step * i as f64;
                factor * d1 / step / r.sinh()
            }
        })
        .collect()
}

/// Fritsch–Carlson limited slopes seeded by fourth-order central differences.
fn monotone_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len() as isize;
    let at = |i: isize| -> f64 {
        let j = i.abs();
        if j < n {
            y[j as usize]
        } else {
            0.0
        }
    };
    let mut m: Vec<f64> = (0..n)
        .map(|i| (8.0 * (at(i + 1) - at(i - 1)) - (at(i + 2) - at(i - 2))) / (12.0 * h))
        .collect();
    for i in 0..(n as usize - 1) {
        let delta = (y[i + 1] - y[i]) / h;
        if delta == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / delta;
        let b = m[i + 1] / delta;
        if a < 0.0 {
            m[i] = 0.0;
        }
        if b < 0.0 {
            m[i + 1] = 0.0;
        }
        let (a, b) = (m[i] / delta, m[i + 1] / delta);
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[i] = tau * a * delta;
            m[i + 1] = tau * b * delta;
        }
    }
    m
}

/// Heat kernel of `H^d`, `d >= 4`, through the dimension descent from the
/// `H²` or `H³` kernel.
pub fn kernel_recursion(d: usize, t: f64, r: f64) -> Result<f64> {
    if d < 4 {
        return Err(Error::Precondition(format!(
            "kernel_recursion needs d >= 4, got d = {d}"
        )));
    }
    Ok(KernelTable::new(d, t)?.eval(r))
}

/// Direct (untabulated) kernel for d = 2, 3 and the small-time regime.
pub fn kernel_direct(d: usize, t: f64, r: f64) -> Result<f64> {
    check_time(t)?;
    if t < SMALL_TIME {
        return Ok(small_time_kernel(d, t, r.abs()));
    }
    match d {
        2 => kernel_h2(t, r),
        3 => kernel_h3(t, r),
        _ => kernel_recursion(d, t, r),
    }
}
