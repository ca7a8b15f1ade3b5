use crate::error::{Error, Result};
use crate::quad::{adaptive_gk, gamma};

/// Reciprocal exponent with `1/∞ = 0`.
pub(crate) fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        Err(Error::InvalidExponent(p))
    } else {
        Ok(())
    }
}

/// Rejects `p <= d`, where the Gamma-function bounds of the linear theory
/// break down.
pub fn require_p_above_d(d: usize, p: f64) -> Result<()> {
    check_exponent(p)?;
    if p > d as f64 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "the mild-solution bounds hold for p > d; got p = {p}, d = {d}"
        )))
    }
}

/// `(1/2)[(1/p - 1/q) + (8/q)(1 - 1/p)]`, the rate `γ_{p,q}` per unit `δ_d`.
pub fn gamma_factor(p: f64, q: f64) -> Result<f64> {
    check_exponent(p)?;
    check_exponent(q)?;
    if p > q {
        return Err(Error::ExponentOrder { p, q });
    }
    Ok(raw_gamma_factor(p, q))
}

// The formula itself; `β` evaluates it at `p/3`, which drops below 1 for p < 3.
fn raw_gamma_factor(p: f64, q: f64) -> f64 {
    0.5 * ((inv(p) - inv(q)) + 8.0 * inv(q) * (1.0 - inv(p)))
}

/// `∫_0^∞ s^{-θ} e^{-βs} ds = β^{θ-1} Γ(1-θ)`.
pub fn gamma_integral(theta: f64, beta: f64) -> f64 {
    beta.powf(theta - 1.0) * gamma(1.0 - theta)
}

/// The same integral by adaptive quadrature, after `s = v^{1/(1-θ)}`
/// removes the endpoint singularity.
pub fn gamma_integral_numeric(theta: f64, beta: f64) -> f64 {
    let k = 1.0 / (1.0 - theta);
    let f = |v: f64| k * (-beta * v.powf(k)).exp();
    // e^{-βs} < 1e-30 beyond s = 70/β
    let v_end = (70.0 / beta).powf(1.0 - theta);
    let pieces = 16;
    let h = v_end / pieces as f64;
    (0..pieces)
        .map(|i| adaptive_gk(&f, h * i as f64, h * (i + 1) as f64, 1e-15))
        .sum()
}

/// Kernel-bound prefactor `C` and dispersion rate `δ_d` for one dimension,
/// with every derived quantity of the linear theory at exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateConstants {
    pub d: usize,
    pub c: f64,
    pub delta_d: f64,
    pub p: f64,
}

impl EstimateConstants {
    pub fn new(d: usize, c: f64, delta_d: f64, p: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Precondition(format!("C must be positive, got {c}")));
        }
        if !(delta_d > 0.0 && delta_d.is_finite()) {
            return Err(Error::Precondition(format!("delta_d must be positive, got {delta_d}")));
        }
        check_exponent(p)?;
        Ok(Self { d, c, delta_d, p })
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.d, self.c, self.delta_d, p)
    }

    /// `h_d(t) = C max(t^{-d/2}, 1)`.
    pub fn h_d(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidTime { t, expect: "> 0" });
        }
        Ok(self.c * t.powf(-0.5 * self.d as f64).max(1.0))
    }

    /// `γ_{p,q} = (δ_d/2)[(1/p - 1/q) + (8/q)(1 - 1/p)]`.
    pub fn gamma_pq(&self, p: f64, q: f64) -> Result<f64> {
        Ok(self.delta_d * gamma_factor(p, q)?)
    }

    /// `β = d - 1 + γ_{p/3,p}`.
    pub fn beta(&self) -> Result<f64> {
        check_exponent(self.p)?;
        Ok((self.d - 1) as f64 + self.delta_d * raw_gamma_factor(self.p / 3.0, self.p))
    }

    /// The exponent `d/p`.
    pub fn theta_exp(&self) -> f64 {
        self.d as f64 * inv(self.p)
    }

    /// `β̃ = d - 1 + (γ_{p,p} + γ_{p/2,p})/2`.
    pub fn beta_tilde(&self) -> Result<f64> {
        let g = self.gamma_pq(self.p, self.p)? + self.gamma_pq(self.p / 2.0, self.p)?;
        Ok((self.d - 1) as f64 + 0.5 * g)
    }

    /// `θ̃ = (d/2)(1/p + 1/d)`.
    pub fn theta_tilde(&self) -> f64 {
        0.5 * self.d as f64 * (inv(self.p) + 1.0 / self.d as f64)
    }

    /// `N = C^{2/p}(β^{θ-1} Γ(1-θ) + 1/β)`.
    pub fn linear_constant_n(&self) -> Result<f64> {
        require_p_above_d(self.d, self.p)?;
        let beta = self.beta()?;
        let theta = self.theta_exp();
        Ok(self.c.powf(2.0 * inv(self.p)) * (gamma_integral(theta, beta) + 1.0 / beta))
    }

    /// `M = C^{1/p+1/d}(β̃^{θ̃-1} Γ(1-θ̃) + 1/β̃)`.
    pub fn smoothing_constant_m(&self) -> Result<f64> {
        require_p_above_d(self.d, self.p)?;
        let beta = self.beta_tilde()?;
        let theta = self.theta_tilde();
        let power = inv(self.p) + 1.0 / self.d as f64;
        Ok(self.c.powf(power) * (gamma_integral(theta, beta) + 1.0 / beta))
    }

    /// `N` with the Gamma integral replaced by quadrature.
    pub fn linear_constant_n_numeric(&self) -> Result<f64> {
        require_p_above_d(self.d, self.p)?;
        let beta = self.beta()?;
        let theta = self.theta_exp();
        Ok(self.c.powf(2.0 * inv(self.p)) * (gamma_integral_numeric(theta, beta) + 1.0 / beta))
    }

    /// `M` with the Gamma integral replaced by quadrature.
    pub fn smoothing_constant_m_numeric(&self) -> Result<f64> {
        require_p_above_d(self.d, self.p)?;
        let beta = self.beta_tilde()?;
        let theta = self.theta_tilde();
        let power = inv(self.p) + 1.0 / self.d as f64;
        Ok(self.c.powf(power) * (gamma_integral_numeric(theta, beta) + 1.0 / beta))
    }

    /// Warning for `p < 3`, where the exponent `p/3` used by the linear
    /// bound is not a Lebesgue exponent.
    pub fn exponent_warning(&self) -> Option<String> {
        (self.p < 3.0).then(|| {
            format!(
                "p = {} < 3: the L^(p/3) exponent in the bound for N is below 1",
                self.p
            )
        })
    }
}

/// `h_d(t)` as a free function.
pub fn h_d(t: f64, consts: &EstimateConstants) -> Result<f64> {
    consts.h_d(t)
}

/// `γ_{p,q}` as a free function.
pub fn gamma_pq(p: f64, q: f64, consts: &EstimateConstants) -> Result<f64> {
    consts.gamma_pq(p, q)
}

/// `N` at exponent `p`.
#[allow(non_snake_case)]
pub fn linear_constant_N(p: f64, consts: &EstimateConstants) -> Result<f64> {
    consts.with_p(p)?.linear_constant_n()
}

/// `M` at exponent `p`.
#[allow(non_snake_case)]
pub fn smoothing_constant_M(p: f64, consts: &EstimateConstants) -> Result<f64> {
    consts.with_p(p)?.smoothing_constant_m()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, p: f64) -> EstimateConstants {
        EstimateConstants::new(d, 1.0, 1.0, p).unwrap()
    }

    #[test]
    fn h_d_examples() {
        assert!((unit(3, 4.0).h_d(0.25).unwrap() - 8.0).abs() < 1e-14);
        assert_eq!(unit(3, 4.0).h_d(4.0).unwrap(), 1.0);
        let c = EstimateConstants::new(2, 2.5, 1.0, 4.0).unwrap();
        assert_eq!(c.h_d(1.0).unwrap(), 2.5);
        assert!(c.h_d(0.0).is_err());
    }

    #[test]
    fn gamma_pq_examples() {
        let c = unit(3, 4.0);
        assert_eq!(c.gamma_pq(f64::INFINITY, f64::INFINITY).unwrap(), 0.0);
        assert!((c.gamma_pq(2.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((c.gamma_pq(3.0, 6.0).unwrap() - 19.0 / 36.0).abs() < 1e-15);
        assert!(matches!(c.gamma_pq(4.0, 2.0), Err(Error::ExponentOrder { .. })));
    }

    #[test]
    fn gamma_pq_nonnegative_and_positive_on_diagonal() {
        let c = unit(3, 4.0);
        let ps = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0, f64::INFINITY];
        for (i, &p) in ps.iter().enumerate() {
            for &q in &ps[i..] {
                assert!(c.gamma_pq(p, q).unwrap() >= 0.0);
            }
            if p.is_finite() && p > 1.0 {
                assert!(c.gamma_pq(p, p).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn n_example_d3_p4() {
        // mpmath: 2.5^-0.25 * gamma(0.25) + 0.4
        let c = unit(3, 4.0);
        assert!((c.beta().unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(c.theta_exp(), 0.75);
        let n = c.linear_constant_n().unwrap();
        assert!((n - 3.2833414339366767).abs() < 1e-10, "{n}");
    }

    #[test]
    fn m_example_d3_p4() {
        let c = unit(3, 4.0);
        assert!((c.gamma_pq(4.0, 4.0).unwrap() - 0.75).abs() < 1e-15);
        assert!((c.gamma_pq(2.0, 4.0).unwrap() - 0.625).abs() < 1e-15);
        assert!((c.beta_tilde().unwrap() - 2.6875).abs() < 1e-15);
        assert!((c.theta_tilde() - 0.875).abs() < 1e-15);
        // mpmath: 2.6875^-0.125 * gamma(0.125) + 1/2.6875
        let m = c.smoothing_constant_m().unwrap();
        assert!((m - 7.0302447888972003).abs() < 1e-10, "{m}");
    }

    #[test]
    fn n_decreasing_in_beta() {
        let theta: f64 = 0.75;
        let mut prev = f64::INFINITY;
        for i in 0..=40 {
            let beta = 1.0 + 0.1 * i as f64;
            let n = gamma_integral(theta, beta) + 1.0 / beta;
            assert!(n < prev);
            prev = n;
        }
    }

    #[test]
    fn n_blows_up_as_p_approaches_d() {
        let n1 = unit(3, 3.01).linear_constant_n().unwrap();
        let n2 = unit(3, 3.0001).linear_constant_n().unwrap();
        assert!(n2 > 50.0 * n1 / 2.0 && n2 > n1);
        assert!(unit(3, 3.0).linear_constant_n().is_err());
    }

    #[test]
    fn m_finite_on_exponent_scan() {
        for d in 2..=4 {
            for i in 1..=90 {
                let p = d as f64 * (1.0 + 0.1 * i as f64);
                let m = unit(d, p).smoothing_constant_m().unwrap();
                assert!(m.is_finite() && m > 0.0, "d={d} p={p}");
            }
        }
    }

    #[test]
    fn precondition_message_cites_p_above_d() {
        let err = unit(3, 2.5).linear_constant_n().unwrap_err().to_string();
        assert!(err.contains("for p > d"), "{err}");
    }

    #[test]
    fn gamma_integral_quadrature_agrees() {
        for (theta, beta) in [(0.75, 2.5), (0.875, 2.6875), (0.3, 1.0)] {
            let a = gamma_integral(theta, beta);
            let b = gamma_integral_numeric(theta, beta);
            assert!(((a - b) / a).abs() < 1e-10, "{theta} {beta}: {a} {b}");
        }
    }

    #[test]
    fn small_p_is_flagged_not_rejected() {
        let c = unit(2, 2.5);
        assert!(c.exponent_warning().is_some());
        assert!(c.linear_constant_n().is_ok());
        assert!(unit(3, 4.0).exponent_warning().is_none());
    }
}
