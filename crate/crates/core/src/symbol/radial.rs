//! One-dimensional radial integrals for measures `g(s) ds` along a ray, with
//! `g(s) = s^{-1-α}` below `r0` and `s^{-1-β}` above.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};

const TOL: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-12,
    max_panels: 2000,
};

/// Number of half-period terms summed before sequence averaging.
const HALF_PERIODS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trig {
    Sin,
    Cos,
}

impl Trig {
    fn eval(self, x: f64) -> f64 {
        match self {
            Trig::Sin => x.sin(),
            Trig::Cos => x.cos(),
        }
    }
}

fn checked(v: (f64, f64, bool), context: &str) -> Result<f64> {
    let (value, err, ok) = v;
    if !ok && err > 1e-6 * value.abs().max(1e-12) {
        return Err(Error::Accuracy {
            context: context.into(),
            estimate: err / value.abs().max(1e-300),
        });
    }
    Ok(value)
}

/// `∫_a^∞ trig(w s) s^{-1-γ} ds` for `a, w > 0`, summed over half periods
/// with repeated averaging of the partial sums.
fn oscillatory_tail(kind: Trig, gamma_exp: f64, w: f64, a: f64) -> Result<f64> {
    let f = |s: f64| kind.eval(w * s) * s.powf(-1.0 - gamma_exp);
    let offset = match kind {
        Trig::Sin => 0.0,
        Trig::Cos => 0.5,
    };
    let half = PI / w;
    let first_index = ((a / half) - offset).floor() + 1.0;
    let mut zero = (first_index + offset) * half;
    if zero <= a {
        zero += half;
    }
    let head = checked(integrate(f, a, zero, TOL), "radial head")?;
    let mut partial = Vec::with_capacity(HALF_PERIODS + 1);
    let mut acc = head;
    partial.push(acc);
    for _ in 0..HALF_PERIODS {
        let next = zero + half;
        acc += checked(integrate(f, zero, next, TOL), "radial half period")?;
        partial.push(acc);
        zero = next;
    }
    while partial.len() > 1 {
        partial = partial.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    }
    Ok(partial[0])
}

/// `∫_lo^hi s^p ds` for `0 < lo ≤ hi`.
fn power_integral(p: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let q = p + 1.0;
    if q.abs() < 1e-14 {
        (hi / lo).ln()
    } else {
        (hi.powf(q) - lo.powf(q)) / q
    }
}

/// `∫_0^∞ (1 - cos v) v^{-1-α} dv`.
pub fn stable_cos_constant(alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-14 {
        PI / 2.0
    } else {
        gamma(1.0 - alpha) * (PI * alpha / 2.0).cos() / alpha
    }
}

/// Radial law `g(s) = s^{-1-α}` on `(0, r0)` and `s^{-1-β}` on `[r0, ∞)`
/// (no mass beyond `r0` when `beta` is `None`).
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub alpha: f64,
    pub beta: Option<f64>,
    pub r0: f64,
}

impl RadialProfile {
    /// `∫_0^∞ (1 - cos(s u)) g(s) ds`.
    pub fn real_part(&self, u: f64) -> Result<f64> {
        let w = u.abs();
        if w == 0.0 {
            return Ok(0.0);
        }
        let (alpha, r0) = (self.alpha, self.r0);
        let c = r0.min(1.0 / w);
        let near = checked(
            integrate(|s| 2.0 * (0.5 * w * s).sin().powi(2) * s.powf(-1.0 - alpha), 0.0, c, TOL),
            "radial real part near zero",
        )?;
        let mut total = near;
        if c < r0 {
            let cos_part = oscillatory_tail(Trig::Cos, alpha, w, c)? - oscillatory_tail(Trig::Cos, alpha, w, r0)?;
            total += power_integral(-1.0 - alpha, c, r0) - cos_part;
        }
        if let Some(beta) = self.beta {
            total += r0.powf(-beta) / beta - oscillatory_tail(Trig::Cos, beta, w, r0)?;
        }
        Ok(total)
    }

    /// `∫_0^∞ (s u 1_{s<1} - sin(s u)) g(s) ds`.
    pub fn imag_part(&self, u: f64) -> Result<f64> {
        let w = u.abs();
        if w == 0.0 {
            return Ok(0.0);
        }
        let sign = u.signum();
        let (alpha, r0) = (self.alpha, self.r0);
        let c = r0.min(1.0).min(1.0 / w);
        let near = checked(
            integrate(|s| (w * s - (w * s).sin()) * s.powf(-1.0 - alpha), 0.0, c, TOL),
            "radial imaginary part near zero",
        )?;
        // Compensator on [c, 1): s w g(s).
        let mut linear = w * power_integral(-alpha, c, r0.min(1.0));
        if r0 < 1.0 {
            if let Some(beta) = self.beta {
                linear += w * power_integral(-beta, r0, 1.0);
            }
        }
        let mut sine = 0.0;
        if c < r0 {
            sine += oscillatory_tail(Trig::Sin, alpha, w, c)? - oscillatory_tail(Trig::Sin, alpha, w, r0)?;
        }
        if let Some(beta) = self.beta {
            sine += oscillatory_tail(Trig::Sin, beta, w, r0)?;
        }
        Ok(sign * (near + linear - sine))
    }

    /// `∫_0^∞ g(s) ds` restricted to `s ≥ eps`.
    pub fn mass_beyond(&self, eps: f64) -> f64 {
        let mut m = 0.0;
        if eps < self.r0 {
            m += power_integral(-1.0 - self.alpha, eps, self.r0);
        }
        if let Some(beta) = self.beta {
            m += eps.max(self.r0).powf(-beta) / beta;
        }
        m
    }
}
