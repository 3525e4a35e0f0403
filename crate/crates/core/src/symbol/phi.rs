//! `φ_t(ρ) = sup_{|ξ|≤ρ} ∫_0^t Re Φ(B^⊤e^{sA^⊤}ξ) ds`, its inverse, the
//! growth and local-boundedness checks, and the resulting bound reports.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;

use super::{finite_symbol_bound, pushforward_exponent, time_integrated_between, time_integrated_exponent, OUModel};
use crate::error::{Error, Result};
use crate::levy::LevyMeasure;
use crate::quadrature::{integrate, Tolerance};
use crate::spectral::{matrix_exponential, op_norm};

/// Directions sampled on the unit sphere by default.
pub const DEFAULT_SPHERE_SAMPLES: usize = 64;

/// Radii per ray when `Re Φ` is not known to be radially monotone.
const RADIAL_STEPS: usize = 24;

const SEARCH_LIMIT: f64 = 1e12;

/// Integration horizon of the symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Horizon {
    /// `∫_0^t`.
    Finite(f64),
    /// The un-integrated symbol `Re Φ(B^⊤ξ)`.
    Unintegrated,
}

/// Directions covering the sphere up to the symmetry `ξ ↦ -ξ`.
fn directions(n: usize, samples: usize) -> Vec<DVector<f64>> {
    let m = samples.max(1);
    match n {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..m)
            .map(|k| {
                let th = PI * k as f64 / m as f64;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect(),
        _ => {
            // Fibonacci lattice on S^2, padded with zeros in higher dimension.
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|k| {
                    let y = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                    let r = (1.0 - y * y).sqrt();
                    let th = golden * k as f64;
                    let mut v = DVector::zeros(n);
                    v[0] = r * th.cos();
                    v[1] = y;
                    v[2] = r * th.sin();
                    v
                })
                .collect()
        }
    }
}

fn radially_monotone(model: &OUModel) -> bool {
    match &model.triplet.nu {
        LevyMeasure::SymmetricStable { .. } | LevyMeasure::Pushforward { .. } => true,
        nu => nu.is_zero(),
    }
}

fn symbol_value(model: &OUModel, horizon: Horizon, xi: &DVector<f64>) -> Result<f64> {
    match horizon {
        Horizon::Finite(t) => Ok(time_integrated_exponent(model, t, xi)?.re),
        Horizon::Unintegrated => Ok(pushforward_exponent(model, xi)?.re),
    }
}

/// `φ_t(ρ)` (or `φ(ρ)` for the un-integrated horizon).
pub fn phi_sup(model: &OUModel, horizon: Horizon, rho: f64, sphere_samples: usize) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho must be positive"));
    }
    let dirs = directions(model.n(), sphere_samples);
    let radii: Vec<f64> = if radially_monotone(model) {
        vec![rho]
    } else {
        (1..=RADIAL_STEPS).map(|k| rho * k as f64 / RADIAL_STEPS as f64).collect()
    };
    let mut best: f64 = 0.0;
    for d in &dirs {
        for &r in &radii {
            best = best.max(symbol_value(model, horizon, &(d * r))?);
        }
    }
    Ok(best)
}

/// `inf{ρ > 0 : φ_t(ρ) ≥ level}` by bracketing and bisection.
pub fn phi_inverse(model: &OUModel, horizon: Horizon, level: f64) -> Result<f64> {
    phi_inverse_with(model, horizon, level, DEFAULT_SPHERE_SAMPLES)
}

pub fn phi_inverse_with(model: &OUModel, horizon: Horizon, level: f64, sphere_samples: usize) -> Result<f64> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::invalid("level must be positive"));
    }
    if let Some(bound) = finite_symbol_bound(model) {
        let span = match horizon {
            Horizon::Finite(t) => t,
            Horizon::Unintegrated => 1.0,
        };
        if bound * span < level {
            return Err(Error::UnboundedSearch {
                level,
                limit: SEARCH_LIMIT,
            });
        }
    }
    let phi = |r: f64| phi_sup(model, horizon, r, sphere_samples);
    let mut hi = 1.0;
    while phi(hi)? < level {
        hi *= 2.0;
        if hi > SEARCH_LIMIT {
            return Err(Error::UnboundedSearch {
                level,
                limit: SEARCH_LIMIT,
            });
        }
    }
    let mut lo = hi / 2.0;
    while phi(lo)? >= level {
        lo /= 2.0;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if phi(mid)? >= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Sampled evidence for the growth, decay and local-boundedness conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub n: usize,
    pub t0: f64,
    /// `2n + 2`.
    pub threshold: f64,
    pub growth_radii: Vec<f64>,
    /// `min over directions of ∫_0^{t0} Re Φ / log(1 + |ξ|)` per radius.
    pub growth_ratios: Vec<f64>,
    /// Minimum ratio over the largest sampled decade.
    pub growth_min_last_decade: f64,
    pub growth_holds: bool,
    pub local_bound_horizons: Vec<f64>,
    /// `max over the ξ grid of ∫_0^T Re Φ` per horizon `T`.
    pub local_bound_values: Vec<f64>,
    pub local_bound_holds: bool,
    /// `(t, ∫ e^{-Re Φ_t} |ξ|^{n+2} dξ / φ_t^{-1}(1)^{2n+2})`, one-dimensional
    /// models only; diagnostics, not a verdict.
    pub decay_ratios: Vec<(f64, f64)>,
    /// The decay condition follows from the other two.
    pub decay_implied: bool,
}

fn log_spaced(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10().max(0.0);
    let count = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=count)
        .map(|i| lo * (hi / lo).powf(i as f64 / count as f64))
        .collect()
}

/// Evaluates the growth condition at `t0` on a log grid of `|ξ|` up to
/// `xi_range`, and local boundedness of `∫_0^T Re Φ` as `T` doubles.
pub fn check_conditions(model: &OUModel, t0: f64, xi_range: f64) -> Result<ConditionReport> {
    if !(t0 > 0.0 && xi_range > 10.0) {
        return Err(Error::invalid("t0 must be positive and xi_range above 10"));
    }
    let n = model.n();
    let threshold = 2.0 * n as f64 + 2.0;
    let dirs = directions(n, 16);

    let growth_radii = log_spaced(1.0, xi_range, 6);
    let mut growth_ratios = Vec::with_capacity(growth_radii.len());
    for &r in &growth_radii {
        let mut worst = f64::INFINITY;
        for d in &dirs {
            let v = time_integrated_exponent(model, t0, &(d * r))?.re;
            worst = worst.min(v / (1.0 + r).ln());
        }
        growth_ratios.push(worst);
    }
    let cutoff = xi_range / 10.0 * (1.0 - 1e-12);
    let growth_min_last_decade = growth_radii
        .iter()
        .zip(&growth_ratios)
        .filter(|(r, _)| **r >= cutoff)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let growth_holds = growth_min_last_decade > threshold;

    let probe: Vec<DVector<f64>> = [0.25, 0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&r| dirs.iter().map(move |d| d * r))
        .collect();
    let horizons: Vec<f64> = (0..=10).map(|k| 2f64.powi(k)).collect();
    let mut running = vec![0.0; probe.len()];
    let mut last_increment = vec![0.0; probe.len()];
    let mut local_bound_values = Vec::with_capacity(horizons.len());
    let mut prev_t = 0.0;
    for &t in &horizons {
        for (i, xi) in probe.iter().enumerate() {
            let inc = time_integrated_between(model, prev_t, t, xi)?.re;
            running[i] += inc;
            last_increment[i] = inc;
        }
        local_bound_values.push(running.iter().copied().fold(0.0, f64::max));
        prev_t = t;
    }
    let local_bound_holds = running
        .iter()
        .zip(&last_increment)
        .all(|(v, inc)| v.is_finite() && *inc <= 1e-4 * v.max(1e-12));

    let decay_ratios = if n == 1 {
        let mut out = Vec::new();
        for &t in &[1.0, 2.0, 4.0, 8.0, 16.0] {
            if let Some(r) = decay_ratio(model, t)? {
                out.push((t, r));
            }
        }
        out
    } else {
        Vec::new()
    };

    Ok(ConditionReport {
        n,
        t0,
        threshold,
        growth_radii,
        growth_ratios,
        growth_min_last_decade,
        growth_holds,
        local_bound_horizons: horizons,
        local_bound_values,
        local_bound_holds,
        decay_ratios,
        decay_implied: growth_holds && local_bound_holds,
    })
}

fn decay_ratio(model: &OUModel, t: f64) -> Result<Option<f64>> {
    if finite_symbol_bound(model).is_some_and(|b| b * t < 40.0) {
        return Ok(None);
    }
    let re = |x: f64| time_integrated_exponent(model, t, &DVector::from_element(1, x)).map(|v| v.re);
    let mut cut = 1.0;
    while re(cut)? < 40.0 {
        cut *= 2.0;
        if cut > 1e8 {
            return Ok(None);
        }
    }
    let tol = Tolerance {
        abs: 1e-10,
        rel: 1e-8,
        max_panels: 2000,
    };
    // Re Φ_t is even, so the integral over the line is twice the half-line.
    let f = |x: f64| 2.0 * (-re(x).unwrap_or(f64::INFINITY)).exp() * x.powi(3);
    let (num, _, _) = integrate(f, 0.0, cut, tol);
    let inv = match phi_inverse(model, Horizon::Finite(t), 1.0) {
        Ok(v) => v,
        Err(Error::UnboundedSearch { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(num / inv.powi(4)))
}

/// User constants in front of the structural bound factors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundConstants {
    pub tv: f64,
    pub gradient: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants { tv: 1.0, gradient: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub t: f64,
    pub phi_t_inverse: f64,
    /// `C |e^{tA}(x - y)| φ_t^{-1}(1)`.
    pub tv_bound: f64,
    /// `c φ^{-1}(1/(t ∧ 1))`.
    pub gradient_bound_small_t: f64,
    /// `c ‖e^{tA}‖ φ_t^{-1}(1)`.
    pub gradient_bound_large_t: f64,
    pub growth_holds: bool,
    pub local_bound_holds: bool,
    pub decay_implied: bool,
}

pub fn bound_report(
    model: &OUModel,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    conditions: &ConditionReport,
    constants: BoundConstants,
) -> Result<BoundReport> {
    if !(t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    if x.len() != model.n() || y.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x.len().max(y.len()),
        });
    }
    let e = matrix_exponential(&model.a, t)?;
    let phi_t_inverse = phi_inverse(model, Horizon::Finite(t), 1.0)?;
    let gap = (&e * (x - y)).norm();
    let small = phi_inverse(model, Horizon::Unintegrated, 1.0 / t.min(1.0))?;
    Ok(BoundReport {
        t,
        phi_t_inverse,
        tv_bound: constants.tv * gap * phi_t_inverse,
        gradient_bound_small_t: constants.gradient * small,
        gradient_bound_large_t: constants.gradient * op_norm(&e) * phi_t_inverse,
        growth_holds: conditions.growth_holds,
        local_bound_holds: conditions.local_bound_holds,
        decay_implied: conditions.decay_implied,
    })
}
