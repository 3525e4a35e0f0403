//! Construction of a region `F` and shift radius `δ` on which a density lower
//! bound `ρ0` keeps a uniformly positive overlap with its translates.

use serde::Serialize;

use super::{Density, IntervalUnion, PiecewiseDensity};
use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;

#[derive(Debug, Clone, Serialize)]
pub struct DensityOverlapRegion {
    pub region: IntervalUnion,
    pub delta: f64,
    /// `K = ∫_F ρ0`.
    pub k_mass: f64,
    /// `sup_{|x| ≤ δ} ∫_F |ρ0(z) - ρ0(z - x)| dz` over the probe grid.
    pub sup_difference: f64,
    /// `(K - sup_difference) / 2`.
    pub lower_bound: f64,
    /// `inf_{|x| ≤ δ} ∫_F min(ρ0(z), ρ0(z - x)) dz` over the probe grid.
    pub inf_overlap: f64,
    pub grid_spacing: f64,
    /// Estimate of `∫_{|z - z0| ≤ ε} dz / ρ0(z)`.
    pub inverse_integral: f64,
}

/// Integrates `h(ρ0(z), ρ0(z - x))` over `F` on the common refinement of the
/// breakpoints of `F`, of `ρ0`, and of the translate.
fn integrate_on<H>(rho: &PiecewiseDensity, region: &IntervalUnion, x: f64, h: H) -> f64
where
    H: Fn(f64, f64) -> f64,
{
    let shifted = rho.translated(x);
    let constant = rho.is_constant();
    let cells = rho.quad_cells;
    let mut parts = Vec::new();
    for &(a, b) in region.intervals() {
        let mut pts: Vec<f64> = rho
            .breakpoints()
            .into_iter()
            .chain(shifted.breakpoints())
            .filter(|&p| p > a && p < b)
            .collect();
        pts.push(a);
        pts.push(b);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        for w in pts.windows(2) {
            let (l, r) = (w[0], w[1]);
            if constant {
                let m = 0.5 * (l + r);
                parts.push(h(rho.eval(m), shifted.eval(m)) * (r - l));
            } else {
                let step = (r - l) / cells as f64;
                let vals: Vec<f64> = (0..cells)
                    .map(|i| {
                        let z = l + (i as f64 + 0.5) * step;
                        h(rho.eval(z), shifted.eval(z)) * step
                    })
                    .collect();
                parts.push(pairwise_sum(&vals));
            }
        }
    }
    pairwise_sum(&parts)
}

/// Midpoint estimates of `∫ 1/ρ0` over the ball under repeated doubling; the
/// integral is accepted once successive estimates agree to 1%.
fn inverse_integral(rho: &PiecewiseDensity, lo: f64, hi: f64) -> Result<f64> {
    let mut pieces = vec![lo, hi];
    if let Some(c) = rho.singular_point() {
        if c > lo && c < hi {
            pieces.insert(1, c);
        }
    }
    let estimate = |cells: usize| -> f64 {
        let mut parts = Vec::new();
        for w in pieces.windows(2) {
            let step = (w[1] - w[0]) / cells as f64;
            for i in 0..cells {
                let z = w[0] + (i as f64 + 0.5) * step;
                parts.push(step / rho.eval(z));
            }
        }
        pairwise_sum(&parts)
    };
    let mut prev = estimate(64);
    let mut cells = 128;
    while cells <= 1 << 18 {
        let cur = estimate(cells);
        if !cur.is_finite() {
            break;
        }
        if (cur - prev).abs() <= 1e-2 * cur.abs() {
            return Ok(cur);
        }
        prev = cur;
        cells *= 2;
    }
    Err(Error::precondition(
        "the reciprocal of the density lower bound is not integrable on the ball",
    ))
}

/// Builds `F ⊂ [z0 - ε, z0 + ε]` with `0 ∉ F` and `K = ∫_F ρ0 > 0`, then halves
/// `δ` from `ε` until `∫_F |ρ0 - ρ0(· - x)| ≤ 3K/4` for every probe shift
/// `|x| ≤ δ`. The returned lower bound is then at least `K/8`.
pub fn density_overlap_region(
    rho0: &PiecewiseDensity,
    z0: f64,
    epsilon: f64,
    probe_grid: usize,
) -> Result<DensityOverlapRegion> {
    if !(epsilon > 0.0 && epsilon.is_finite() && z0.is_finite()) {
        return Err(Error::invalid("epsilon must be positive and z0 finite"));
    }
    let probe_grid = probe_grid.max(3);
    let (lo, hi) = (z0 - epsilon, z0 + epsilon);
    let inverse = inverse_integral(rho0, lo, hi)?;

    let ball = IntervalUnion::single(lo, hi)?;
    let mut region = ball.intersect(&rho0.support);
    if lo <= 0.0 && 0.0 <= hi {
        region = region.remove_open(-epsilon / 10.0, epsilon / 10.0);
    }
    if region.contains(0.0) {
        region = region.remove_open(-f64::MIN_POSITIVE, f64::MIN_POSITIVE);
    }
    let k_mass = match rho0.shape {
        Density::Custom(_) => integrate_on(rho0, &region, 0.0, |a, _| a),
        _ => PiecewiseDensity {
            support: region.clone(),
            ..rho0.clone()
        }
        .total_mass(),
    };
    if !(k_mass > 0.0) {
        return Err(Error::Degenerate("the region carries no mass".into()));
    }

    let mut delta = epsilon;
    for _ in 0..64 {
        let spacing = 2.0 * delta / (probe_grid - 1) as f64;
        let shifts: Vec<f64> = (0..probe_grid).map(|i| -delta + spacing * i as f64).collect();
        let diffs: Vec<f64> = shifts
            .iter()
            .map(|&x| integrate_on(rho0, &region, x, |a, b| (a - b).abs()))
            .collect();
        let sup = diffs.iter().copied().fold(0.0, f64::max);
        if sup <= 0.75 * k_mass {
            let inf_overlap = shifts
                .iter()
                .map(|&x| integrate_on(rho0, &region, x, f64::min))
                .fold(f64::INFINITY, f64::min);
            return Ok(DensityOverlapRegion {
                region,
                delta,
                k_mass,
                sup_difference: sup,
                lower_bound: 0.5 * (k_mass - sup),
                inf_overlap,
                grid_spacing: spacing,
                inverse_integral: inverse,
            });
        }
        delta /= 2.0;
    }
    Err(Error::Degenerate("no shift radius keeps the overlap positive".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_on_unit_interval() {
        let rho = PiecewiseDensity::uniform(1.0, 2.0, 1.0).unwrap();
        let r = density_overlap_region(&rho, 1.5, 0.5, 21).unwrap();
        assert_eq!(r.region.intervals(), &[(1.0, 2.0)]);
        // Over F the translate differs on a set of length |x|, so δ = ε passes.
        assert_eq!(r.delta, 0.5);
        assert!((r.sup_difference - 0.5).abs() < 1e-12);
        assert!((r.inf_overlap - 0.5).abs() < 1e-12);
        assert!(r.lower_bound >= r.k_mass / 8.0);
    }

    #[test]
    fn origin_is_excluded() {
        let rho = PiecewiseDensity::uniform(-1.0, 1.0, 2.0).unwrap();
        let r = density_overlap_region(&rho, 0.0, 1.0, 21).unwrap();
        assert!(!r.region.contains(0.0));
        assert_eq!(r.region.intervals(), &[(-1.0, -0.1), (0.1, 1.0)]);
        assert!(r.lower_bound > 0.0);
    }

    #[test]
    fn gap_in_support_violates_precondition() {
        let rho = PiecewiseDensity::new(
            IntervalUnion::new(vec![(1.0, 1.4), (1.6, 2.0)]).unwrap(),
            Density::Constant(1.0),
        );
        assert!(matches!(
            density_overlap_region(&rho, 1.5, 0.5, 11),
            Err(Error::Precondition(_))
        ));
    }
}
