//! Overlap mass `μ∧ν(R^d)`, variation distance, and the shifted-overlap
//! infimum over a grid of translations.

use nalgebra::DVector;
use serde::Serialize;

use super::{interval_overlap, same_location, Density, FiniteMeasure, LevyMeasure, PiecewiseDensity};
use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;

/// Groups atoms of both measures by location: (mass in μ, mass in ν) per site.
fn atom_groups(mu: &LevyMeasure, nu: &LevyMeasure) -> Result<Vec<(f64, f64)>> {
    let (LevyMeasure::Atomic { dim: d1, atoms: a1 }, LevyMeasure::Atomic { dim: d2, atoms: a2 }) = (mu, nu) else {
        unreachable!("caller checked representations")
    };
    if d1 != d2 {
        return Err(Error::DimensionMismatch { expected: *d1, got: *d2 });
    }
    let mut tagged: Vec<(&DVector<f64>, f64, bool)> = a1
        .iter()
        .map(|a| (&a.location, a.mass, true))
        .chain(a2.iter().map(|a| (&a.location, a.mass, false)))
        .collect();
    tagged.sort_by(|x, y| {
        x.0.iter()
            .zip(y.0.iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let mut anchor: Option<&DVector<f64>> = None;
    for (loc, m, from_mu) in tagged {
        let same = anchor.is_some_and(|a| same_location(a, loc));
        if !same {
            anchor = Some(loc);
            groups.push((0.0, 0.0));
        }
        let g = groups.last_mut().expect("group pushed");
        if from_mu {
            g.0 += m;
        } else {
            g.1 += m;
        }
    }
    Ok(groups)
}

/// Integrates `h(f, g)` over the common refinement of two densities' breakpoints.
fn refine_integrate<H>(f: &PiecewiseDensity, g: &PiecewiseDensity, h: H) -> f64
where
    H: Fn(f64, f64) -> f64,
{
    let mut pts = f.breakpoints();
    pts.extend(g.breakpoints());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let exact = f.is_constant() && g.is_constant();
    let cells = f.quad_cells.max(g.quad_cells);
    let mut parts = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let (l, r) = (w[0], w[1]);
        if r <= l {
            continue;
        }
        let m = 0.5 * (l + r);
        let (in_f, in_g) = (f.support.contains(m), g.support.contains(m));
        if !in_f && !in_g {
            continue;
        }
        if exact {
            parts.push(h(f.eval(m), g.eval(m)) * (r - l));
        } else {
            let step = (r - l) / cells as f64;
            let vals: Vec<f64> = (0..cells)
                .map(|i| {
                    let z = l + (i as f64 + 0.5) * step;
                    h(f.eval(z), g.eval(z)) * step
                })
                .collect();
            parts.push(pairwise_sum(&vals));
        }
    }
    pairwise_sum(&parts)
}

fn unsupported() -> Error {
    Error::Representation(
        "overlap is defined for atomic/atomic and one-dimensional density/density pairs".into(),
    )
}

/// `μ∧ν(R^d) = ∫ min(dμ, dν)`.
pub fn overlap_mass(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    match (mu.measure(), nu.measure()) {
        (LevyMeasure::Atomic { .. }, LevyMeasure::Atomic { .. }) => {
            let g = atom_groups(mu.measure(), nu.measure())?;
            Ok(pairwise_sum(&g.iter().map(|(a, b)| a.min(*b)).collect::<Vec<_>>()))
        }
        (LevyMeasure::Density(f), LevyMeasure::Density(g)) => Ok(refine_integrate(f, g, f64::min)),
        _ => Err(unsupported()),
    }
}

/// `‖μ − ν‖_var` in the total-mass convention.
pub fn variation_distance(mu: &FiniteMeasure, nu: &FiniteMeasure) -> Result<f64> {
    match (mu.measure(), nu.measure()) {
        (LevyMeasure::Atomic { .. }, LevyMeasure::Atomic { .. }) => {
            let g = atom_groups(mu.measure(), nu.measure())?;
            Ok(pairwise_sum(&g.iter().map(|(a, b)| (a - b).abs()).collect::<Vec<_>>()))
        }
        (LevyMeasure::Density(f), LevyMeasure::Density(g)) => Ok(refine_integrate(f, g, |a, b| (a - b).abs())),
        _ => Err(unsupported()),
    }
}

/// `ν∧(δ_a * ν)(R^d)`, with a fast exact path for constant densities.
pub fn shifted_overlap(nu: &FiniteMeasure, a: &DVector<f64>) -> Result<f64> {
    if let LevyMeasure::Density(d) = nu.measure() {
        if a.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: a.len() });
        }
        if let Density::Constant(c) = d.shape {
            return Ok(c * interval_overlap(&d.support, a[0]));
        }
    }
    overlap_mass(nu, &nu.translated(a)?)
}

/// Grid-certified infimum of the shifted overlap over `|z| ≤ δ`.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftedOverlap {
    /// Minimum over the grid.
    pub grid_min: f64,
    pub argmin: Vec<f64>,
    pub grid_spacing: f64,
    /// Bound on how far the overlap can drop between grid points, when the
    /// density has bounded variation.
    pub lipschitz_slack: Option<f64>,
    /// `grid_min - lipschitz_slack` clipped at zero, when a slack is known.
    pub certified_lower_bound: Option<f64>,
}

/// Shift grid: `per_axis` points on `[-δ, δ]` per coordinate (endpoints and 0
/// always included), restricted to the closed ball of radius `δ`.
pub fn shift_grid_points(dim: usize, delta: f64, per_axis: usize) -> Vec<DVector<f64>> {
    let n = per_axis.max(2);
    let mut axis: Vec<f64> = (0..n)
        .map(|i| -delta + 2.0 * delta * i as f64 / (n - 1) as f64)
        .collect();
    axis[n - 1] = delta;
    if n % 2 == 1 {
        axis[n / 2] = 0.0;
    } else {
        axis.push(0.0);
        axis.sort_by(f64::total_cmp);
    }
    let mut points = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    points
        .into_iter()
        .map(DVector::from_vec)
        .filter(|z| z.norm() <= delta * (1.0 + 1e-12))
        .collect()
}

/// Total variation of a density on its support, when finite and cheap.
fn density_variation(d: &PiecewiseDensity) -> Option<f64> {
    match d.shape {
        Density::Constant(c) => Some(2.0 * c * d.support.len() as f64),
        _ => None,
    }
}

/// Minimum of `ν∧(δ_z * ν)(R^d)` over the shift grid.
pub fn shifted_overlap_infimum(nu: &FiniteMeasure, delta: f64, shift_grid: usize) -> Result<ShiftedOverlap> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let dim = nu.dim();
    let grid = shift_grid_points(dim, delta, shift_grid);
    let mut best = f64::INFINITY;
    let mut argmin = vec![0.0; dim];
    for z in &grid {
        let v = shifted_overlap(nu, z)?;
        if v < best {
            best = v;
            argmin = z.iter().copied().collect();
        }
    }
    let spacing = 2.0 * delta / (shift_grid.max(2) - 1) as f64;
    let slack = match nu.measure() {
        LevyMeasure::Density(d) => density_variation(d).map(|tv| tv * spacing / 2.0),
        _ => None,
    };
    Ok(ShiftedOverlap {
        grid_min: best.max(0.0),
        argmin,
        grid_spacing: spacing,
        lipschitz_slack: slack,
        certified_lower_bound: slack.map(|s| (best - s).max(0.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{truncate, Atom, IntervalUnion};

    fn uniform(a: f64, b: f64) -> FiniteMeasure {
        truncate(&LevyMeasure::density(PiecewiseDensity::uniform(a, b, 1.0).unwrap()).unwrap(), 1.0).unwrap()
    }

    fn atom(x: f64) -> FiniteMeasure {
        truncate(&LevyMeasure::atomic(vec![Atom::new(vec![x], 1.0)]).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn atom_overlaps() {
        assert_eq!(overlap_mass(&atom(0.0), &atom(0.0)).unwrap(), 1.0);
        assert_eq!(overlap_mass(&atom(0.0), &atom(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn shifted_uniform_overlap_is_half() {
        let v = overlap_mass(&uniform(0.0, 1.0), &uniform(0.5, 1.5)).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_shift_infimum() {
        let r = shifted_overlap_infimum(&uniform(0.0, 1.0), 0.5, 11).unwrap();
        assert!((r.grid_min - 0.5).abs() < 1e-15);
        assert!((r.argmin[0].abs() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn atom_never_overlaps_its_shift() {
        let r = shifted_overlap_infimum(&atom(0.3), 0.1, 11).unwrap();
        assert_eq!(r.grid_min, 0.0);
    }

    #[test]
    fn grid_contains_zero_and_endpoints() {
        let g = shift_grid_points(1, 0.1, 4);
        assert!(g.iter().any(|z| z[0] == 0.0));
        assert!(g.iter().any(|z| z[0] == -0.1) && g.iter().any(|z| z[0] == 0.1));
        let g2 = shift_grid_points(2, 1.0, 3);
        assert_eq!(g2.len(), 5);
    }

    #[test]
    fn singular_density_overlap_is_consistent() {
        let d = PiecewiseDensity::new(
            IntervalUnion::single(1.0, 2.0).unwrap(),
            Density::Power {
                center: 1.5,
                exponent: -0.5,
                coef: 1.0,
            },
        );
        let f = truncate(&LevyMeasure::density(d).unwrap(), 0.1).unwrap();
        let k = overlap_mass(&f, &f).unwrap();
        // midpoint quadrature of a square-root singularity converges slowly
        assert!((k - f.total_mass()).abs() < 2e-2);
        let jh = 0.5 * (2.0 * k - variation_distance(&f, &f).unwrap());
        assert!((jh - k).abs() < 1e-12);
    }
}
