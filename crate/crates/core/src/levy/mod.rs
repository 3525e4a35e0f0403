//! Concrete Lévy measures, ε-truncation, and the overlap algebra `μ ∧ ν`.

mod intervals;
mod overlap;
mod region;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, pairwise_sum, Tolerance};
use crate::rng::RngStream;

pub use intervals::{
    exact_length, interval_overlap, interval_overlap_exact, svc_length, svc_set, svc_set_exact,
    IntervalUnion, SVC_MAX_LEVEL,
};
pub use overlap::{
    overlap_mass, shifted_overlap, shifted_overlap_infimum, shift_grid_points, variation_distance,
    ShiftedOverlap,
};
pub use region::{density_overlap_region, DensityOverlapRegion};

/// Default number of midpoint cells per interval for density quadrature.
pub const DEFAULT_QUAD_CELLS: usize = 4096;

const MEAN_TOL: Tolerance = Tolerance {
    abs: 1e-12,
    rel: 1e-10,
    max_panels: 4000,
};

/// A one-dimensional density shape, evaluated as a function of `z`.
#[derive(Clone)]
pub enum Density {
    /// `value` everywhere.
    Constant(f64),
    /// `coef * |z - center|^exponent`.
    Power { center: f64, exponent: f64, coef: f64 },
    /// Any nonnegative function; integrated by the midpoint rule.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant(c) => write!(f, "Constant({c})"),
            Density::Power { center, exponent, coef } => {
                write!(f, "Power {{ center: {center}, exponent: {exponent}, coef: {coef} }}")
            }
            Density::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Density {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Density::Constant(c) => *c,
            Density::Power { center, exponent, coef } => coef * (z - center).abs().powf(*exponent),
            Density::Custom(f) => f(z),
        }
    }

    fn singular_point(&self) -> Option<f64> {
        match self {
            Density::Power { center, exponent, .. } if *exponent < 0.0 => Some(*center),
            Density::Power { center, .. } => Some(*center),
            _ => None,
        }
    }

    /// Closed-form integral over `[a, b]` when one exists.
    fn integral(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            Density::Constant(c) => Some(c * (b - a)),
            Density::Power { center, exponent, coef } => {
                let side = |u0: f64, u1: f64| -> f64 {
                    let q = exponent + 1.0;
                    if u1 <= u0 {
                        0.0
                    } else if q.abs() < 1e-14 {
                        if u0 == 0.0 {
                            f64::INFINITY
                        } else {
                            (u1 / u0).ln()
                        }
                    } else if u0 == 0.0 && q < 0.0 {
                        f64::INFINITY
                    } else {
                        (u1.powf(q) - u0.powf(q)) / q
                    }
                };
                let left = if a < *center { side((center - b).max(0.0), center - a) } else { 0.0 };
                let right = if b > *center { side((a - center).max(0.0), b - center) } else { 0.0 };
                Some(coef * (left + right))
            }
            Density::Custom(_) => None,
        }
    }

    fn scaled(&self, factor: f64) -> Density {
        match self {
            Density::Constant(c) => Density::Constant(c * factor),
            Density::Power { center, exponent, coef } => Density::Power {
                center: *center,
                exponent: *exponent,
                coef: coef * factor,
            },
            Density::Custom(f) => {
                let f = Arc::clone(f);
                Density::Custom(Arc::new(move |z| factor * f(z)))
            }
        }
    }
}

/// A density supported on a finite interval union: `ρ(z) = shape(z - shift)`
/// for `z` in `support`, zero elsewhere.
#[derive(Debug, Clone)]
pub struct PiecewiseDensity {
    pub support: IntervalUnion,
    pub shape: Density,
    pub shift: f64,
    pub quad_cells: usize,
}

impl PiecewiseDensity {
    pub fn new(support: IntervalUnion, shape: Density) -> Self {
        PiecewiseDensity {
            support,
            shape,
            shift: 0.0,
            quad_cells: DEFAULT_QUAD_CELLS,
        }
    }

    pub fn with_quad_cells(mut self, cells: usize) -> Self {
        self.quad_cells = cells.max(1);
        self
    }

    /// Uniform density with total mass `mass` on `[a, b]`.
    pub fn uniform(a: f64, b: f64, mass: f64) -> Result<Self> {
        if b <= a {
            return Err(Error::invalid("uniform density needs a < b"));
        }
        Ok(Self::new(IntervalUnion::single(a, b)?, Density::Constant(mass / (b - a))))
    }

    pub fn eval(&self, z: f64) -> f64 {
        if self.support.contains(z) {
            self.shape.eval(z - self.shift)
        } else {
            0.0
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.shape, Density::Constant(_))
    }

    pub fn singular_point(&self) -> Option<f64> {
        self.shape.singular_point().map(|c| c + self.shift)
    }

    /// Breakpoints where the density may be discontinuous or singular.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.support.intervals().iter().flat_map(|&(a, b)| [a, b]).collect();
        if let Some(c) = self.singular_point() {
            pts.push(c);
        }
        pts
    }

    /// Support intervals split at the singular point.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        let c = self.singular_point();
        let mut out = Vec::with_capacity(self.support.len() + 1);
        for &(a, b) in self.support.intervals() {
            match c {
                Some(c) if a < c && c < b => {
                    out.push((a, c));
                    out.push((c, b));
                }
                _ => out.push((a, b)),
            }
        }
        out
    }

    /// Mass on a sub-interval `[a, b]` of one piece.
    fn piece_mass(&self, a: f64, b: f64) -> f64 {
        match self.shape.integral(a - self.shift, b - self.shift) {
            Some(m) => m,
            None => {
                let cells = self.quad_cells;
                let h = (b - a) / cells as f64;
                let vals: Vec<f64> = (0..cells)
                    .map(|i| self.shape.eval(a + (i as f64 + 0.5) * h - self.shift) * h)
                    .collect();
                pairwise_sum(&vals)
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        let masses: Vec<f64> = self.pieces().iter().map(|&(a, b)| self.piece_mass(a, b)).collect();
        pairwise_sum(&masses)
    }

    pub fn translated(&self, a: f64) -> Self {
        PiecewiseDensity {
            support: self.support.translated(a),
            shape: self.shape.clone(),
            shift: self.shift + a,
            quad_cells: self.quad_cells,
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        PiecewiseDensity {
            shape: self.shape.scaled(factor),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.shape {
            Density::Constant(c) if !(c.is_finite() && *c > 0.0) => {
                return Err(Error::invalid("constant density must be positive and finite"))
            }
            Density::Power { coef, exponent, .. } if !(*coef > 0.0 && exponent.is_finite()) => {
                return Err(Error::invalid("power density needs coef > 0 and a finite exponent"))
            }
            _ => {}
        }
        if self.support.is_empty() {
            return Err(Error::invalid("density support is empty"));
        }
        if let (Density::Power { exponent, .. }, Some(c)) = (&self.shape, self.singular_point()) {
            let touches = self.support.distance_to(c) == 0.0;
            if touches && *exponent <= -1.0 {
                let allowed = c == 0.0 && *exponent > -3.0;
                if !allowed {
                    return Err(Error::invalid(
                        "density is not integrable against 1 ∧ |z|² near its singular point",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: DVector<f64>,
    pub mass: f64,
}

impl Atom {
    pub fn new(location: Vec<f64>, mass: f64) -> Self {
        Atom {
            location: DVector::from_vec(location),
            mass,
        }
    }
}

/// A Lévy measure on `R^d`.
#[derive(Debug, Clone)]
pub enum LevyMeasure {
    /// Finite sum of point masses. An empty list is the zero measure.
    Atomic { dim: usize, atoms: Vec<Atom> },
    /// One-dimensional density on an interval union.
    Density(PiecewiseDensity),
    /// Rotationally symmetric α-stable measure with `Re Φ(ξ) = scale |ξ|^α`.
    SymmetricStable { alpha: f64, scale: f64, dim: usize },
    /// `∫_S ∫_0^∞ 1_C(sθ) g(s) ds μ(dθ)` with `g(s) = s^{-1-α}` below `r0` and
    /// `s^{-1-β}` above (`beta = None` means no jumps beyond `r0`), and `μ` a
    /// finite sum of weighted unit directions.
    SphericalStableLike {
        alpha: f64,
        beta: Option<f64>,
        r0: f64,
        sphere_atoms: Vec<Atom>,
    },
    /// `Σ_j w_j (base ∘ M_j^{-1})`: weighted images of a symmetric base
    /// measure under linear maps.
    Pushforward {
        base: Box<LevyMeasure>,
        components: Vec<(f64, DMatrix<f64>)>,
    },
}

/// Density coefficient `c` with `c |z|^{-d-α}` giving `Re Φ(ξ) = |ξ|^α`.
pub fn stable_density_coefficient(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    alpha * 2f64.powf(alpha - 1.0) * gamma((d + alpha) / 2.0)
        / (std::f64::consts::PI.powf(d / 2.0) * gamma(1.0 - alpha / 2.0))
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * std::f64::consts::PI.powf(d / 2.0) / gamma(d / 2.0)
}

impl LevyMeasure {
    pub fn zero(dim: usize) -> Self {
        LevyMeasure::Atomic { dim, atoms: Vec::new() }
    }

    pub fn atomic(atoms: Vec<Atom>) -> Result<Self> {
        let dim = atoms.first().map(|a| a.location.len()).unwrap_or(1);
        let m = LevyMeasure::Atomic { dim, atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn density(d: PiecewiseDensity) -> Result<Self> {
        let m = LevyMeasure::Density(d);
        m.validate()?;
        Ok(m)
    }

    pub fn stable(alpha: f64, scale: f64, dim: usize) -> Result<Self> {
        let m = LevyMeasure::SymmetricStable { alpha, scale, dim };
        m.validate()?;
        Ok(m)
    }

    /// Stable measure `c |z|^{-d-α} dz` given by its density coefficient.
    pub fn stable_from_density_coefficient(alpha: f64, coef: f64, dim: usize) -> Result<Self> {
        Self::stable(alpha, coef / stable_density_coefficient(alpha, dim), dim)
    }

    pub fn dim(&self) -> usize {
        match self {
            LevyMeasure::Atomic { dim, .. } => *dim,
            LevyMeasure::Density(_) => 1,
            LevyMeasure::SymmetricStable { dim, .. } => *dim,
            LevyMeasure::SphericalStableLike { sphere_atoms, .. } => {
                sphere_atoms.first().map(|a| a.location.len()).unwrap_or(1)
            }
            LevyMeasure::Pushforward { base, components } => {
                components.first().map(|(_, m)| m.nrows()).unwrap_or_else(|| base.dim())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LevyMeasure::Atomic { atoms, .. } => atoms.is_empty(),
            LevyMeasure::Pushforward { components, .. } => components.is_empty(),
            _ => false,
        }
    }

    /// True when `ν(-C) = ν(C)` is guaranteed by the representation.
    pub fn is_symmetric(&self) -> bool {
        match self {
            LevyMeasure::SymmetricStable { .. } => true,
            LevyMeasure::Pushforward { base, .. } => base.is_symmetric(),
            LevyMeasure::Atomic { atoms, .. } => atoms.is_empty(),
            _ => false,
        }
    }

    /// Checks positivity of masses and `∫ (1 ∧ |z|²) dν < ∞`.
    pub fn validate(&self) -> Result<()> {
        match self {
            LevyMeasure::Atomic { dim, atoms } => {
                for a in atoms {
                    if a.location.len() != *dim {
                        return Err(Error::DimensionMismatch {
                            expected: *dim,
                            got: a.location.len(),
                        });
                    }
                    if !(a.mass > 0.0 && a.mass.is_finite()) || a.location.iter().any(|x| !x.is_finite()) {
                        return Err(Error::invalid("atom masses must be positive and locations finite"));
                    }
                }
                Ok(())
            }
            LevyMeasure::Density(d) => d.validate(),
            LevyMeasure::SymmetricStable { alpha, scale, dim } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(Error::invalid("stable index must lie in (0, 2)"));
                }
                if !(*scale > 0.0 && scale.is_finite()) || *dim == 0 {
                    return Err(Error::invalid("stable scale must be positive and dim ≥ 1"));
                }
                Ok(())
            }
            LevyMeasure::SphericalStableLike { alpha, beta, r0, sphere_atoms } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(Error::invalid("alpha must lie in (0, 2)"));
                }
                if let Some(b) = beta {
                    if !(*b > 0.0 && b.is_finite()) {
                        return Err(Error::invalid("beta must be positive"));
                    }
                }
                if !(*r0 > 0.0 && r0.is_finite()) || sphere_atoms.is_empty() {
                    return Err(Error::invalid("r0 must be positive and the sphere measure nonempty"));
                }
                let dim = sphere_atoms[0].location.len();
                for a in sphere_atoms {
                    if a.location.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: a.location.len(),
                        });
                    }
                    if (a.location.norm() - 1.0).abs() > 1e-9 || !(a.mass > 0.0) {
                        return Err(Error::invalid("sphere atoms need unit directions and positive weights"));
                    }
                }
                Ok(())
            }
            LevyMeasure::Pushforward { base, components } => {
                if !base.is_symmetric() {
                    return Err(Error::Representation(
                        "pushforward mixtures require a symmetric base measure".into(),
                    ));
                }
                for (w, m) in components {
                    if !(*w > 0.0) || m.ncols() != base.dim() {
                        return Err(Error::invalid("pushforward component has bad weight or shape"));
                    }
                }
                base.validate()
            }
        }
    }

    /// `ν(R^d)` if finite.
    pub fn total_mass(&self) -> Option<f64> {
        match self {
            LevyMeasure::Atomic { atoms, .. } => {
                let m: Vec<f64> = atoms.iter().map(|a| a.mass).collect();
                Some(pairwise_sum(&m))
            }
            LevyMeasure::Density(d) => {
                let m = d.total_mass();
                m.is_finite().then_some(m)
            }
            LevyMeasure::Pushforward { components, base } if components.is_empty() => {
                let _ = base;
                Some(0.0)
            }
            _ => None,
        }
    }

    /// Multiplies the measure by a positive constant.
    pub fn scaled(&self, factor: f64) -> LevyMeasure {
        match self {
            LevyMeasure::Atomic { dim, atoms } => LevyMeasure::Atomic {
                dim: *dim,
                atoms: atoms
                    .iter()
                    .map(|a| Atom {
                        location: a.location.clone(),
                        mass: a.mass * factor,
                    })
                    .collect(),
            },
            LevyMeasure::Density(d) => LevyMeasure::Density(d.scaled(factor)),
            LevyMeasure::SymmetricStable { alpha, scale, dim } => LevyMeasure::SymmetricStable {
                alpha: *alpha,
                scale: scale * factor,
                dim: *dim,
            },
            LevyMeasure::SphericalStableLike { alpha, beta, r0, sphere_atoms } => {
                LevyMeasure::SphericalStableLike {
                    alpha: *alpha,
                    beta: *beta,
                    r0: *r0,
                    sphere_atoms: sphere_atoms
                        .iter()
                        .map(|a| Atom {
                            location: a.location.clone(),
                            mass: a.mass * factor,
                        })
                        .collect(),
                }
            }
            LevyMeasure::Pushforward { base, components } => LevyMeasure::Pushforward {
                base: base.clone(),
                components: components.iter().map(|(w, m)| (w * factor, m.clone())).collect(),
            },
        }
    }
}

/// How jumps of a finite measure are drawn.
#[derive(Debug, Clone)]
enum JumpTable {
    Empty,
    Atomic { cumulative: Vec<f64> },
    Density { pieces: Vec<(f64, f64)>, cumulative: Vec<f64> },
    Stable { alpha: f64, radius: f64, dim: usize },
    Spherical { cumulative: Vec<f64>, radial: RadialLaw },
}

#[derive(Debug, Clone)]
struct RadialLaw {
    // Pieces (lo, hi, exponent γ, mass) of the radial density s^{-1-γ}.
    pieces: Vec<(f64, f64, f64, f64)>,
}

impl RadialLaw {
    fn mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.3).sum()
    }

    fn sample(&self, rng: &mut RngStream) -> f64 {
        let total = self.mass();
        let mut v = rng.open01() * total;
        let mut chosen = *self.pieces.last().expect("nonempty radial law");
        for p in &self.pieces {
            if v < p.3 {
                chosen = *p;
                break;
            }
            v -= p.3;
        }
        let (lo, hi, g, _) = chosen;
        let u = rng.open01();
        let top = if hi.is_finite() { hi.powf(-g) } else { 0.0 };
        (lo.powf(-g) - u * (lo.powf(-g) - top)).powf(-1.0 / g)
    }
}

fn pareto_mass(lo: f64, hi: f64, g: f64) -> f64 {
    let top = if hi.is_finite() { hi.powf(-g) } else { 0.0 };
    (lo.powf(-g) - top) / g
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick(cumulative: &[f64], rng: &mut RngStream) -> usize {
    let total = *cumulative.last().expect("nonempty table");
    let v = rng.open01() * total;
    cumulative.partition_point(|&c| c <= v).min(cumulative.len() - 1)
}

/// A Lévy measure of finite total mass together with a jump sampler for
/// its normalization `ν̄ = ν / ν(R^d)`.
#[derive(Debug, Clone)]
pub struct FiniteMeasure {
    measure: LevyMeasure,
    min_radius: f64,
    total_mass: f64,
    table: Arc<JumpTable>,
}

impl FiniteMeasure {
    /// Wraps a measure already known to be finite.
    pub fn new(measure: LevyMeasure) -> Result<Self> {
        measure.validate()?;
        let total = measure
            .total_mass()
            .ok_or_else(|| Error::invalid("measure has infinite total mass; truncate it first"))?;
        Self::build(measure, 0.0, total)
    }

    fn build(measure: LevyMeasure, min_radius: f64, total_mass: f64) -> Result<Self> {
        let table = if total_mass <= 0.0 {
            JumpTable::Empty
        } else {
            match &measure {
                LevyMeasure::Atomic { atoms, .. } => JumpTable::Atomic {
                    cumulative: cumulative(&atoms.iter().map(|a| a.mass).collect::<Vec<_>>()),
                },
                LevyMeasure::Density(d) => {
                    let pieces = d.pieces();
                    let masses: Vec<f64> = pieces.iter().map(|&(a, b)| d.piece_mass(a, b)).collect();
                    JumpTable::Density {
                        pieces,
                        cumulative: cumulative(&masses),
                    }
                }
                LevyMeasure::SymmetricStable { alpha, dim, .. } => JumpTable::Stable {
                    alpha: *alpha,
                    radius: min_radius,
                    dim: *dim,
                },
                LevyMeasure::SphericalStableLike { alpha, beta, r0, sphere_atoms } => JumpTable::Spherical {
                    cumulative: cumulative(&sphere_atoms.iter().map(|a| a.mass).collect::<Vec<_>>()),
                    radial: radial_law(*alpha, *beta, *r0, min_radius),
                },
                LevyMeasure::Pushforward { .. } => {
                    return Err(Error::Representation(
                        "pushforward mixtures cannot be used as jump laws".into(),
                    ))
                }
            }
        };
        Ok(FiniteMeasure {
            measure,
            min_radius,
            total_mass,
            table: Arc::new(table),
        })
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Jumps smaller than this radius were removed by truncation.
    pub fn min_radius(&self) -> f64 {
        self.min_radius
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    /// The probability measure `ν / ν(R^d)`.
    pub fn normalized(&self) -> Result<FiniteMeasure> {
        if self.total_mass <= 0.0 {
            return Err(Error::Degenerate("cannot normalize the zero measure".into()));
        }
        let measure = self.measure.scaled(1.0 / self.total_mass);
        Ok(FiniteMeasure {
            measure,
            min_radius: self.min_radius,
            total_mass: 1.0,
            table: Arc::clone(&self.table),
        })
    }

    /// Translate by `a`: the measure `δ_a * ν`.
    pub fn translated(&self, a: &DVector<f64>) -> Result<FiniteMeasure> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: a.len(),
            });
        }
        let measure = match &self.measure {
            LevyMeasure::Atomic { dim, atoms } => LevyMeasure::Atomic {
                dim: *dim,
                atoms: atoms
                    .iter()
                    .map(|at| Atom {
                        location: &at.location + a,
                        mass: at.mass,
                    })
                    .collect(),
            },
            LevyMeasure::Density(d) => LevyMeasure::Density(d.translated(a[0])),
            _ => {
                return Err(Error::Representation(
                    "translation is only supported for atomic and density measures".into(),
                ))
            }
        };
        Self::build(measure, 0.0, self.total_mass)
    }

    /// Atom mass (atomic) or density value (density) at a point.
    pub fn weight_at(&self, z: &DVector<f64>) -> Result<f64> {
        match &self.measure {
            LevyMeasure::Atomic { atoms, .. } => {
                let m: Vec<f64> = atoms
                    .iter()
                    .filter(|at| same_location(&at.location, z))
                    .map(|at| at.mass)
                    .collect();
                Ok(pairwise_sum(&m))
            }
            LevyMeasure::Density(d) => Ok(d.eval(z[0])),
            _ => Err(Error::Representation(
                "pointwise weights exist only for atomic and density measures".into(),
            )),
        }
    }

    /// `∫ z 1_{|z|<1} dν`, the compensator mean of the jumps inside the unit ball.
    pub fn small_jump_mean(&self) -> Result<DVector<f64>> {
        let dim = self.dim();
        match &self.measure {
            LevyMeasure::Atomic { atoms, .. } => {
                let mut m = DVector::zeros(dim);
                for a in atoms.iter().filter(|a| a.location.norm() < 1.0) {
                    m += &a.location * a.mass;
                }
                Ok(m)
            }
            LevyMeasure::Density(d) => {
                let inner = PiecewiseDensity {
                    support: d.support.intersect(&IntervalUnion::single(-1.0, 1.0)?),
                    ..d.clone()
                };
                let mut parts = Vec::new();
                for (a, b) in inner.pieces() {
                    match d.shape {
                        Density::Constant(c) => parts.push(0.5 * c * (b * b - a * a)),
                        _ => {
                            let (v, err, ok) = integrate(|z| z * d.eval(z), a, b, MEAN_TOL);
                            if !ok && err > 1e-8 * v.abs().max(1e-12) {
                                return Err(Error::Accuracy {
                                    context: "small-jump mean".into(),
                                    estimate: err / v.abs().max(1e-300),
                                });
                            }
                            parts.push(v);
                        }
                    }
                }
                Ok(DVector::from_element(1, pairwise_sum(&parts)))
            }
            LevyMeasure::SphericalStableLike { alpha, beta, r0, sphere_atoms } => {
                // ∫_ε^1 s g(s) ds along each direction.
                let eps = self.min_radius;
                let first = |lo: f64, hi: f64, g: f64| -> f64 {
                    if hi <= lo {
                        0.0
                    } else if (g - 1.0).abs() < 1e-14 {
                        (hi / lo).ln()
                    } else {
                        (hi.powf(1.0 - g) - lo.powf(1.0 - g)) / (1.0 - g)
                    }
                };
                let mut radial = if eps > 0.0 || *alpha < 1.0 {
                    first(eps.max(1e-300), r0.min(1.0), *alpha)
                } else {
                    return Err(Error::precondition("untruncated small-jump mean diverges"));
                };
                if let Some(b) = beta {
                    radial += first(eps.max(*r0), 1.0, *b);
                }
                let mut m = DVector::zeros(dim);
                for a in sphere_atoms {
                    m += &a.location * (a.mass * radial);
                }
                Ok(m)
            }
            _ if self.measure.is_symmetric() => Ok(DVector::zeros(dim)),
            _ => Err(Error::Representation("small-jump mean not available".into())),
        }
    }

    /// Draws one jump from `ν̄`.
    pub fn sample(&self, rng: &mut RngStream) -> Result<DVector<f64>> {
        match (&*self.table, &self.measure) {
            (JumpTable::Empty, _) => Err(Error::Degenerate("jump law of a zero measure".into())),
            (JumpTable::Atomic { cumulative }, LevyMeasure::Atomic { atoms, .. }) => {
                Ok(atoms[pick(cumulative, rng)].location.clone())
            }
            (JumpTable::Density { pieces, cumulative }, LevyMeasure::Density(d)) => {
                let (a, b) = pieces[pick(cumulative, rng)];
                Ok(DVector::from_element(1, sample_piece(d, a, b, rng)))
            }
            (JumpTable::Stable { alpha, radius, dim }, _) => {
                let r = radius * rng.open01().powf(-1.0 / alpha);
                Ok(uniform_direction(*dim, rng) * r)
            }
            (JumpTable::Spherical { cumulative, radial }, LevyMeasure::SphericalStableLike { sphere_atoms, .. }) => {
                let dir = &sphere_atoms[pick(cumulative, rng)].location;
                Ok(dir * radial.sample(rng))
            }
            _ => Err(Error::Representation("jump table does not match measure".into())),
        }
    }
}

pub(crate) fn same_location(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())))
}

fn uniform_direction(dim: usize, rng: &mut RngStream) -> DVector<f64> {
    if dim == 1 {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return DVector::from_element(1, s);
    }
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-300 {
            return v / n;
        }
    }
}

fn radial_law(alpha: f64, beta: Option<f64>, r0: f64, eps: f64) -> RadialLaw {
    let mut pieces = Vec::new();
    if eps < r0 {
        pieces.push((eps, r0, alpha, pareto_mass(eps, r0, alpha)));
    }
    if let Some(b) = beta {
        let lo = eps.max(r0);
        pieces.push((lo, f64::INFINITY, b, pareto_mass(lo, f64::INFINITY, b)));
    }
    RadialLaw { pieces }
}

/// Inverse-cdf draw on one density piece (no interior singularity).
fn sample_piece(d: &PiecewiseDensity, a: f64, b: f64, rng: &mut RngStream) -> f64 {
    let v = rng.open01();
    match &d.shape {
        Density::Constant(_) => a + v * (b - a),
        Density::Power { center, exponent, .. } => {
            let c = center + d.shift;
            let right = a >= c;
            let (u0, u1) = if right { (a - c, b - c) } else { (c - b, c - a) };
            let q = exponent + 1.0;
            let u = if q.abs() < 1e-14 {
                u0 * (u1 / u0).powf(v)
            } else {
                (u0.powf(q) + v * (u1.powf(q) - u0.powf(q))).powf(1.0 / q)
            };
            if right {
                c + u
            } else {
                c - u
            }
        }
        Density::Custom(_) => {
            // Cell table with uniform draws inside the chosen cell.
            let cells = d.quad_cells;
            let h = (b - a) / cells as f64;
            let w: Vec<f64> = (0..cells).map(|i| d.eval(a + (i as f64 + 0.5) * h)).collect();
            let cum = cumulative(&w);
            let i = pick(&cum, rng);
            a + (i as f64 + rng.open01()) * h
        }
    }
}

/// The finite measure `ν_ε`: `ν` itself when finite, otherwise `ν`
/// restricted to `{|z| ≥ ε}`.
pub fn truncate(nu: &LevyMeasure, epsilon: f64) -> Result<FiniteMeasure> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    nu.validate()?;
    if let Some(total) = nu.total_mass() {
        return FiniteMeasure::build(nu.clone(), 0.0, total);
    }
    match nu {
        LevyMeasure::Density(d) => {
            let restricted = PiecewiseDensity {
                support: d.support.remove_open(-epsilon, epsilon),
                ..d.clone()
            };
            let total = restricted.total_mass();
            FiniteMeasure::build(LevyMeasure::Density(restricted), epsilon, total)
        }
        LevyMeasure::SymmetricStable { alpha, scale, dim } => {
            let c = scale * stable_density_coefficient(*alpha, *dim);
            let total = c * sphere_area(*dim) * epsilon.powf(-alpha) / alpha;
            FiniteMeasure::build(nu.clone(), epsilon, total)
        }
        LevyMeasure::SphericalStableLike { alpha, beta, r0, sphere_atoms } => {
            let w: f64 = sphere_atoms.iter().map(|a| a.mass).sum();
            let total = w * radial_law(*alpha, *beta, *r0, epsilon).mass();
            FiniteMeasure::build(nu.clone(), epsilon, total)
        }
        _ => Err(Error::Representation(
            "this representation cannot be truncated to a jump law".into(),
        )),
    }
}

/// `∫_{|z|<ε} |z|² ν(dz)`: second moment of the jumps discarded by truncation.
pub fn small_jump_second_moment(nu: &LevyMeasure, epsilon: f64) -> f64 {
    match nu {
        LevyMeasure::Atomic { atoms, .. } => atoms
            .iter()
            .filter(|a| a.location.norm() < epsilon)
            .map(|a| a.mass * a.location.norm_squared())
            .sum(),
        LevyMeasure::Density(d) => {
            if d.total_mass().is_finite() {
                return 0.0;
            }
            let inner = d.support.intersect(&IntervalUnion::single(-epsilon, epsilon).expect("valid"));
            let mut acc = Vec::new();
            for &(a, b) in inner.intervals() {
                let cells = d.quad_cells;
                let h = (b - a) / cells as f64;
                for i in 0..cells {
                    let z = a + (i as f64 + 0.5) * h;
                    acc.push(d.eval(z) * z * z * h);
                }
            }
            pairwise_sum(&acc)
        }
        LevyMeasure::SymmetricStable { alpha, scale, dim } => {
            let c = scale * stable_density_coefficient(*alpha, *dim);
            c * sphere_area(*dim) * epsilon.powf(2.0 - alpha) / (2.0 - alpha)
        }
        LevyMeasure::SphericalStableLike { alpha, beta, r0, sphere_atoms } => {
            let w: f64 = sphere_atoms.iter().map(|a| a.mass).sum();
            let lo_cut = epsilon.min(*r0);
            let mut m = lo_cut.powf(2.0 - alpha) / (2.0 - alpha);
            if let Some(b) = beta {
                if epsilon > *r0 {
                    m += if (*b - 2.0).abs() < 1e-14 {
                        (epsilon / r0).ln()
                    } else {
                        (epsilon.powf(2.0 - b) - r0.powf(2.0 - b)) / (2.0 - b)
                    };
                }
            }
            w * m
        }
        LevyMeasure::Pushforward { .. } => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_measure_is_finite_and_passes_through() {
        let u = svc_set(10, 0.25).unwrap();
        let len = u.length();
        let nu = LevyMeasure::density(PiecewiseDensity::new(u, Density::Constant(1.0))).unwrap();
        let f = truncate(&nu, 0.01).unwrap();
        assert_eq!(f.total_mass(), len);
        assert_eq!(f.min_radius(), 0.0);
    }

    #[test]
    fn stable_tail_mass_closed_form() {
        let nu = LevyMeasure::stable_from_density_coefficient(0.5, 1.0, 1).unwrap();
        let f = truncate(&nu, 1.0).unwrap();
        assert!((f.total_mass() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn finite_atom_is_not_truncated() {
        let nu = LevyMeasure::atomic(vec![Atom::new(vec![1.0], 0.5)]).unwrap();
        assert_eq!(truncate(&nu, 2.0).unwrap().total_mass(), 0.5);
    }

    #[test]
    fn cauchy_density_coefficient_is_one_over_pi() {
        let c = stable_density_coefficient(1.0, 1);
        assert!((c - 1.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn power_density_mass_closed_form() {
        let d = PiecewiseDensity::new(
            IntervalUnion::single(1.0, 2.0).unwrap(),
            Density::Power {
                center: 1.5,
                exponent: -0.5,
                coef: 1.0,
            },
        );
        assert!((d.total_mass() - 4.0 * 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn infinite_density_at_origin_is_truncated() {
        let d = PiecewiseDensity::new(
            IntervalUnion::single(-1.0, 1.0).unwrap(),
            Density::Power {
                center: 0.0,
                exponent: -1.5,
                coef: 1.0,
            },
        );
        let nu = LevyMeasure::density(d).unwrap();
        assert!(nu.total_mass().is_none());
        let f = truncate(&nu, 0.25).unwrap();
        // 2 ∫_{1/4}^1 z^{-3/2} dz = 4 (2 - 1) = 4
        assert!((f.total_mass() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_integrable_singularity_is_rejected() {
        let d = PiecewiseDensity::new(
            IntervalUnion::single(1.0, 2.0).unwrap(),
            Density::Power {
                center: 1.5,
                exponent: -1.0,
                coef: 1.0,
            },
        );
        assert!(LevyMeasure::density(d).is_err());
    }

    #[test]
    fn normalized_has_unit_mass() {
        let nu = LevyMeasure::atomic(vec![Atom::new(vec![1.0], 2.0), Atom::new(vec![-1.0], 6.0)]).unwrap();
        let f = truncate(&nu, 1.0).unwrap().normalized().unwrap();
        assert_eq!(f.measure().total_mass(), Some(1.0));
    }

    #[test]
    fn truncated_stable_jumps_exceed_radius() {
        let nu = LevyMeasure::stable(1.2, 1.0, 2).unwrap();
        let f = truncate(&nu, 0.3).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..1000 {
            assert!(f.sample(&mut rng).unwrap().norm() >= 0.3);
        }
    }
}
