//! Characteristic exponents, their pushforwards under linear maps and the OU
//! flow, the `φ_t` functionals, and Fourier inversion of OU marginals.
//!
//! Sign convention: `Φ(ξ) = ½⟨Qξ,ξ⟩ + i⟨b,ξ⟩ + ∫(1 - e^{i⟨ξ,z⟩} + i⟨ξ,z⟩1_{|z|<1}) ν(dz)`
//! with `E e^{i⟨ξ,Z_t⟩} = e^{-tΦ(ξ)}`, so a positive `b` pushes `Z` towards
//! negative values.

mod fourier;
mod phi;
mod radial;

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::levy::{Atom, Density, LevyMeasure, PiecewiseDensity};
use crate::quadrature::{composite_rule, integrate_complex, integrate_complex_pieces, pairwise_sum_complex, Tolerance};
use crate::spectral::{matrix_exponential, op_norm};

pub use fourier::{
    density_via_fourier, density_via_fourier_with, shifted_difference_l1, DensityGrid, FourierOptions, FourierPlan, Lattice,
};
pub use phi::{
    bound_report, check_conditions, phi_inverse, phi_inverse_with, phi_sup, BoundConstants, BoundReport, ConditionReport,
    Horizon, DEFAULT_SPHERE_SAMPLES,
};
pub use radial::{stable_cos_constant, RadialProfile};

/// Panels of the composite Kronrod rule used to realize `ν_t` as a mixture.
pub const DEFAULT_PUSHFORWARD_PANELS: usize = 64;

const S_TOL: Tolerance = Tolerance {
    abs: 1e-10,
    rel: 1e-12,
    max_panels: 4000,
};

const DENSITY_TOL: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-11,
    max_panels: 4000,
};

/// Lévy triplet `(Q, b, ν)`.
#[derive(Debug, Clone)]
pub struct LevyTriplet {
    pub q: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub nu: LevyMeasure,
}

impl LevyTriplet {
    pub fn new(q: DMatrix<f64>, drift: DVector<f64>, nu: LevyMeasure) -> Result<Self> {
        let d = drift.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: q.nrows() });
        }
        if !nu.is_zero() && nu.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: nu.dim() });
        }
        let scale = 1.0 + op_norm(&q);
        if (&q - q.transpose()).amax() > 1e-10 * scale {
            return Err(Error::invalid("Q must be symmetric"));
        }
        if d > 0 {
            let min_eig = q.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-10 * scale {
                return Err(Error::invalid("Q must be positive semidefinite"));
            }
        }
        nu.validate()?;
        Ok(LevyTriplet { q, drift, nu })
    }

    /// Pure-jump triplet with zero drift.
    pub fn jumps(nu: LevyMeasure) -> Result<Self> {
        let d = nu.dim();
        Self::new(DMatrix::zeros(d, d), DVector::zeros(d), nu)
    }

    /// Gaussian triplet `(Q, 0, 0)`.
    pub fn gaussian(q: DMatrix<f64>) -> Result<Self> {
        let d = q.nrows();
        Self::new(q, DVector::zeros(d), LevyMeasure::zero(d))
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    pub fn has_gaussian_part(&self) -> bool {
        self.q.amax() > 0.0
    }
}

/// `dX = AX dt + B dZ` with `Z` given by its triplet.
#[derive(Debug, Clone)]
pub struct OUModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub triplet: LevyTriplet,
    rank_b: usize,
    b_bar: Option<DMatrix<f64>>,
}

impl OUModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, triplet: LevyTriplet) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::invalid("A must be a nonempty square matrix"));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
        }
        if b.ncols() != triplet.dim() {
            return Err(Error::DimensionMismatch {
                expected: triplet.dim(),
                got: b.ncols(),
            });
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("A and B must be finite"));
        }
        let svd = b.clone().svd(false, false);
        let tol = 1e-9 * (1.0 + op_norm(&b));
        let rank_b = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let b_bar = if rank_b == n {
            let bbt = &b * b.transpose();
            bbt.try_inverse().map(|inv| b.transpose() * inv)
        } else {
            None
        };
        Ok(OUModel {
            a,
            b,
            triplet,
            rank_b,
            b_bar,
        })
    }

    /// Scalar model `dX = a X dt + b dZ`.
    pub fn scalar(a: f64, b: f64, triplet: LevyTriplet) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b), triplet)
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Driver dimension `d`.
    pub fn d(&self) -> usize {
        self.b.ncols()
    }

    pub fn rank_b(&self) -> usize {
        self.rank_b
    }

    /// `B̄` with `B B̄ = I_n`, present when `B` has rank `n`.
    pub fn b_bar(&self) -> Option<&DMatrix<f64>> {
        self.b_bar.as_ref()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `1 - sinc(x)` without cancellation.
fn one_minus_sinc(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        x2 / 6.0 - x2 * x2 / 120.0 + x2 * x2 * x2 / 5040.0
    } else {
        1.0 - x.sin() / x
    }
}

/// Exact `∫_a^b (1 - e^{iξz} + iξz 1_ball) dz` for a constant density piece.
fn constant_piece(xi: f64, a: f64, b: f64, in_ball: bool) -> Complex64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    let (xm, xh) = (xi * m, xi * h);
    let re = 2.0 * h * (2.0 * (0.5 * xm).sin().powi(2) + xm.cos() * one_minus_sinc(xh));
    let comp = if in_ball { xi * 2.0 * h * m } else { 0.0 };
    let im = comp - 2.0 * h * xm.sin() * sinc(xh);
    Complex64::new(re, im)
}

fn density_exponent(d: &PiecewiseDensity, xi: f64) -> Result<Complex64> {
    let mut parts = Vec::new();
    let mut cuts = vec![-1.0, 1.0];
    if let Some(c) = d.singular_point() {
        cuts.push(c);
    }
    for (a, b) in d.pieces() {
        let mut pts = vec![a, b];
        pts.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        for w in pts.windows(2) {
            let (l, r) = (w[0], w[1]);
            let in_ball = l >= -1.0 && r <= 1.0;
            if let Density::Constant(c) = d.shape {
                parts.push(constant_piece(xi, l, r, in_ball) * c);
            } else {
                let f = |z: f64| {
                    let comp = if in_ball { xi * z } else { 0.0 };
                    Complex64::new(1.0 - (xi * z).cos(), comp - (xi * z).sin()) * d.eval(z)
                };
                let res = integrate_complex(f, l, r, DENSITY_TOL);
                if !res.converged && res.rel_error() > 1e-6 && res.abs_error > 1e-12 {
                    return Err(Error::Accuracy {
                        context: "density characteristic exponent".into(),
                        estimate: res.rel_error(),
                    });
                }
                parts.push(res.value);
            }
        }
    }
    Ok(pairwise_sum_complex(&parts))
}

fn atomic_exponent(atoms: &[Atom], xi: &DVector<f64>) -> Complex64 {
    let terms: Vec<Complex64> = atoms
        .iter()
        .map(|a| {
            let p = xi.dot(&a.location);
            let comp = if a.location.norm() < 1.0 { p } else { 0.0 };
            Complex64::new(1.0 - p.cos(), comp - p.sin()) * a.mass
        })
        .collect();
    pairwise_sum_complex(&terms)
}

/// Jump part `∫(1 - e^{i⟨ξ,z⟩} + i⟨ξ,z⟩1_{|z|<1}) ν(dz)`.
pub fn jump_exponent(nu: &LevyMeasure, xi: &DVector<f64>) -> Result<Complex64> {
    if nu.is_zero() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if xi.len() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: nu.dim(),
            got: xi.len(),
        });
    }
    match nu {
        LevyMeasure::Atomic { atoms, .. } => Ok(atomic_exponent(atoms, xi)),
        LevyMeasure::Density(d) => density_exponent(d, xi[0]),
        LevyMeasure::SymmetricStable { alpha, scale, .. } => Ok(Complex64::new(scale * xi.norm().powf(*alpha), 0.0)),
        LevyMeasure::SphericalStableLike {
            alpha,
            beta,
            r0,
            sphere_atoms,
        } => {
            let profile = RadialProfile {
                alpha: *alpha,
                beta: *beta,
                r0: *r0,
            };
            let mut terms = Vec::with_capacity(sphere_atoms.len());
            for a in sphere_atoms {
                let u = xi.dot(&a.location);
                terms.push(Complex64::new(profile.real_part(u)?, profile.imag_part(u)?) * a.mass);
            }
            Ok(pairwise_sum_complex(&terms))
        }
        LevyMeasure::Pushforward { base, components } => {
            // Symmetric base: the compensator correction of each image vanishes.
            let mut terms = Vec::with_capacity(components.len());
            for (w, m) in components {
                terms.push(jump_exponent(base, &(m.transpose() * xi))? * *w);
            }
            Ok(pairwise_sum_complex(&terms))
        }
    }
}

/// `Φ(ξ)` of a triplet.
pub fn characteristic_exponent(triplet: &LevyTriplet, xi: &DVector<f64>) -> Result<Complex64> {
    if xi.len() != triplet.dim() {
        return Err(Error::DimensionMismatch {
            expected: triplet.dim(),
            got: xi.len(),
        });
    }
    if xi.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("xi must be finite"));
    }
    let gauss = 0.5 * (&triplet.q * xi).dot(xi);
    let drift = triplet.drift.dot(xi);
    Ok(Complex64::new(gauss, drift) + jump_exponent(&triplet.nu, xi)?)
}

/// `Φ_B(ξ) = Φ(B^⊤ξ)`.
pub fn pushforward_exponent(model: &OUModel, xi: &DVector<f64>) -> Result<Complex64> {
    if xi.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: xi.len(),
        });
    }
    characteristic_exponent(&model.triplet, &(model.b.transpose() * xi))
}

/// Upper bound `2 ν(R^d)` on `Re Φ_B` when there is no Gaussian part and `ν`
/// is finite; `Re Φ_t` is then at most `t` times this.
pub fn finite_symbol_bound(model: &OUModel) -> Option<f64> {
    if model.triplet.has_gaussian_part() {
        return None;
    }
    model.triplet.nu.total_mass().map(|m| 2.0 * m)
}

/// Image of the jump measure and the drift correction under `z ↦ M z`.
/// Returns `(ν∘M^{-1} scaled by weight, ∫ M z (1_{|z|<1} - 1_{|Mz|<1}) ν(dz))`.
fn image_components(nu: &LevyMeasure, m: &DMatrix<f64>, weight: f64) -> Result<(Vec<Atom>, Vec<(f64, DMatrix<f64>)>, DVector<f64>)> {
    let n = m.nrows();
    let mut correction = DVector::zeros(n);
    match nu {
        _ if nu.is_zero() => Ok((Vec::new(), Vec::new(), correction)),
        LevyMeasure::Atomic { atoms, .. } => {
            let mut out = Vec::with_capacity(atoms.len());
            for a in atoms {
                let w = m * &a.location;
                let inside_before = a.location.norm() < 1.0;
                let inside_after = w.norm() < 1.0;
                if inside_before != inside_after {
                    let sign = if inside_before { 1.0 } else { -1.0 };
                    correction += &w * (sign * a.mass);
                }
                if w.norm() > 0.0 {
                    out.push(Atom {
                        location: w,
                        mass: a.mass * weight,
                    });
                }
            }
            Ok((out, Vec::new(), correction))
        }
        LevyMeasure::SymmetricStable { .. } => Ok((Vec::new(), vec![(weight, m.clone())], correction)),
        LevyMeasure::Pushforward { components, .. } => Ok((
            Vec::new(),
            components.iter().map(|(w, inner)| (w * weight, m * inner)).collect(),
            correction,
        )),
        _ => Err(Error::Representation(
            "pushforward triplets are materialized for atomic and stable measures only".into(),
        )),
    }
}

fn base_of(nu: &LevyMeasure) -> LevyMeasure {
    match nu {
        LevyMeasure::Pushforward { base, .. } => (**base).clone(),
        other => other.clone(),
    }
}

fn assemble(nu: &LevyMeasure, n: usize, atoms: Vec<Atom>, comps: Vec<(f64, DMatrix<f64>)>) -> LevyMeasure {
    if !comps.is_empty() {
        LevyMeasure::Pushforward {
            base: Box::new(base_of(nu)),
            components: comps,
        }
    } else if !atoms.is_empty() {
        LevyMeasure::Atomic { dim: n, atoms }
    } else {
        LevyMeasure::zero(n)
    }
}

/// The triplet `(BQB^⊤, b_B, ν∘B^{-1})` of `B Z`.
pub fn pushforward_triplet(model: &OUModel) -> Result<LevyTriplet> {
    let b = &model.b;
    let (atoms, comps, correction) = image_components(&model.triplet.nu, b, 1.0)?;
    let q = b * &model.triplet.q * b.transpose();
    let drift = b * &model.triplet.drift + correction;
    let nu = assemble(&model.triplet.nu, model.n(), atoms, comps);
    Ok(LevyTriplet { q, drift, nu })
}

/// `Φ_t(ξ) = ∫_0^t Φ(B^⊤ e^{sA^⊤} ξ) ds`.
pub fn time_integrated_exponent(model: &OUModel, t: f64, xi: &DVector<f64>) -> Result<Complex64> {
    time_integrated_between(model, 0.0, t, xi)
}

/// `∫_s0^s1 Φ(B^⊤ e^{sA^⊤} ξ) ds`.
pub fn time_integrated_between(model: &OUModel, s0: f64, s1: f64, xi: &DVector<f64>) -> Result<Complex64> {
    if !(s0 >= 0.0 && s1 >= s0 && s1.is_finite()) {
        return Err(Error::invalid("integration window must satisfy 0 ≤ s0 ≤ s1 < ∞"));
    }
    if xi.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: xi.len(),
        });
    }
    if s1 == s0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let at = model.a.transpose();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let f = |s: f64| -> Complex64 {
        let eval = matrix_exponential(&at, s).and_then(|e| pushforward_exponent(model, &(e * xi)));
        match eval {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    };
    let res = integrate_complex_pieces(&f, &[s0, s1], S_TOL);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !res.converged && res.rel_error() > 1e-6 {
        return Err(Error::Accuracy {
            context: "time-integrated exponent".into(),
            estimate: res.rel_error(),
        });
    }
    Ok(res.value)
}

/// The triplet `(0, b_t, ν_t)` of `∫_0^t e^{sA} B dZ_s`, with `ν_t` realized
/// as a mixture over the nodes of a fixed composite Kronrod rule on `[0, t]`.
pub fn ou_pushforward_triplet(model: &OUModel, t: f64) -> Result<LevyTriplet> {
    ou_pushforward_triplet_with_panels(model, t, DEFAULT_PUSHFORWARD_PANELS)
}

pub fn ou_pushforward_triplet_with_panels(model: &OUModel, t: f64, panels: usize) -> Result<LevyTriplet> {
    if model.triplet.has_gaussian_part() {
        return Err(Error::precondition("the OU pushforward triplet requires Q = 0"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t must be finite and nonnegative"));
    }
    let n = model.n();
    if t == 0.0 {
        return Ok(LevyTriplet {
            q: DMatrix::zeros(n, n),
            drift: DVector::zeros(n),
            nu: LevyMeasure::zero(n),
        });
    }
    let bb = &model.b * &model.triplet.drift;
    let mut atoms = Vec::new();
    let mut comps = Vec::new();
    let mut drift_terms: Vec<DVector<f64>> = Vec::new();
    for (s, w) in composite_rule(0.0, t, panels) {
        let e = matrix_exponential(&model.a, s)?;
        let m = &e * &model.b;
        let (mut a, mut c, correction) = image_components(&model.triplet.nu, &m, w)?;
        atoms.append(&mut a);
        comps.append(&mut c);
        drift_terms.push((&e * &bb + correction) * w);
    }
    let mut drift = DVector::zeros(n);
    for i in 0..n {
        let xs: Vec<f64> = drift_terms.iter().map(|v| v[i]).collect();
        drift[i] = crate::quadrature::pairwise_sum(&xs);
    }
    Ok(LevyTriplet {
        q: DMatrix::zeros(n, n),
        drift,
        nu: assemble(&model.triplet.nu, n, atoms, comps),
    })
}
