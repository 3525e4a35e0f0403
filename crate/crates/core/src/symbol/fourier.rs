//! Densities of OU marginals by discrete Fourier inversion of `e^{-Φ_t}`.
//!
//! With `ψ(ξ) = e^{-Φ_t(ξ)}` the density of `X_t - e^{tA}x` is
//! `p(z) = (2π)^{-n} ∫ e^{-i⟨ξ,z⟩} ψ(ξ) dξ`. Sampling `ψ` at spacing `h` and
//! applying a DFT yields the periodization of `p` over `2π/h`, so the error is
//! the aliased tail mass plus the discarded `ψ` beyond the frequency cutoff.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use super::{finite_symbol_bound, time_integrated_exponent, OUModel};
use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;

const CUTOFF_SEARCH_LIMIT: f64 = 1e6;

/// Symmetric lattice `k·spacing`, `k ∈ [-half_count, half_count]` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub dim: usize,
    pub spacing: f64,
    pub half_count: usize,
}

impl Lattice {
    pub fn new(dim: usize, spacing: f64, half_count: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid("lattices are one- or two-dimensional"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) || half_count == 0 {
            return Err(Error::invalid("lattice spacing and half_count must be positive"));
        }
        Ok(Lattice {
            dim,
            spacing,
            half_count,
        })
    }

    /// Coordinates along one axis.
    pub fn axis(&self) -> Vec<f64> {
        let h = self.half_count as i64;
        (-h..=h).map(|k| k as f64 * self.spacing).collect()
    }

    pub fn points_per_axis(&self) -> usize {
        2 * self.half_count + 1
    }

    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest coordinate magnitude.
    pub fn extent(&self) -> f64 {
        self.half_count as f64 * self.spacing
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FourierOptions {
    /// `Re Φ_t` level at the frequency cutoff (`e^{-40} < 1e-16`).
    pub cutoff_level: f64,
    /// Minimum period in units of the law's scale `1/ξ_1`, `Re Φ_t(ξ_1) = 1`.
    pub period_scales: f64,
    pub period_scales_2d: f64,
    /// Period for L1 differences, in scale units.
    pub l1_period_scales: f64,
    /// Internal points per scale unit for L1 differences.
    pub l1_resolution: f64,
    pub max_len_1d: usize,
    pub max_len_2d: usize,
}

impl Default for FourierOptions {
    fn default() -> Self {
        FourierOptions {
            cutoff_level: 40.0,
            period_scales: 4096.0,
            period_scales_2d: 64.0,
            l1_period_scales: 1024.0,
            l1_resolution: 1000.0,
            max_len_1d: 1 << 23,
            max_len_2d: 1 << 10,
        }
    }
}

fn re_phi(model: &OUModel, t: f64, xi: &DVector<f64>) -> Result<f64> {
    Ok(time_integrated_exponent(model, t, xi)?.re)
}

/// Frequency cutoff along `dir` and the radius where `Re Φ_t` first reaches 1.
fn frequency_scales(model: &OUModel, t: f64, dir: &DVector<f64>, level: f64) -> Result<(f64, f64)> {
    if finite_symbol_bound(model).is_some_and(|b| b * t < level) {
        return Err(Error::precondition(
            "characteristic function is not integrable: the driver is compound Poisson",
        ));
    }
    let mut cut = 1.0;
    while re_phi(model, t, &(dir * cut))? < level {
        cut *= 2.0;
        if cut > CUTOFF_SEARCH_LIMIT {
            return Err(Error::precondition(
                "characteristic function is not integrable: Re Φ_t stays bounded on the search range",
            ));
        }
    }
    let mut lo = cut;
    while re_phi(model, t, &(dir * lo))? >= 1.0 {
        lo /= 2.0;
        if lo < 1e-12 {
            return Ok((cut, lo));
        }
    }
    let mut hi = (2.0 * lo).min(cut);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if re_phi(model, t, &(dir * mid))? >= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((cut, hi))
}

fn check_time(model: &OUModel, t: f64, dim: usize) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t must be positive and finite"));
    }
    if model.n() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: model.n(),
        });
    }
    Ok(())
}

/// Sampled one-dimensional spectrum `ψ(jh)` ready for repeated inversion with
/// Hermitian multipliers.
pub struct FourierPlan {
    spacing: f64,
    len: usize,
    cutoff: f64,
    scale: f64,
    spectrum: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
}

impl FourierPlan {
    /// Builds the spectrum for a one-dimensional model. `choose` receives the
    /// frequency cutoff and the law's scale and returns the internal spacing
    /// (at most `π/cutoff`) and the minimum period.
    pub fn build<C>(model: &OUModel, t: f64, opts: &FourierOptions, choose: C) -> Result<Self>
    where
        C: FnOnce(f64, f64) -> (f64, f64),
    {
        check_time(model, t, 1)?;
        let dir = DVector::from_element(1, 1.0);
        let (cutoff, xi1) = frequency_scales(model, t, &dir, opts.cutoff_level)?;
        let scale = 1.0 / xi1;
        let (spacing, period) = choose(cutoff, scale);
        if !(spacing > 0.0 && spacing * cutoff <= PI * (1.0 + 1e-12)) {
            return Err(Error::invalid("internal spacing must resolve the frequency cutoff"));
        }
        let len = ((period / spacing).ceil() as usize).next_power_of_two().max(16);
        if len > opts.max_len_1d {
            return Err(Error::precondition(format!(
                "Fourier grid of {len} points exceeds the limit {}",
                opts.max_len_1d
            )));
        }
        let h = 2.0 * PI / (len as f64 * spacing);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
        let half = len / 2;
        for j in 0..=half {
            let xi = j as f64 * h;
            if xi > cutoff {
                break;
            }
            let psi = (-time_integrated_exponent(model, t, &DVector::from_element(1, xi))?).exp();
            if j == half {
                spectrum[j] = Complex64::new(psi.re, 0.0);
            } else {
                spectrum[j] = psi;
                if j > 0 {
                    spectrum[len - j] = psi.conj();
                }
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(FourierPlan {
            spacing,
            len,
            cutoff,
            scale,
            spectrum,
            fft,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// `1/ξ_1` with `Re Φ_t(ξ_1) = 1`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn period(&self) -> f64 {
        self.len as f64 * self.spacing
    }

    /// Coordinate of wrapped index `k`.
    pub fn point(&self, k: usize) -> f64 {
        let k = k as i64;
        let n = self.len as i64;
        (if k < n / 2 { k } else { k - n }) as f64 * self.spacing
    }

    /// Wrapped index of signed lattice index `k`.
    pub fn index(&self, k: i64) -> usize {
        k.rem_euclid(self.len as i64) as usize
    }

    /// Inverts `multiplier(ξ)·ψ(ξ)`, returning real values at wrapped indices.
    /// The multiplier must satisfy `m(-ξ) = conj m(ξ)`.
    pub fn invert<M: Fn(f64) -> Complex64>(&self, multiplier: M) -> Vec<f64> {
        let n = self.len;
        let h = 2.0 * PI / (n as f64 * self.spacing);
        let mut buf: Vec<Complex64> = self
            .spectrum
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                if s == Complex64::new(0.0, 0.0) {
                    return s;
                }
                let jj = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                s * multiplier(jj * h)
            })
            .collect();
        self.fft.process(&mut buf);
        let c = h / (2.0 * PI);
        buf.into_iter().map(|v| v.re * c).collect()
    }
}

/// Density values on a lattice, row-major over `(x_1, x_2)` in two dimensions.
#[derive(Debug, Clone, Serialize)]
pub struct DensityGrid {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    /// Most negative value before clipping at zero.
    pub min_raw: f64,
    /// Riemann sum of the clipped values over the lattice.
    pub grid_mass: f64,
    /// Riemann sum of the clipped values over the whole internal period.
    pub period_mass: f64,
    pub internal_spacing: f64,
    pub transform_len: usize,
    pub frequency_cutoff: f64,
}

impl DensityGrid {
    /// Coordinates of entry `i` of `values`.
    pub fn coordinates(&self, i: usize) -> Vec<f64> {
        let axis = self.lattice.axis();
        match self.lattice.dim {
            1 => vec![axis[i]],
            _ => {
                let m = self.lattice.points_per_axis();
                vec![axis[i / m], axis[i % m]]
            }
        }
    }
}

/// Density of `X_t - e^{tA}x` on `lattice`.
pub fn density_via_fourier(model: &OUModel, t: f64, lattice: &Lattice) -> Result<DensityGrid> {
    density_via_fourier_with(model, t, lattice, &FourierOptions::default())
}

pub fn density_via_fourier_with(
    model: &OUModel,
    t: f64,
    lattice: &Lattice,
    opts: &FourierOptions,
) -> Result<DensityGrid> {
    match lattice.dim {
        1 => density_1d(model, t, lattice, opts),
        _ => density_2d(model, t, lattice, opts),
    }
}

fn clip(raw: &[f64]) -> (Vec<f64>, f64) {
    let min_raw = raw.iter().copied().fold(f64::INFINITY, f64::min);
    (raw.iter().map(|v| v.max(0.0)).collect(), min_raw)
}

fn density_1d(model: &OUModel, t: f64, lattice: &Lattice, opts: &FourierOptions) -> Result<DensityGrid> {
    let x = lattice.extent();
    let plan = FourierPlan::build(model, t, opts, |cut, scale| {
        let r = (lattice.spacing * cut / PI).ceil().max(1.0);
        (lattice.spacing / r, (4.0 * x).max(opts.period_scales * scale))
    })?;
    let r = (lattice.spacing / plan.spacing()).round() as i64;
    let raw = plan.invert(|_| Complex64::new(1.0, 0.0));
    let (all, min_raw) = clip(&raw);
    let h = lattice.half_count as i64;
    let values: Vec<f64> = (-h..=h).map(|k| all[plan.index(k * r)]).collect();
    Ok(DensityGrid {
        lattice: *lattice,
        grid_mass: pairwise_sum(&values) * lattice.spacing,
        period_mass: pairwise_sum(&all) * plan.spacing(),
        values,
        min_raw,
        internal_spacing: plan.spacing(),
        transform_len: plan.len(),
        frequency_cutoff: plan.cutoff(),
    })
}

fn density_2d(model: &OUModel, t: f64, lattice: &Lattice, opts: &FourierOptions) -> Result<DensityGrid> {
    check_time(model, t, 2)?;
    let mut cutoff: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..16 {
        let th = PI * k as f64 / 16.0;
        let dir = DVector::from_vec(vec![th.cos(), th.sin()]);
        let (c, xi1) = frequency_scales(model, t, &dir, opts.cutoff_level)?;
        cutoff = cutoff.max(c);
        scale = scale.max(1.0 / xi1);
    }
    let x = lattice.extent();
    let r = (lattice.spacing * cutoff / PI).ceil().max(1.0);
    let spacing = lattice.spacing / r;
    let period = (4.0 * x).max(opts.period_scales_2d * scale);
    let mut n = ((period / spacing).ceil() as usize).next_power_of_two().max(16);
    if n > opts.max_len_2d {
        n = opts.max_len_2d;
        if (n as f64) * spacing < 2.5 * x {
            return Err(Error::precondition(
                "two-dimensional lattice is too fine for the transform size limit",
            ));
        }
        warn!("two-dimensional Fourier period reduced to {}", n as f64 * spacing);
    }
    let h = 2.0 * PI / (n as f64 * spacing);
    let signed = |j: usize| if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    for j2 in 0..=n / 2 {
        for j1 in 0..n {
            let xi = DVector::from_vec(vec![signed(j1) * h, j2 as f64 * h]);
            if xi.norm() > cutoff {
                continue;
            }
            let psi = (-time_integrated_exponent(model, t, &xi)?).exp();
            buf[j1 * n + j2] = psi;
            if j2 > 0 && j2 < n / 2 {
                buf[((n - j1) % n) * n + (n - j2)] = psi.conj();
            }
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let mut tr = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            tr[j * n + i] = buf[i * n + j];
        }
    }
    for row in tr.chunks_mut(n) {
        fft.process(row);
    }
    let c = (h / (2.0 * PI)).powi(2);
    // tr is indexed (k2, k1)
    let raw: Vec<f64> = tr.iter().map(|v| v.re * c).collect();
    let (all, min_raw) = clip(&raw);
    let hc = lattice.half_count as i64;
    let r = r as i64;
    let wrap = |k: i64| (k * r).rem_euclid(n as i64) as usize;
    let mut values = Vec::with_capacity(lattice.len());
    for k1 in -hc..=hc {
        for k2 in -hc..=hc {
            values.push(all[wrap(k2) * n + wrap(k1)]);
        }
    }
    let cell = lattice.spacing * lattice.spacing;
    Ok(DensityGrid {
        lattice: *lattice,
        grid_mass: pairwise_sum(&values) * cell,
        period_mass: pairwise_sum(&all) * spacing * spacing,
        values,
        min_raw,
        internal_spacing: spacing,
        transform_len: n,
        frequency_cutoff: cutoff,
    })
}

/// `∫|p(z) - p(z - shift)| dz` for a one-dimensional model, in `[0, 2]`.
pub fn shifted_difference_l1(model: &OUModel, t: f64, shift: f64) -> Result<f64> {
    if !shift.is_finite() {
        return Err(Error::invalid("shift must be finite"));
    }
    check_time(model, t, 1)?;
    if shift == 0.0 {
        return Ok(0.0);
    }
    let opts = FourierOptions::default();
    let plan = FourierPlan::build(model, t, &opts, |cut, scale| {
        (
            (PI / cut).min(scale / opts.l1_resolution),
            (8.0 * shift.abs()).max(opts.l1_period_scales * scale),
        )
    })?;
    let q = plan.invert(|xi| Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, xi * shift));
    let abs: Vec<f64> = q.iter().map(|v| v.abs()).collect();
    Ok((pairwise_sum(&abs) * plan.spacing()).min(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMeasure;
    use crate::stats::{normal_cdf, normal_pdf};
    use crate::symbol::LevyTriplet;
    use nalgebra::DMatrix;

    fn gaussian_model(a: f64) -> OUModel {
        OUModel::scalar(a, 1.0, LevyTriplet::gaussian(DMatrix::identity(1, 1)).unwrap()).unwrap()
    }

    fn cauchy_model() -> OUModel {
        let nu = LevyMeasure::stable(1.0, 1.0, 1).unwrap();
        OUModel::scalar(0.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap()
    }

    #[test]
    fn standard_normal_density() {
        let lat = Lattice::new(1, 0.05, 200).unwrap();
        let g = density_via_fourier(&gaussian_model(0.0), 1.0, &lat).unwrap();
        for (i, v) in g.values.iter().enumerate() {
            let x = g.coordinates(i)[0];
            assert!((v - normal_pdf(x)).abs() < 1e-8, "x {x}");
        }
        assert!((g.grid_mass - 1.0).abs() < 1e-4);
    }

    #[test]
    fn cauchy_density_and_symmetry() {
        let lat = Lattice::new(1, 0.1, 100).unwrap();
        let g = density_via_fourier(&cauchy_model(), 1.0, &lat).unwrap();
        let m = g.values.len();
        for (i, v) in g.values.iter().enumerate() {
            let x = g.coordinates(i)[0];
            assert!((v - 1.0 / (PI * (1.0 + x * x))).abs() < 1e-6);
            assert!((v - g.values[m - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_l1_difference_closed_form() {
        let model = gaussian_model(-1.0);
        let t: f64 = 0.8;
        let var = (1.0 - (-2.0 * t).exp()) / 2.0;
        let s = 0.6;
        let exact = 2.0 * (2.0 * normal_cdf(s / (2.0 * var.sqrt())) - 1.0);
        let v = shifted_difference_l1(&model, t, s).unwrap();
        assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
    }

    #[test]
    fn two_dimensional_gaussian() {
        let model = OUModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            LevyTriplet::gaussian(DMatrix::identity(2, 2)).unwrap(),
        )
        .unwrap();
        let lat = Lattice::new(2, 0.25, 24).unwrap();
        let g = density_via_fourier(&model, 1.0, &lat).unwrap();
        for (i, v) in g.values.iter().enumerate() {
            let c = g.coordinates(i);
            let exact = normal_pdf(c[0]) * normal_pdf(c[1]);
            assert!((v - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn bounded_symbol_is_rejected() {
        let nu = LevyMeasure::atomic(vec![crate::levy::Atom::new(vec![1.0], 1.0)]).unwrap();
        let model = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap();
        let lat = Lattice::new(1, 0.1, 10).unwrap();
        assert!(matches!(density_via_fourier(&model, 1.0, &lat), Err(Error::Precondition(_))));
    }
}
