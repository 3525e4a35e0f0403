//! Endpoint sampling of `X_t = e^{tA}x + ∫_0^t e^{(t-s)A} B dZ_s`.
//!
//! Compound-Poisson drivers use the jump-time series
//! `Σ_k e^{τ_k A} B U_k` over arrivals `τ_k ≤ t` (equal in law to the forward
//! kernel `e^{(t-τ_k)A}` because the arrival process is reversible on `[0, t]`).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{small_jump_second_moment, truncate, FiniteMeasure, LevyMeasure};
use crate::rng::RngStream;
use crate::spectral::{exponential_gramian, integrated_exponential, matrix_exponential};
use crate::symbol::OUModel;

/// Standard symmetric α-stable draw with `E e^{iξS} = e^{-|ξ|^α}`
/// (Chambers–Mallows–Stuck). `α = 2` gives `Normal(0, 2)`.
pub fn sample_stable(alpha: f64, rng: &mut RngStream) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::invalid("alpha must lie in (0, 2]"));
    }
    let v = PI * (rng.open01() - 0.5);
    let w: f64 = rng.sample(Exp1);
    if (alpha - 1.0).abs() < 1e-12 {
        return Ok(v.tan());
    }
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
    Ok(a * b)
}

/// Positive stable draw with Laplace transform `e^{-λ^ρ}`, `ρ ∈ (0, 1)` (Kanter).
pub fn sample_positive_stable(rho: f64, rng: &mut RngStream) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho must lie in (0, 1)"));
    }
    let u = rng.open01();
    let e: f64 = rng.sample(Exp1);
    let a = (rho * PI * u).sin().powf(rho / (1.0 - rho)) * ((1.0 - rho) * PI * u).sin()
        / (PI * u).sin().powf(1.0 / (1.0 - rho));
    Ok((a / e).powf((1.0 - rho) / rho))
}

/// Rotationally symmetric α-stable vector with `E e^{i⟨ξ,S⟩} = e^{-|ξ|^α}`,
/// drawn as `√W G` with `G ~ N(0, 2I)` and `W` positive `α/2`-stable.
pub fn sample_isotropic_stable(alpha: f64, dim: usize, rng: &mut RngStream) -> Result<DVector<f64>> {
    if dim == 1 {
        return Ok(DVector::from_element(1, sample_stable(alpha, rng)?));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::invalid("alpha must lie in (0, 2]"));
    }
    let w = if alpha >= 2.0 {
        1.0
    } else {
        sample_positive_stable(alpha / 2.0, rng)?
    };
    let scale = (2.0 * w).sqrt();
    Ok(DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
}

/// How the driver is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverMode {
    /// Jumps of size at least `epsilon` as a compound Poisson process; the
    /// drift, compensator and Gaussian part are kept exactly.
    CpTruncated { epsilon: f64 },
    /// Closed-form stable marginal.
    StableExact,
    /// Closed-form Gaussian marginal (`ν = 0`).
    GaussianExact,
    /// Euler scheme on `steps` driver increments.
    PathEuler { steps: usize },
}

/// One endpoint with the arrival times of the jumps that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointSample {
    pub value: DVector<f64>,
    pub jump_count: usize,
    pub jump_times: Vec<f64>,
}

/// `s ↦ e^{sA}`, with a scalar fast path.
#[derive(Debug, Clone)]
struct Flow {
    a: DMatrix<f64>,
    scalar: Option<f64>,
}

impl Flow {
    fn new(a: &DMatrix<f64>) -> Self {
        Flow {
            a: a.clone(),
            scalar: (a.nrows() == 1).then(|| a[(0, 0)]),
        }
    }

    fn apply(&self, s: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self.scalar {
            Some(a) => Ok(v * (a * s).exp()),
            None => Ok(matrix_exponential(&self.a, s)? * v),
        }
    }
}

/// Symmetric square root of a PSD matrix, clipping round-off negatives.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone)]
enum Plan {
    Cp {
        jumps: Option<FiniteMeasure>,
        gauss: Option<DMatrix<f64>>,
    },
    Stable {
        alpha: f64,
        /// `X_t - mean = spread · S` with `S` standard isotropic.
        spread: DMatrix<f64>,
    },
    Gaussian {
        root: DMatrix<f64>,
    },
    Euler {
        steps: usize,
        jumps: Option<FiniteMeasure>,
        stable: Option<(f64, f64, usize)>,
        q_root: DMatrix<f64>,
        drift: DVector<f64>,
    },
}

/// Endpoint sampler for a fixed model, mode and horizon.
#[derive(Debug, Clone)]
pub struct EndpointSampler {
    model: OUModel,
    t: f64,
    mode: DriverMode,
    flow: Flow,
    e_ta: DMatrix<f64>,
    /// Deterministic contribution of the drift and the compensator.
    shift: DVector<f64>,
    plan: Plan,
    neglected_second_moment: f64,
    forward_kernel: bool,
}

fn mode_err(msg: &str) -> Error {
    Error::Mode(msg.into())
}

impl EndpointSampler {
    pub fn new(model: &OUModel, mode: DriverMode, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("t must be finite and nonnegative"));
        }
        let n = model.n();
        let b = &model.b;
        let nu = &model.triplet.nu;
        let int_e = integrated_exponential(&model.a, t)?;
        let bqb = b * &model.triplet.q * b.transpose();
        let gauss_root = || -> Result<Option<DMatrix<f64>>> {
            if model.triplet.has_gaussian_part() {
                Ok(Some(psd_sqrt(&exponential_gramian(&model.a, &bqb, t)?)))
            } else {
                Ok(None)
            }
        };
        let mut neglected = 0.0;
        let (plan, drift) = match mode {
            DriverMode::CpTruncated { epsilon } => {
                let (jumps, mean) = if nu.is_zero() {
                    (None, DVector::zeros(model.d()))
                } else {
                    let f = truncate(nu, epsilon)?;
                    neglected = small_jump_second_moment(nu, epsilon);
                    let m = f.small_jump_mean()?;
                    (Some(f), m)
                };
                (
                    Plan::Cp {
                        jumps,
                        gauss: gauss_root()?,
                    },
                    &model.triplet.drift + mean,
                )
            }
            DriverMode::StableExact => {
                let LevyMeasure::SymmetricStable { alpha, scale, .. } = nu else {
                    return Err(mode_err("stable_exact needs a rotationally symmetric stable driver"));
                };
                if model.triplet.has_gaussian_part() {
                    return Err(mode_err("stable_exact needs Q = 0"));
                }
                let spread = stable_spread(model, *alpha, *scale, t)?;
                (Plan::Stable { alpha: *alpha, spread }, model.triplet.drift.clone())
            }
            DriverMode::GaussianExact => {
                if !nu.is_zero() {
                    return Err(mode_err("gaussian_exact needs ν = 0"));
                }
                let root = gauss_root()?.unwrap_or_else(|| DMatrix::zeros(n, n));
                (Plan::Gaussian { root }, model.triplet.drift.clone())
            }
            DriverMode::PathEuler { steps } => {
                if steps == 0 {
                    return Err(Error::invalid("path_euler needs at least one step"));
                }
                let h = t / steps as f64;
                let (jumps, stable, mean) = match nu {
                    LevyMeasure::SymmetricStable { alpha, scale, dim } => {
                        (None, Some((*alpha, (scale * h).powf(1.0 / alpha), *dim)), DVector::zeros(model.d()))
                    }
                    _ if nu.is_zero() => (None, None, DVector::zeros(model.d())),
                    _ => match nu.total_mass() {
                        Some(_) => {
                            let f = FiniteMeasure::new(nu.clone())?;
                            let m = f.small_jump_mean()?;
                            (Some(f), None, m)
                        }
                        None => return Err(mode_err("path_euler needs a finite or stable Lévy measure")),
                    },
                };
                let q_root = psd_sqrt(&(&model.triplet.q * h));
                let drift = &model.triplet.drift + &mean;
                (
                    Plan::Euler {
                        steps,
                        jumps,
                        stable,
                        q_root,
                        drift: drift.clone(),
                    },
                    DVector::zeros(model.d()),
                )
            }
        };
        // Z_t = (jumps) + (Gaussian) - t (b + m), so the flow adds -∫e^{sA}ds B (b + m).
        let shift = -(int_e * (b * drift));
        Ok(EndpointSampler {
            model: model.clone(),
            t,
            mode,
            flow: Flow::new(&model.a),
            e_ta: matrix_exponential(&model.a, t)?,
            shift,
            plan,
            neglected_second_moment: neglected,
            forward_kernel: false,
        })
    }

    /// Uses the kernel `e^{(t-τ)A}` instead of `e^{τA}` for the jump series.
    pub fn with_forward_kernel(mut self) -> Self {
        self.forward_kernel = true;
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn mode(&self) -> DriverMode {
        self.mode
    }

    /// `∫_{|z|<ε} |z|² ν(dz)` of the jumps discarded by truncation.
    pub fn neglected_second_moment(&self) -> f64 {
        self.neglected_second_moment
    }

    /// Jump intensity of the simulated compound Poisson part.
    pub fn jump_rate(&self) -> f64 {
        match &self.plan {
            Plan::Cp { jumps: Some(f), .. } | Plan::Euler { jumps: Some(f), .. } => f.total_mass(),
            _ => 0.0,
        }
    }

    fn check_start(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.model.n() {
            return Err(Error::DimensionMismatch {
                expected: self.model.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Draws the endpoint together with its jump times.
    pub fn sample_detailed(&self, x: &DVector<f64>, rng: &mut RngStream) -> Result<EndpointSample> {
        self.check_start(x)?;
        if self.t == 0.0 {
            return Ok(EndpointSample {
                value: x.clone(),
                jump_count: 0,
                jump_times: Vec::new(),
            });
        }
        let mut value = &self.e_ta * x + &self.shift;
        let mut jump_times = Vec::new();
        match &self.plan {
            Plan::Cp { jumps, gauss } => {
                if let Some(f) = jumps {
                    let series = self.jump_series(f, rng, &mut jump_times)?;
                    value += series;
                }
                if let Some(root) = gauss {
                    value += root * standard_normal(self.model.n(), rng);
                }
            }
            Plan::Stable { alpha, spread } => {
                value += spread * sample_isotropic_stable(*alpha, spread.ncols(), rng)?;
            }
            Plan::Gaussian { root } => {
                value += root * standard_normal(self.model.n(), rng);
            }
            Plan::Euler {
                steps,
                jumps,
                stable,
                q_root,
                drift,
            } => {
                value = self.euler(x, *steps, jumps.as_ref(), *stable, q_root, drift, rng, &mut jump_times)?;
            }
        }
        Ok(EndpointSample {
            value,
            jump_count: jump_times.len(),
            jump_times,
        })
    }

    pub fn sample(&self, x: &DVector<f64>, rng: &mut RngStream) -> Result<DVector<f64>> {
        Ok(self.sample_detailed(x, rng)?.value)
    }

    fn jump_series(&self, f: &FiniteMeasure, rng: &mut RngStream, times: &mut Vec<f64>) -> Result<DVector<f64>> {
        let rate = f.total_mass();
        let mut acc = DVector::zeros(self.model.n());
        if rate <= 0.0 {
            return Ok(acc);
        }
        let mut tau = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            tau += gap / rate;
            if tau > self.t {
                break;
            }
            let u = f.sample(rng)?;
            let s = if self.forward_kernel { self.t - tau } else { tau };
            acc += self.flow.apply(s, &(&self.model.b * u))?;
            times.push(tau);
        }
        Ok(acc)
    }

    #[allow(clippy::too_many_arguments)]
    fn euler(
        &self,
        x: &DVector<f64>,
        steps: usize,
        jumps: Option<&FiniteMeasure>,
        stable: Option<(f64, f64, usize)>,
        q_root: &DMatrix<f64>,
        drift: &DVector<f64>,
        rng: &mut RngStream,
        times: &mut Vec<f64>,
    ) -> Result<DVector<f64>> {
        let h = self.t / steps as f64;
        let d = self.model.d();
        let mut state = x.clone();
        let mut next_jump = f64::INFINITY;
        let rate = jumps.map_or(0.0, |f| f.total_mass());
        if rate > 0.0 {
            next_jump = rng.sample::<f64, _>(Exp1) / rate;
        }
        for k in 0..steps {
            let end = (k + 1) as f64 * h;
            let mut dz = -(drift * h);
            if self.model.triplet.has_gaussian_part() {
                dz += q_root * standard_normal(d, rng);
            }
            if let Some((alpha, scale, dim)) = stable {
                dz += sample_isotropic_stable(alpha, dim, rng)? * scale;
            }
            if let Some(f) = jumps {
                while next_jump <= end {
                    dz += f.sample(rng)?;
                    times.push(next_jump);
                    next_jump += rng.sample::<f64, _>(Exp1) / rate;
                }
            }
            state = &state + &self.model.a * &state * h + &self.model.b * dz;
        }
        Ok(state)
    }
}

fn standard_normal(n: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Matrix `M` with `∫_0^t e^{sA} B dZ_s - mean = M S` for a standard isotropic
/// stable `S`. Exists when `n = 1`, or when `e^{sA}B` is a scalar multiple of a
/// fixed-norm isometry (`A = λI + K`, `K` skew, `B B^⊤ = β² I`).
fn stable_spread(model: &OUModel, alpha: f64, scale: f64, t: f64) -> Result<DMatrix<f64>> {
    let n = model.n();
    let b = &model.b;
    let a = &model.a;
    if n == 1 {
        // Re Φ_t(ξ) = scale |b|^α |ξ|^α ∫_0^t e^{αas} ds
        let bn = b.row(0).norm();
        let rate = alpha * a[(0, 0)];
        let integral = if rate.abs() < 1e-14 {
            t
        } else {
            (rate * t).exp_m1() / rate
        };
        let c = (scale * integral).powf(1.0 / alpha) * bn;
        return Ok(DMatrix::from_element(1, 1, c));
    }
    let lambda = a.trace() / n as f64;
    let skew = a - DMatrix::identity(n, n) * lambda;
    let tol = 1e-12 * (1.0 + a.amax());
    if (&skew + skew.transpose()).amax() > tol || model.d() != n {
        return Err(Error::Mode(
            "stable_exact in several dimensions needs A = λI + skew and a square B".into(),
        ));
    }
    let bbt = b * b.transpose();
    let beta2 = bbt.trace() / n as f64;
    if (&bbt - DMatrix::identity(n, n) * beta2).amax() > 1e-12 * (1.0 + beta2) {
        return Err(Error::Mode("stable_exact in several dimensions needs B B^T = β² I".into()));
    }
    let rate = alpha * lambda;
    let integral = if rate.abs() < 1e-14 {
        t
    } else {
        (rate * t).exp_m1() / rate
    };
    let c = (scale * integral).powf(1.0 / alpha) * beta2.sqrt();
    Ok(DMatrix::identity(n, n) * c)
}

/// Compound-Poisson endpoint: `e^{tA}x + Σ_k e^{τ_k A} B U_k` with `U_k ~ ν̄_ε`.
/// Drift and compensator are not included; see [`sample_ou_endpoint`].
pub fn sample_compound_poisson_ou(
    model: &OUModel,
    epsilon: f64,
    t: f64,
    x: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<EndpointSample> {
    let jumps = truncate(&model.triplet.nu, epsilon)?;
    if jumps.total_mass() <= 0.0 {
        return Err(Error::Degenerate("truncated Lévy measure has zero mass".into()));
    }
    let mut s = EndpointSampler::new(model, DriverMode::CpTruncated { epsilon }, t)?;
    s.shift = DVector::zeros(model.n());
    s.plan = Plan::Cp {
        jumps: Some(jumps),
        gauss: None,
    };
    s.sample_detailed(x, rng)
}

/// One draw of `X_t` started at `x` under `mode`.
pub fn sample_ou_endpoint(
    model: &OUModel,
    t: f64,
    x: &DVector<f64>,
    mode: DriverMode,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    EndpointSampler::new(model, mode, t)?.sample(x, rng)
}

/// `count` endpoints, draw `i` using stream `(seed, tag, i)`. The result does
/// not depend on `workers`.
pub fn sample_endpoints(
    sampler: &EndpointSampler,
    x: &DVector<f64>,
    count: usize,
    seed: u64,
    tag: u16,
    workers: usize,
) -> Result<Vec<DVector<f64>>> {
    let draw = |i: usize| sampler.sample(x, &mut RngStream::for_item(seed, tag, i as u64));
    parallel_map(count, workers, draw)
}

/// Evaluates `f(0..count)` on `workers` threads, preserving index order.
pub fn parallel_map<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(&f).collect();
    }
    let chunk = count.div_ceil(workers);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = (w * chunk).min(count);
                let hi = ((w + 1) * chunk).min(count);
                scope.spawn(move || (lo..hi).map(f).collect::<Result<Vec<T>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(count);
        for h in handles {
            out.extend(h.join().expect("sampling worker panicked")?);
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{Atom, PiecewiseDensity};
    use crate::stats::{cauchy_cdf, ks_one_sample, normal_cdf};
    use crate::symbol::LevyTriplet;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn zero_horizon_returns_start() {
        let nu = LevyMeasure::atomic(vec![Atom::new(vec![1.0], 2.0)]).unwrap();
        let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap();
        let s = sample_compound_poisson_ou(&m, 0.1, 0.0, &v1(3.0), &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(s.value, v1(3.0));
        assert_eq!(s.jump_count, 0);
    }

    #[test]
    fn counting_process_value_equals_jump_count() {
        let nu = LevyMeasure::atomic(vec![Atom::new(vec![1.0], 2.0)]).unwrap();
        let m = OUModel::scalar(0.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap();
        let mut rng = RngStream::new(7, 0);
        let mut total = 0usize;
        for _ in 0..2000 {
            let s = sample_compound_poisson_ou(&m, 0.5, 1.5, &v1(0.0), &mut rng).unwrap();
            assert_eq!(s.value[0], s.jump_count as f64);
            assert!(s.jump_times.windows(2).all(|w| w[0] < w[1]));
            total += s.jump_count;
        }
        let mean = total as f64 / 2000.0;
        assert!((mean - 3.0).abs() < 4.0 * (3.0f64 / 2000.0).sqrt());
    }

    #[test]
    fn stable_draws_match_cauchy_and_gaussian() {
        let mut rng = RngStream::new(3, 1);
        let c: Vec<f64> = (0..20000).map(|_| sample_stable(1.0, &mut rng).unwrap()).collect();
        assert!(ks_one_sample(&c, |x| cauchy_cdf(x, 1.0)).p_value > 1e-3);
        let g: Vec<f64> = (0..20000).map(|_| sample_stable(2.0, &mut rng).unwrap()).collect();
        assert!(ks_one_sample(&g, |x| normal_cdf(x / 2f64.sqrt())).p_value > 1e-3);
    }

    #[test]
    fn subgaussian_route_matches_cms_in_one_dimension() {
        // The projection of an isotropic stable vector is standard stable.
        let mut rng = RngStream::new(5, 2);
        let c: Vec<f64> = (0..20000)
            .map(|_| sample_isotropic_stable(1.0, 2, &mut rng).unwrap()[0])
            .collect();
        assert!(ks_one_sample(&c, |x| cauchy_cdf(x, 1.0)).p_value > 1e-3);
    }

    #[test]
    fn gaussian_exact_ou_marginal() {
        let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::gaussian(DMatrix::from_element(1, 1, 2.0)).unwrap()).unwrap();
        let t: f64 = 0.7;
        let s = EndpointSampler::new(&m, DriverMode::GaussianExact, t).unwrap();
        let mut rng = RngStream::new(9, 0);
        let xs: Vec<f64> = (0..20000).map(|_| s.sample(&v1(1.0), &mut rng).unwrap()[0]).collect();
        let mean = (-t).exp();
        let sd = (1.0 - (-2.0 * t).exp()).sqrt();
        assert!(ks_one_sample(&xs, |x| normal_cdf((x - mean) / sd)).p_value > 1e-3);
    }

    #[test]
    fn incompatible_modes_are_rejected() {
        let nu = LevyMeasure::density(PiecewiseDensity::uniform(0.0, 1.0, 1.0).unwrap()).unwrap();
        let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap();
        assert!(matches!(
            EndpointSampler::new(&m, DriverMode::StableExact, 1.0),
            Err(Error::Mode(_))
        ));
        assert!(matches!(
            EndpointSampler::new(&m, DriverMode::GaussianExact, 1.0),
            Err(Error::Mode(_))
        ));
    }

    #[test]
    fn parallel_sampling_is_worker_independent() {
        let nu = LevyMeasure::stable(1.5, 1.0, 1).unwrap();
        let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap();
        let s = EndpointSampler::new(&m, DriverMode::CpTruncated { epsilon: 0.05 }, 1.0).unwrap();
        let a = sample_endpoints(&s, &v1(0.0), 257, 11, 3, 1).unwrap();
        let b = sample_endpoints(&s, &v1(0.0), 257, 11, 3, 4).unwrap();
        assert_eq!(a, b);
    }
}
