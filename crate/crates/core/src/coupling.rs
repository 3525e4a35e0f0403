//! Mineka coupling of the compound-Poisson jump series, coupling times of
//! the resulting lazy walks, and exact reflection oracles for those walks.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{shifted_overlap, shifted_overlap_infimum, truncate, FiniteMeasure};
use crate::rng::RngStream;
use crate::spectral::{matrix_exponential, op_norm, spectral_report, SpectralReport, DEFAULT_CA_GRID, DEFAULT_TIME_HORIZON};
use crate::symbol::OUModel;

/// One draw `(U, ΔU)` with `U ~ ν̄`, `U + ΔU ~ ν̄` and `ΔU ∈ {-a, 0, a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinekaDraw {
    pub u: DVector<f64>,
    pub delta_u: DVector<f64>,
    /// `+1`, `0` or `-1` according to `ΔU = +a, 0, -a`.
    pub sign: i8,
}

fn check_probability(nu_bar: &FiniteMeasure) -> Result<()> {
    if (nu_bar.total_mass() - 1.0).abs() > 1e-9 {
        return Err(Error::precondition(format!(
            "Mineka pairs need a probability measure, total mass is {}",
            nu_bar.total_mass()
        )));
    }
    Ok(())
}

/// Samples the Mineka table
/// `ΔU = a` w.p. `½ ν̄∧(δ_{-a}*ν̄)`, `ΔU = -a` w.p. `½ ν̄∧(δ_a*ν̄)`, else `0`.
///
/// Draws `U ~ ν̄` and accepts `+a` with probability `½ min(1, ρ(U+a)/ρ(U))`
/// and `-a` with `½ min(1, ρ(U-a)/ρ(U))`, where `ρ` is the density or the atom
/// weight; this reproduces each row of the table exactly.
pub fn mineka_pair(nu_bar: &FiniteMeasure, a: &DVector<f64>, rng: &mut RngStream) -> Result<MinekaDraw> {
    check_probability(nu_bar)?;
    if a.len() != nu_bar.dim() {
        return Err(Error::DimensionMismatch {
            expected: nu_bar.dim(),
            got: a.len(),
        });
    }
    let u = nu_bar.sample(rng)?;
    let zero = DVector::zeros(a.len());
    if a.iter().all(|v| *v == 0.0) {
        return Ok(MinekaDraw { u, delta_u: zero, sign: 0 });
    }
    let here = nu_bar.weight_at(&u)?;
    let up = nu_bar.weight_at(&(&u + a))?;
    let down = nu_bar.weight_at(&(&u - a))?;
    let p_up = 0.5 * (up / here).min(1.0);
    let p_down = 0.5 * (down / here).min(1.0);
    let v = rng.open01();
    let (delta_u, sign) = if v < p_up {
        (a.clone(), 1)
    } else if v < p_up + p_down {
        (-a, -1)
    } else {
        (zero, 0)
    };
    Ok(MinekaDraw { u, delta_u, sign })
}

/// Orthogonal map with `R a = |a| e_1` and determinant `+1` when `n ≥ 2`:
/// a Householder reflection composed with the reflection `e_2 ↦ -e_2`.
#[derive(Debug, Clone)]
pub struct RotationOp {
    pub target: DVector<f64>,
    pub matrix: DMatrix<f64>,
}

impl RotationOp {
    pub fn new(target: &DVector<f64>) -> Result<Self> {
        let n = target.len();
        let norm = target.norm();
        if n == 0 || !(norm > 0.0) {
            return Err(Error::invalid("rotation target must be a nonzero vector"));
        }
        if n == 1 {
            return Ok(RotationOp {
                target: target.clone(),
                matrix: DMatrix::from_element(1, 1, target[0].signum()),
            });
        }
        let mut v = target.clone();
        v[0] -= norm;
        let vn = v.norm_squared();
        let mut h = DMatrix::identity(n, n);
        let householder = vn > 1e-30 * norm * norm;
        if householder {
            h -= &v * v.transpose() * (2.0 / vn);
            // Reflect e_2 to restore orientation.
            for j in 0..n {
                h[(1, j)] = -h[(1, j)];
            }
        }
        Ok(RotationOp {
            target: target.clone(),
            matrix: h,
        })
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// First coordinate of `R v`.
    pub fn first(&self, v: &DVector<f64>) -> f64 {
        self.matrix.row(0).transpose().dot(v)
    }
}

/// One realization of the coupled pair of jump series.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingRun {
    pub t: f64,
    pub jump_times: Vec<f64>,
    /// `a_i = B̄ e^{(t - τ_i)A}(x - y)`.
    pub a_list: Vec<Vec<f64>>,
    /// First rotated coordinate of `Σ_{i≤k} e^{τ_i A} B (U_i + ΔU_i)`, `k = 0..=m`.
    pub walk: Vec<f64>,
    /// The same for `Σ_{i≤k} e^{τ_i A} B U_i`.
    pub walk_mirror: Vec<f64>,
    /// Integer walk `W_k = Σ_{i≤k} sign_i`, so `walk - walk_mirror = g W_k`.
    pub difference: Vec<i64>,
    /// `p_i = 1 - ν̄∧(δ_{-a_i}*ν̄)(R^d)`.
    pub stay_probs: Vec<f64>,
    /// First `k` with `W_k = 1` (or `0` when `x = y`).
    pub coupling_step: Option<usize>,
    /// `g = |e^{tA}(x - y)|`.
    pub gap: f64,
}

impl CouplingRun {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }
}

/// Model-level data shared by many coupled runs.
#[derive(Debug, Clone)]
pub struct CouplingSetup {
    model: OUModel,
    nu_bar: FiniteMeasure,
    rate: f64,
    b_bar: DMatrix<f64>,
    spectral: SpectralReport,
}

impl CouplingSetup {
    /// Checks the rank of `B` and the spectral gate and prepares `ν̄_ε`.
    pub fn new(model: &OUModel, epsilon: f64) -> Result<Self> {
        let b_bar = model
            .b_bar()
            .ok_or_else(|| Error::precondition("coupling needs rank(B) = n"))?
            .clone();
        let spectral = spectral_report(&model.a, DEFAULT_TIME_HORIZON, DEFAULT_CA_GRID)?;
        if !spectral.stability.bounded_semigroup() {
            return Err(Error::SpectralGate(format!(
                "sup_t |e^(tA)| is infinite (stability class {:?}); the process does not have the coupling property",
                spectral.stability
            )));
        }
        let nu_eps = truncate(&model.triplet.nu, epsilon)?;
        let rate = nu_eps.total_mass();
        if rate <= 0.0 {
            return Err(Error::Degenerate("truncated Lévy measure has zero mass".into()));
        }
        Ok(CouplingSetup {
            model: model.clone(),
            nu_bar: nu_eps.normalized()?,
            rate,
            b_bar,
            spectral,
        })
    }

    pub fn nu_bar(&self) -> &FiniteMeasure {
        &self.nu_bar
    }

    /// `C_ε`.
    pub fn jump_rate(&self) -> f64 {
        self.rate
    }

    /// Grid estimate of `C_A = sup_t |e^{tA}|`.
    pub fn c_a(&self) -> f64 {
        self.spectral.c_a.expect("gate guarantees a finite C_A")
    }

    pub fn b_bar_norm(&self) -> f64 {
        op_norm(&self.b_bar)
    }

    /// Largest `|x - y|` for which every shift satisfies `|a_i| ≤ δ`.
    pub fn admissible_distance(&self, delta: f64) -> f64 {
        delta / (self.c_a() * self.b_bar_norm())
    }

    /// Coupled run with Poisson(`C_ε`) arrivals on `[0, t]`.
    pub fn run(&self, t: f64, x: &DVector<f64>, y: &DVector<f64>, rng: &mut RngStream) -> Result<CouplingRun> {
        let mut times = Vec::new();
        let mut tau = 0.0;
        loop {
            tau += rng.sample::<f64, _>(Exp1) / self.rate;
            if tau > t {
                break;
            }
            times.push(tau);
        }
        self.run_on_times(t, x, y, times, rng)
    }

    /// Coupled run conditioned on exactly `steps` arrivals in `[0, t]`
    /// (sorted uniform times).
    pub fn run_with_steps(
        &self,
        t: f64,
        x: &DVector<f64>,
        y: &DVector<f64>,
        steps: usize,
        rng: &mut RngStream,
    ) -> Result<CouplingRun> {
        let mut times: Vec<f64> = (0..steps).map(|_| t * rng.open01()).collect();
        times.sort_by(f64::total_cmp);
        self.run_on_times(t, x, y, times, rng)
    }

    fn run_on_times(
        &self,
        t: f64,
        x: &DVector<f64>,
        y: &DVector<f64>,
        times: Vec<f64>,
        rng: &mut RngStream,
    ) -> Result<CouplingRun> {
        let n = self.model.n();
        if x.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len().max(y.len()),
            });
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid("t must be finite and nonnegative"));
        }
        let diff = x - y;
        let g_vec = matrix_exponential(&self.model.a, t)? * &diff;
        let gap = g_vec.norm();
        let cap = self.c_a() * self.b_bar_norm() * diff.norm() * (1.0 + 1e-9) + 1e-300;
        let rotation = if gap > 0.0 { Some(RotationOp::new(&g_vec)?) } else { None };
        let first = |v: &DVector<f64>| rotation.as_ref().map_or(v[0], |r| r.first(v));

        let m = times.len();
        let mut walk = Vec::with_capacity(m + 1);
        let mut mirror = Vec::with_capacity(m + 1);
        let mut difference = Vec::with_capacity(m + 1);
        let mut a_list = Vec::with_capacity(m);
        let mut stay_probs = Vec::with_capacity(m);
        walk.push(0.0);
        mirror.push(0.0);
        difference.push(0i64);
        let mut coupling_step = if gap == 0.0 { Some(0) } else { None };
        let (mut s, mut s_mirror, mut w) = (0.0, 0.0, 0i64);
        for (i, &tau) in times.iter().enumerate() {
            let a = &self.b_bar * matrix_exponential(&self.model.a, t - tau)? * &diff;
            if a.norm() > cap {
                return Err(Error::precondition(format!(
                    "shift |a_{}| = {} exceeds C_A |B̄| |x - y| = {}",
                    i + 1,
                    a.norm(),
                    cap
                )));
            }
            stay_probs.push(1.0 - shifted_overlap(&self.nu_bar, &-&a)?);
            let draw = if coupling_step.is_some() {
                MinekaDraw {
                    u: self.nu_bar.sample(rng)?,
                    delta_u: DVector::zeros(a.len()),
                    sign: 0,
                }
            } else {
                mineka_pair(&self.nu_bar, &a, rng)?
            };
            let e = matrix_exponential(&self.model.a, tau)?;
            let base = &e * (&self.model.b * &draw.u);
            let moved = &e * (&self.model.b * (&draw.u + &draw.delta_u));
            s_mirror += first(&base);
            s += first(&moved);
            w += draw.sign as i64;
            walk.push(s);
            mirror.push(s_mirror);
            difference.push(w);
            a_list.push(a.iter().copied().collect());
            if coupling_step.is_none() && w == 1 {
                coupling_step = Some(i + 1);
            }
        }
        Ok(CouplingRun {
            t,
            jump_times: times,
            a_list,
            walk,
            walk_mirror: mirror,
            difference,
            stay_probs,
            coupling_step,
            gap,
        })
    }
}

/// `run_coupled_walks` for a single run; prefer [`CouplingSetup`] for many.
pub fn run_coupled_walks(
    model: &OUModel,
    epsilon: f64,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<CouplingRun> {
    CouplingSetup::new(model, epsilon)?.run(t, x, y, rng)
}

/// `γ(δ) = inf_{|a|≤δ} ν̄∧(δ_a*ν̄)(R^d)`, minimum over the shift grid.
pub fn gamma_delta(nu_bar: &FiniteMeasure, delta: f64, grid: usize) -> Result<f64> {
    let normalized = nu_bar.normalized()?;
    Ok(shifted_overlap_infimum(&normalized, delta, grid)?.grid_min)
}

/// Envelope `c/√k + 4(1-γ)/(γk)` for `P(T^S > k)`.
pub fn coupling_tail_bound(gamma: f64, k: usize, c_clt: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid("gamma must lie in (0, 1]"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let k = k as f64;
    Ok(c_clt / k.sqrt() + 4.0 * (1.0 - gamma) / (gamma * k))
}

/// Exact laws of the lazy walk with steps `-1, 0, +1` w.p. `(1-r)/2, r, (1-r)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkTail {
    /// `P(max_{i≤k} S_i ≥ a)`.
    pub p_max_ge: BigRational,
    /// `P(S_k ≥ a)`.
    pub p_end_ge: BigRational,
    /// `P(S_k > a)`.
    pub p_end_gt: BigRational,
    /// `P(max_{i≤k} S_i < a)`.
    pub p_max_lt: BigRational,
    /// `P(0 ≤ S_k ≤ a)`.
    pub p_mid_closed: BigRational,
    /// `P(0 < S_k < a)`.
    pub p_mid_open: BigRational,
}

impl WalkTail {
    /// Reflection inequalities
    /// `2P(S_k > a) ≤ P(max ≥ a) ≤ 2P(S_k ≥ a)` and
    /// `2P(0 < S_k < a) ≤ P(max < a) ≤ 2P(0 ≤ S_k ≤ a)`, in that order.
    pub fn inequalities(&self) -> [bool; 4] {
        let two = BigRational::from_integer(BigInt::from(2));
        [
            &two * &self.p_end_gt <= self.p_max_ge,
            self.p_max_ge <= &two * &self.p_end_ge,
            &two * &self.p_mid_open <= self.p_max_lt,
            self.p_max_lt <= &two * &self.p_mid_closed,
        ]
    }
}

/// Largest `k` accepted by [`rw_exact_tail`].
pub const RW_MAX_STEPS: usize = 18;

/// Dynamic program over (position, running maximum) in exact arithmetic.
pub fn rw_exact_tail(k: usize, r: &BigRational, a: usize) -> Result<WalkTail> {
    if k == 0 || k > RW_MAX_STEPS {
        return Err(Error::invalid(format!("k must lie in 1..={RW_MAX_STEPS}")));
    }
    if a == 0 {
        return Err(Error::invalid("a must be at least 1"));
    }
    let one = BigRational::one();
    if *r < BigRational::zero() || *r >= one {
        return Err(Error::precondition("the walk needs 0 ≤ r < 1"));
    }
    let side = (&one - r) / BigRational::from_integer(BigInt::from(2));
    let width = 2 * k + 1;
    // dp[pos + k][max]
    let mut dp = vec![vec![BigRational::zero(); k + 1]; width];
    dp[k][0] = one.clone();
    for _ in 0..k {
        let mut next = vec![vec![BigRational::zero(); k + 1]; width];
        for p in 0..width {
            for m in 0..=k {
                let w = &dp[p][m];
                if w.is_zero() {
                    continue;
                }
                if p > 0 {
                    next[p - 1][m] += w * &side;
                }
                next[p][m] += w * r;
                if p + 1 < width {
                    let pos = p as i64 + 1 - k as i64;
                    let nm = m.max(pos.max(0) as usize);
                    next[p + 1][nm] += w * &side;
                }
            }
        }
        dp = next;
    }
    let a_i = a as i64;
    let mut out = WalkTail {
        p_max_ge: BigRational::zero(),
        p_end_ge: BigRational::zero(),
        p_end_gt: BigRational::zero(),
        p_max_lt: BigRational::zero(),
        p_mid_closed: BigRational::zero(),
        p_mid_open: BigRational::zero(),
    };
    for (p, row) in dp.iter().enumerate() {
        let pos = p as i64 - k as i64;
        for (m, w) in row.iter().enumerate() {
            if w.is_zero() {
                continue;
            }
            if m >= a {
                out.p_max_ge += w;
            } else {
                out.p_max_lt += w;
            }
            if pos >= a_i {
                out.p_end_ge += w;
            }
            if pos > a_i {
                out.p_end_gt += w;
            }
            if (0..=a_i).contains(&pos) {
                out.p_mid_closed += w;
            }
            if pos > 0 && pos < a_i {
                out.p_mid_open += w;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{LevyMeasure, PiecewiseDensity};
    use crate::symbol::LevyTriplet;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn uniform_bar() -> FiniteMeasure {
        truncate(
            &LevyMeasure::density(PiecewiseDensity::uniform(0.0, 1.0, 1.0).unwrap()).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn two_step_walk() {
        let w = rw_exact_tail(2, &rat(0, 1), 1).unwrap();
        assert_eq!(w.p_max_ge, rat(1, 2));
        assert_eq!(w.p_end_ge, rat(1, 4));
        assert_eq!(w.p_max_ge, rat(2, 1) * &w.p_end_ge);
        assert!(w.inequalities().iter().all(|&b| b));
    }

    #[test]
    fn unreachable_level() {
        let w = rw_exact_tail(3, &rat(3, 10), 5).unwrap();
        assert!(w.p_max_ge.is_zero() && w.p_end_ge.is_zero());
        assert!(w.inequalities().iter().all(|&b| b));
        assert!(matches!(rw_exact_tail(3, &rat(1, 1), 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn tail_bound_formula() {
        assert_eq!(coupling_tail_bound(0.5, 1, 1.0).unwrap(), 5.0);
        assert_eq!(coupling_tail_bound(1.0, 4, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_shift_never_moves() {
        let nu = uniform_bar();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..100 {
            let d = mineka_pair(&nu, &DVector::zeros(1), &mut rng).unwrap();
            assert_eq!(d.sign, 0);
        }
    }

    #[test]
    fn uniform_half_shift_frequencies() {
        let nu = uniform_bar();
        let mut rng = RngStream::new(2, 1);
        let n = 40000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let d = mineka_pair(&nu, &DVector::from_element(1, 0.5), &mut rng).unwrap();
            counts[(d.sign + 1) as usize] += 1;
        }
        let sd = (0.25 * 0.75 / n as f64).sqrt();
        assert!((counts[0] as f64 / n as f64 - 0.25).abs() < 4.0 * sd);
        assert!((counts[2] as f64 / n as f64 - 0.25).abs() < 4.0 * sd);
    }

    #[test]
    fn rotation_maps_target_to_axis() {
        let a = DVector::from_vec(vec![0.3, -1.2, 0.5]);
        let r = RotationOp::new(&a).unwrap();
        let img = r.apply(&a);
        assert!((img[0] - a.norm()).abs() < 1e-12 && img[1].abs() < 1e-12 && img[2].abs() < 1e-12);
        let id = &r.matrix * r.matrix.transpose();
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!((r.matrix.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_starts_couple_immediately() {
        let nu = LevyMeasure::density(PiecewiseDensity::uniform(0.0, 1.0, 1.0).unwrap()).unwrap();
        let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap();
        let x = DVector::from_element(1, 0.2);
        let run = run_coupled_walks(&m, 0.1, 5.0, &x, &x, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(run.coupling_step, Some(0));
        assert!(run.difference.iter().all(|&w| w == 0));
    }

    #[test]
    fn expanding_drift_fails_the_gate() {
        let nu = LevyMeasure::density(PiecewiseDensity::uniform(0.0, 1.0, 1.0).unwrap()).unwrap();
        let m = OUModel::scalar(1.0, 1.0, LevyTriplet::jumps(nu).unwrap()).unwrap();
        assert!(matches!(CouplingSetup::new(&m, 0.1), Err(Error::SpectralGate(_))));
    }

    #[test]
    fn gamma_of_uniform_and_atom() {
        assert!((gamma_delta(&uniform_bar(), 0.5, 11).unwrap() - 0.5).abs() < 1e-15);
        let atom = truncate(
            &LevyMeasure::atomic(vec![crate::levy::Atom::new(vec![0.0], 2.0)]).unwrap(),
            1.0,
        )
        .unwrap();
        assert_eq!(gamma_delta(&atom, 0.3, 11).unwrap(), 0.0);
    }
}
