//! Total variation between OU marginals, decay fits and gradient norms.
//!
//! Total variation uses the total-mass convention: disjoint laws are at
//! distance 2.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::pairwise_sum;
use crate::rng::RngStream;
use crate::spectral::matrix_exponential;
use crate::symbol::{density_via_fourier, shifted_difference_l1, FourierOptions, FourierPlan, Lattice, OUModel};

/// Smallest sample count accepted by the histogram estimator.
pub const MIN_HISTOGRAM_SAMPLES: usize = 1000;
const MAX_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bootstrap {
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramOptions {
    pub bins_per_axis: usize,
    /// Per-axis box `[q, 1-q]` quantiles of the pooled samples, with one
    /// overflow cell on each side. `0` spans the full pooled range.
    pub tail_quantile: f64,
    /// Paired bootstrap of `(x_i, y_i)`, which keeps common random numbers intact.
    pub bootstrap: Option<Bootstrap>,
}

impl HistogramOptions {
    pub fn new(bins_per_axis: usize) -> Self {
        HistogramOptions {
            bins_per_axis,
            tail_quantile: 0.0,
            bootstrap: None,
        }
    }

    /// 64 bins in one dimension, 32 otherwise.
    pub fn default_for(dim: usize) -> Self {
        Self::new(if dim == 1 { 64 } else { 32 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvEstimate {
    pub tv_hat: f64,
    /// Bootstrap standard error when requested, else `std_err_bound`.
    pub std_err: f64,
    /// `√(2/N)·√cells`.
    pub std_err_bound: f64,
    pub bootstrap_se: Option<f64>,
    pub cells: usize,
    pub samples: usize,
}

/// `Σ_cells |p̂_x - p̂_y|` over a common grid.
pub fn tv_histogram(samples_x: &[DVector<f64>], samples_y: &[DVector<f64>], bins_per_axis: usize) -> Result<TvEstimate> {
    tv_histogram_with(samples_x, samples_y, &HistogramOptions::new(bins_per_axis))
}

pub fn tv_histogram_with(
    samples_x: &[DVector<f64>],
    samples_y: &[DVector<f64>],
    opts: &HistogramOptions,
) -> Result<TvEstimate> {
    if samples_x.is_empty() || samples_y.is_empty() {
        return Err(Error::precondition("histogram estimator needs samples"));
    }
    let n = samples_x.len();
    if samples_y.len() != n {
        return Err(Error::precondition(format!(
            "sample counts differ ({n} vs {})",
            samples_y.len()
        )));
    }
    if n < MIN_HISTOGRAM_SAMPLES {
        return Err(Error::precondition(format!(
            "histogram estimator needs at least {MIN_HISTOGRAM_SAMPLES} samples, got {n}"
        )));
    }
    if opts.bins_per_axis == 0 {
        return Err(Error::invalid("bins_per_axis must be positive"));
    }
    if !(0.0..0.5).contains(&opts.tail_quantile) {
        return Err(Error::invalid("tail_quantile must lie in [0, 0.5)"));
    }
    let dim = samples_x[0].len();
    if dim == 0 || dim > 3 {
        return Err(Error::invalid("histogram estimator supports dimensions 1 to 3"));
    }
    if let Some(bad) = samples_x.iter().chain(samples_y).find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if samples_x.iter().chain(samples_y).any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("samples must be finite"));
    }

    let clipped = opts.tail_quantile > 0.0;
    let slots = opts.bins_per_axis + if clipped { 2 } else { 0 };
    let cells = slots
        .checked_pow(dim as u32)
        .filter(|&c| c <= MAX_CELLS)
        .ok_or_else(|| Error::invalid("too many histogram cells"))?;

    let mut axes = Vec::with_capacity(dim);
    for k in 0..dim {
        let mut pooled: Vec<f64> = samples_x.iter().chain(samples_y).map(|s| s[k]).collect();
        pooled.sort_by(f64::total_cmp);
        let m = pooled.len();
        let (lo, hi) = if clipped {
            let i = ((opts.tail_quantile * m as f64).floor() as usize).min(m - 1);
            (pooled[i], pooled[m - 1 - i])
        } else {
            (pooled[0], pooled[m - 1])
        };
        axes.push((lo, hi));
    }
    let bins = opts.bins_per_axis;
    let cell_of = |s: &DVector<f64>| -> usize {
        let mut idx = 0;
        for (k, &(lo, hi)) in axes.iter().enumerate() {
            let width = (hi - lo) / bins as f64;
            let v = s[k];
            let slot = if width <= 0.0 {
                0
            } else if clipped {
                if v < lo {
                    0
                } else if v > hi {
                    bins + 1
                } else {
                    1 + (((v - lo) / width) as usize).min(bins - 1)
                }
            } else {
                (((v - lo) / width) as usize).min(bins - 1)
            };
            idx = idx * slots + slot;
        }
        idx
    };
    let cx: Vec<usize> = samples_x.iter().map(cell_of).collect();
    let cy: Vec<usize> = samples_y.iter().map(cell_of).collect();

    let mut counts = vec![0i64; cells];
    let tv_hat = tv_from_indices(&cx, &cy, 0..n, &mut counts, n);
    let std_err_bound = (2.0 / n as f64).sqrt() * (cells as f64).sqrt();

    let bootstrap_se = match opts.bootstrap {
        None => None,
        Some(b) => {
            if b.replicates < 2 {
                return Err(Error::invalid("bootstrap needs at least 2 replicates"));
            }
            let mut rng = RngStream::new(b.seed, 0);
            let mut reps = Vec::with_capacity(b.replicates);
            for _ in 0..b.replicates {
                let idx: Vec<usize> = (0..n).map(|_| ((rng.open01() * n as f64) as usize).min(n - 1)).collect();
                reps.push(tv_from_indices(&cx, &cy, idx.into_iter(), &mut counts, n));
            }
            let mean = reps.iter().sum::<f64>() / reps.len() as f64;
            let var = reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
            Some(var.sqrt())
        }
    };
    Ok(TvEstimate {
        tv_hat,
        std_err: bootstrap_se.unwrap_or(std_err_bound),
        std_err_bound,
        bootstrap_se,
        cells,
        samples: n,
    })
}

/// Counts signed cell differences over the selected pairs, then clears the
/// touched entries of `counts`.
fn tv_from_indices<I: Iterator<Item = usize>>(
    cx: &[usize],
    cy: &[usize],
    pairs: I,
    counts: &mut [i64],
    n: usize,
) -> f64 {
    let mut touched = Vec::new();
    for i in pairs {
        counts[cx[i]] += 1;
        counts[cy[i]] -= 1;
        touched.push(cx[i]);
        touched.push(cy[i]);
    }
    let mut total: u64 = 0;
    for &c in &touched {
        total += counts[c].unsigned_abs();
        counts[c] = 0;
    }
    (total as f64 / n as f64).min(2.0)
}

/// `∫|p_t(z - e^{tA}x) - p_t(z - e^{tA}y)| dz` by Fourier inversion.
pub fn tv_exact_1d(model: &OUModel, t: f64, x: f64, y: f64) -> Result<f64> {
    if model.n() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: model.n(),
        });
    }
    if x == y {
        return Ok(0.0);
    }
    let e = matrix_exponential(&model.a, t)?[(0, 0)];
    shifted_difference_l1(model, t, e * (y - x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvRow {
    pub t: f64,
    pub tv_hat: f64,
    pub std_err: f64,
    /// `min(Ĉ/√t, 2)` with `Ĉ` fitted at the first row.
    pub bound_sqrt: f64,
    /// `φ_t^{-1}`-based bound, where the symbol conditions hold.
    pub bound_symbol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TvCurve {
    pub rows: Vec<TvRow>,
}

impl TvCurve {
    /// Builds rows from `(t, estimate, symbol bound)` sorted by `t`, fitting
    /// `Ĉ = tv_hat·√t` at the smallest `t`.
    pub fn from_estimates(points: &[(f64, f64, f64, Option<f64>)]) -> Result<Self> {
        let mut pts = points.to_vec();
        if pts.iter().any(|p| !(p.0 > 0.0) || !(0.0..=2.0).contains(&p.1) || !(p.2 >= 0.0)) {
            return Err(Error::invalid("rows need t > 0, tv_hat in [0, 2] and std_err ≥ 0"));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let c_hat = pts.first().map_or(0.0, |p| p.1 * p.0.sqrt());
        Ok(TvCurve {
            rows: pts
                .into_iter()
                .map(|(t, tv_hat, std_err, bound_symbol)| TvRow {
                    t,
                    tv_hat,
                    std_err,
                    bound_sqrt: (c_hat / t.sqrt()).min(2.0),
                    bound_symbol,
                })
                .collect(),
        })
    }

    pub fn c_hat(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.tv_hat * r.t.sqrt())
    }

    /// CSV with columns `t,tv_hat,std_err,bound_sqrt,bound_symbol`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,tv_hat,std_err,bound_sqrt,bound_symbol\n");
        for r in &self.rows {
            let sym = r.bound_symbol.map_or(String::new(), |b| format!("{b:e}"));
            out.push_str(&format!("{},{:e},{:e},{:e},{}\n", r.t, r.tv_hat, r.std_err, r.bound_sqrt, sym));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `t` values of the rows used.
    pub used: Vec<f64>,
}

/// Rows with `tv_hat > 1.9` are saturated, rows with `tv_hat ≤ 3·std_err`
/// are at the noise floor.
pub fn usable_row(row: &TvRow) -> bool {
    row.tv_hat > 0.0 && row.tv_hat <= 1.9 && row.tv_hat > 3.0 * row.std_err
}

/// Least squares of `log tv_hat` against `log t` over usable rows.
pub fn fit_decay(curve: &TvCurve) -> Result<FitResult> {
    let rows: Vec<&TvRow> = curve.rows.iter().filter(|r| usable_row(r)).collect();
    if rows.len() < 4 {
        return Err(Error::Degenerate(format!(
            "{} usable rows after removing saturated and noise-floor rows; at least 4 are needed",
            rows.len()
        )));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.tv_hat.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all usable rows share one t".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy <= 1e-300 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(FitResult {
        slope,
        intercept: my - slope * mx,
        r_squared,
        used: rows.iter().map(|r| r.t).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub sup_norm: f64,
    /// Finite-difference step (the probe spacing).
    pub step: f64,
    pub argmax: Vec<f64>,
    /// `P_t f` on the probe lattice, row-major in two dimensions.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientOptions {
    /// Internal points per scale unit of the law.
    pub resolution: f64,
    /// Minimum internal period in scale units.
    pub period_scales: f64,
}

impl Default for GradientOptions {
    fn default() -> Self {
        GradientOptions {
            resolution: 2000.0,
            period_scales: 256.0,
        }
    }
}

/// `sup |∇P_t f|` over the interior of `probes`, with `P_t f(x) = ∫f(e^{tA}x + z)p_t(z)dz`
/// and central differences of step `probes.spacing`.
pub fn gradient_sup_norm<F>(model: &OUModel, t: f64, f: F, probes: &Lattice) -> Result<GradientReport>
where
    F: Fn(&[f64]) -> f64,
{
    gradient_sup_norm_with(model, t, f, probes, &GradientOptions::default())
}

pub fn gradient_sup_norm_with<F>(
    model: &OUModel,
    t: f64,
    f: F,
    probes: &Lattice,
    opts: &GradientOptions,
) -> Result<GradientReport>
where
    F: Fn(&[f64]) -> f64,
{
    if model.n() != probes.dim {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: probes.dim,
        });
    }
    if probes.half_count == 0 {
        return Err(Error::invalid("probe lattice needs interior points"));
    }
    let e = matrix_exponential(&model.a, t)?;
    let axis = probes.axis();
    let h = probes.spacing;
    match probes.dim {
        1 => {
            let means: Vec<f64> = axis.iter().map(|x| e[(0, 0)] * x).collect();
            let reach = means.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let plan = FourierPlan::build(model, t, &FourierOptions::default(), |cut, scale| {
                (
                    (PI / cut).min(scale / opts.resolution),
                    (8.0 * reach).max(opts.period_scales * scale),
                )
            })?;
            let len = plan.len();
            let fz: Vec<f64> = (0..len).map(|k| f(&[plan.point(k)])).collect();
            let mut values = Vec::with_capacity(axis.len());
            for &m in &means {
                let dens = plan.invert(|xi| Complex64::from_polar(1.0, xi * m));
                let terms: Vec<f64> = dens.iter().zip(&fz).map(|(p, v)| p * v).collect();
                values.push(pairwise_sum(&terms) * plan.spacing());
            }
            let mut best = (0.0, axis[1]);
            for i in 1..axis.len() - 1 {
                let g = ((values[i + 1] - values[i - 1]) / (2.0 * h)).abs();
                if g > best.0 {
                    best = (g, axis[i]);
                }
            }
            Ok(GradientReport {
                sup_norm: best.0,
                step: h,
                argmax: vec![best.1],
                values,
            })
        }
        2 => {
            // Density on a lattice twice as fine and four times as wide as the probes.
            let half = (8 * probes.half_count).min(256);
            let lattice = Lattice::new(2, h / 2.0, half)?;
            let dens = density_via_fourier(model, t, &lattice)?;
            let zs = lattice.axis();
            let cell = lattice.spacing * lattice.spacing;
            let m = axis.len();
            let mut values = vec![0.0; m * m];
            for (i, &x1) in axis.iter().enumerate() {
                for (j, &x2) in axis.iter().enumerate() {
                    let c = [e[(0, 0)] * x1 + e[(0, 1)] * x2, e[(1, 0)] * x1 + e[(1, 1)] * x2];
                    let mut terms = Vec::with_capacity(dens.values.len());
                    for (a, &z1) in zs.iter().enumerate() {
                        for (b, &z2) in zs.iter().enumerate() {
                            let p = dens.values[a * zs.len() + b];
                            if p != 0.0 {
                                terms.push(p * f(&[c[0] + z1, c[1] + z2]));
                            }
                        }
                    }
                    values[i * m + j] = pairwise_sum(&terms) * cell;
                }
            }
            let mut best = (0.0, vec![axis[1], axis[1]]);
            for i in 1..m - 1 {
                for j in 1..m - 1 {
                    let d1 = (values[(i + 1) * m + j] - values[(i - 1) * m + j]) / (2.0 * h);
                    let d2 = (values[i * m + j + 1] - values[i * m + j - 1]) / (2.0 * h);
                    let g = d1.hypot(d2);
                    if g > best.0 {
                        best = (g, vec![axis[i], axis[j]]);
                    }
                }
            }
            Ok(GradientReport {
                sup_norm: best.0,
                step: h,
                argmax: best.1,
                values,
            })
        }
        _ => Err(Error::invalid("gradient norms are computed in dimensions 1 and 2")),
    }
}
