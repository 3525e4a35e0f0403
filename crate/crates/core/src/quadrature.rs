//! Deterministic numerical integration and summation helpers.
//!
//! Every reduction here has a fixed evaluation and summation order, so results
//! do not depend on thread count or on the order in which callers fan out.

use num_complex::Complex64;

/// Pairwise (tree) summation. Fixed association order for a given length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn pairwise_sum_complex(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        n if n <= 8 => xs.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum_complex(&xs[..mid]) + pairwise_sum_complex(&xs[mid..])
        }
    }
}

// Kronrod 15-point abscissae (positive half) and weights; the odd-indexed
// abscissae are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod (7, 15) panel: returns (Kronrod estimate, |K - G|).
fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let k = kronrod * half;
    let g = gauss * half;
    (k, (k - g).norm())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: Complex64,
    pub abs_error: f64,
    pub converged: bool,
}

impl Integral {
    /// Relative error estimate, guarded against a vanishing integral.
    pub fn rel_error(&self) -> f64 {
        self.abs_error / self.value.norm().max(1e-300)
    }

    pub fn meets(&self, abs_tol: f64, rel_tol: f64) -> bool {
        self.abs_error <= abs_tol.max(rel_tol * self.value.norm())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-10,
            rel: 1e-10,
            max_panels: 4000,
        }
    }
}

/// Globally adaptive Gauss-Kronrod integration of a complex integrand on a
/// finite interval. The panel with the largest error estimate is bisected
/// until the summed estimate meets the tolerance or the panel budget runs out.
pub fn integrate_complex<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Integral
where
    F: Fn(f64) -> Complex64,
{
    if a == b {
        return Integral {
            value: Complex64::new(0.0, 0.0),
            abs_error: 0.0,
            converged: true,
        };
    }
    let mut panels: Vec<(f64, f64, Complex64, f64)> = Vec::with_capacity(64);
    let (v, e) = gk15(&f, a, b);
    panels.push((a, b, v, e));
    loop {
        let total: Complex64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        let target = tol.abs.max(tol.rel * total.norm());
        if err <= target || panels.len() >= tol.max_panels {
            panels.sort_by(|x, y| x.0.total_cmp(&y.0));
            let vals: Vec<Complex64> = panels.iter().map(|p| p.2).collect();
            let errs: Vec<f64> = panels.iter().map(|p| p.3).collect();
            let value = pairwise_sum_complex(&vals);
            let abs_error = pairwise_sum(&errs);
            return Integral {
                value,
                abs_error,
                converged: abs_error <= target,
            };
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty panel list");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval can no longer be split in floating point.
            let (v, _) = gk15(&f, lo, hi);
            panels.push((lo, hi, v, 0.0));
            continue;
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Real-valued convenience wrapper around [`integrate_complex`].
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> (f64, f64, bool)
where
    F: Fn(f64) -> f64,
{
    let r = integrate_complex(|x| Complex64::new(f(x), 0.0), a, b, tol);
    (r.value.re, r.abs_error, r.converged)
}

/// Integrate over consecutive pieces `[breaks[i], breaks[i+1]]`, summing the
/// panel results pairwise.
pub fn integrate_complex_pieces<F>(f: &F, breaks: &[f64], tol: Tolerance) -> Integral
where
    F: Fn(f64) -> Complex64,
{
    let mut vals = Vec::with_capacity(breaks.len());
    let mut errs = Vec::with_capacity(breaks.len());
    let mut converged = true;
    for w in breaks.windows(2) {
        let r = integrate_complex(f, w[0], w[1], tol);
        vals.push(r.value);
        errs.push(r.abs_error);
        converged &= r.converged;
    }
    Integral {
        value: pairwise_sum_complex(&vals),
        abs_error: pairwise_sum(&errs),
        converged,
    }
}

/// Fixed composite Kronrod-15 rule on `[0, t]` with `panels` equal panels.
/// Returns (node, weight) pairs in increasing node order.
pub fn composite_rule(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * 15);
    for p in 0..panels {
        let lo = a + width * p as f64;
        let center = lo + 0.5 * width;
        let half = 0.5 * width;
        for j in 0..7 {
            out.push((center - half * XGK[j], half * WGK[j]));
        }
        out.push((center, half * WGK[7]));
        for j in (0..7).rev() {
            out.push((center + half * XGK[j], half * WGK[j]));
        }
    }
    out
}

/// Composite midpoint rule with `cells` equal cells.
pub fn midpoint<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cells: usize) -> f64 {
    let cells = cells.max(1);
    let h = (b - a) / cells as f64;
    let vals: Vec<f64> = (0..cells)
        .map(|i| f(a + (i as f64 + 0.5) * h) * h)
        .collect();
    pairwise_sum(&vals)
}
