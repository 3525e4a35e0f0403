//! Linear-algebra services for the drift matrix: matrix exponentials,
//! eigenstructure, semisimplicity of eigenvalues on the imaginary axis and
//! the uniform bound `C_A = sup_{t >= 0} |e^{tA}|`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Padé coefficients and the 1-norm thresholds below which each order is
/// accurate to double precision (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA13: f64 = 5.371_920_351_148_152;

/// Default horizon for the `C_A` grid estimate.
pub const DEFAULT_TIME_HORIZON: f64 = 200.0;
/// Default number of log-spaced grid points for the `C_A` estimate.
pub const DEFAULT_CA_GRID: usize = 512;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(Error::invalid(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let mut u = &ident * b[1];
    let mut v = &ident * b[0];
    let mut pow = ident.clone();
    let m = b.len() - 1;
    let mut j = 2;
    while j <= m {
        pow = &pow * &a2;
        v += &pow * b[j];
        if j + 1 <= m {
            u += &pow * b[j + 1];
        }
        j += 2;
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// `e^{tA}` by scaling and squaring with a Padé approximant whose order is
/// chosen from the 1-norm of `tA`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_square(a)?;
    if !t.is_finite() {
        return Err(Error::invalid("time must be finite"));
    }
    let ta = a * t;
    let norm = one_norm(&ta);
    let n = a.nrows();
    if norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    if n == 1 {
        let v = ta[(0, 0)].exp();
        if !v.is_finite() {
            return Err(Error::Overflow { norm });
        }
        return Ok(DMatrix::from_element(1, 1, v));
    }

    let (u, v, squarings) = match THETA.iter().find(|(_, theta)| norm <= *theta) {
        Some(&(m, _)) => {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&ta, coeffs);
            (u, v, 0)
        }
        None => {
            let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
            let scaled = &ta / 2f64.powi(s);
            let (u, v) = pade13(&scaled);
            (u, v, s)
        }
    };
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or(Error::Overflow { norm })?;
    for _ in 0..squarings {
        r = &r * &r;
        if r.iter().any(|x| !x.is_finite() || x.abs() > 1e300) {
            return Err(Error::Overflow { norm });
        }
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow { norm });
    }
    Ok(r)
}

/// `∫_0^t e^{sA} ds`, read off the exponential of the block matrix `[[A, I], [0, 0]]`.
pub fn integrated_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_square(a)?;
    let n = a.nrows();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block
        .view_mut((0, n), (n, n))
        .copy_from(&DMatrix::<f64>::identity(n, n));
    let e = matrix_exponential(&block, t)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

/// Van Loan's formula for the Gramian `∫_0^t e^{sA} M e^{sA^T} ds`.
pub fn exponential_gramian(a: &DMatrix<f64>, m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_square(a)?;
    let n = a.nrows();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.nrows(),
        });
    }
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(m);
    block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = matrix_exponential(&block, t)?;
    let f12 = e.view((0, n), (n, n)).into_owned();
    let f22 = e.view((n, n), (n, n)).into_owned();
    let g = f22.transpose() * f12;
    Ok((&g + g.transpose()) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    /// Every eigenvalue has strictly negative real part.
    AllNegative,
    /// Real parts are non-positive and the imaginary-axis eigenvalues are semisimple.
    NonpositiveSemisimple,
    /// Some eigenvalue has positive real part.
    HasPositive,
    /// Real parts are non-positive but an imaginary-axis eigenvalue is defective.
    NonpositiveDefective,
}

impl Stability {
    /// Whether `sup_t |e^{tA}|` is finite for this class.
    pub fn bounded_semigroup(self) -> bool {
        matches!(self, Stability::AllNegative | Stability::NonpositiveSemisimple)
    }
}

/// Distinct eigenvalue with its multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    pub alg_mult: usize,
    pub geom_mult: usize,
}

impl Eigenvalue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<Eigenvalue>,
    pub semisimple_imaginary: bool,
    pub stability: Stability,
    /// Grid estimate of `sup_t |e^{tA}|`; `None` stands for `+∞`.
    pub c_a: Option<f64>,
    /// Condition number of the eigenvector matrix when `A` is diagonalizable;
    /// an upper bound for `C_A` whenever the semigroup is bounded.
    pub c_a_upper: Option<f64>,
    pub time_horizon: f64,
    pub grid: usize,
}

impl SpectralReport {
    pub fn c_a_is_finite(&self) -> bool {
        self.c_a.is_some()
    }
}

fn zero_tolerance(a: &DMatrix<f64>) -> f64 {
    1e-9 * (1.0 + op_norm(a))
}

fn complex_matrix(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Eigenvalues grouped into clusters of numerically coincident values.
fn clustered_eigenvalues(a: &DMatrix<f64>) -> Vec<(Complex64, usize)> {
    let raw: DVector<Complex64> = a.clone().complex_eigenvalues();
    let scale = 1.0 + op_norm(a);
    // Defective blocks split their eigenvalue by roughly eps^{1/k}; this
    // threshold keeps blocks up to size 3 together.
    let merge = 1e-5 * scale;
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for &l in raw.iter() {
        match clusters
            .iter_mut()
            .find(|c| c.iter().any(|m| (m - l).norm() <= merge))
        {
            Some(c) => c.push(l),
            None => clusters.push(vec![l]),
        }
    }
    let mut out: Vec<(Complex64, usize)> = clusters
        .into_iter()
        .map(|c| {
            let k = c.len();
            let mean = c.iter().sum::<Complex64>() / k as f64;
            (mean, k)
        })
        .collect();
    out.sort_by(|x, y| x.0.re.total_cmp(&y.0.re).then(x.0.im.total_cmp(&y.0.im)));
    out
}

fn null_space(m: &DMatrix<Complex64>, tol: f64) -> Vec<DVector<Complex64>> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut basis = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol {
            basis.push(v_t.row(i).adjoint().into_owned());
        }
    }
    // Singular values are only returned for min(rows, cols); square here.
    debug_assert_eq!(svd.singular_values.len(), n);
    basis
}

/// Classify `A` and estimate `C_A` on a log-spaced grid.
pub fn spectral_report(a: &DMatrix<f64>, time_horizon: f64, grid: usize) -> Result<SpectralReport> {
    check_square(a)?;
    let n = a.nrows();
    let tol = zero_tolerance(a);
    let ac = complex_matrix(a);

    let mut eigenvalues = Vec::new();
    let mut eigvecs: Vec<DVector<Complex64>> = Vec::new();
    for (lambda, alg) in clustered_eigenvalues(a) {
        let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * lambda;
        let kernel = null_space(&shifted, tol);
        let geom = kernel.len().clamp(1, alg);
        eigvecs.extend(kernel.into_iter().take(geom));
        eigenvalues.push(Eigenvalue {
            re: if lambda.re.abs() <= tol { 0.0 } else { lambda.re },
            im: lambda.im,
            alg_mult: alg,
            geom_mult: geom,
        });
    }

    let on_axis = |e: &Eigenvalue| e.re.abs() <= tol;
    let semisimple_imaginary = eigenvalues
        .iter()
        .filter(|e| on_axis(e))
        .all(|e| e.geom_mult == e.alg_mult);
    let stability = if eigenvalues.iter().any(|e| e.re > tol) {
        Stability::HasPositive
    } else if !semisimple_imaginary {
        Stability::NonpositiveDefective
    } else if eigenvalues.iter().all(|e| e.re < -tol) {
        Stability::AllNegative
    } else {
        Stability::NonpositiveSemisimple
    };

    let diagonalizable = eigenvalues.iter().all(|e| e.geom_mult == e.alg_mult) && eigvecs.len() == n;
    let c_a_upper = if diagonalizable && stability.bounded_semigroup() {
        let v = DMatrix::from_columns(&eigvecs);
        let s = v.svd(false, false).singular_values;
        let (smax, smin) = (s.max(), s.min());
        (smin > 0.0).then(|| smax / smin)
    } else {
        None
    };

    let c_a = if stability.bounded_semigroup() {
        let mut best: f64 = 1.0;
        for t in log_grid(time_horizon, grid) {
            best = best.max(op_norm(&matrix_exponential(a, t)?));
        }
        Some(best)
    } else {
        None
    };

    Ok(SpectralReport {
        eigenvalues,
        semisimple_imaginary,
        stability,
        c_a,
        c_a_upper,
        time_horizon,
        grid,
    })
}

/// `grid` log-spaced times on `(0, horizon]`, spanning six decades.
pub fn log_grid(horizon: f64, grid: usize) -> Vec<f64> {
    let grid = grid.max(2);
    let lo = horizon * 1e-6;
    (0..grid)
        .map(|k| {
            let frac = k as f64 / (grid - 1) as f64;
            lo * (horizon / lo).powf(frac)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        let m = rows[0].len();
        DMatrix::from_fn(n, m, |i, j| rows[i][j])
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = matrix_exponential(&DMatrix::zeros(2, 2), 5.0).unwrap();
        assert_eq!(e, DMatrix::identity(2, 2));
    }

    #[test]
    fn rotation_generator_quarter_turn() {
        let j = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let e = matrix_exponential(&j, std::f64::consts::FRAC_PI_2).unwrap();
        let expected = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!((e - expected).abs().max() < 1e-14);
    }

    #[test]
    fn scalar_exponential() {
        let e = matrix_exponential(&mat(&[&[-1.0]]), 2f64.ln()).unwrap();
        assert_relative_eq!(e[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn large_norm_uses_squaring_and_matches_closed_form() {
        // Rotation over many turns exercises the order-13 branch.
        let j = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let t = 37.3;
        let e = matrix_exponential(&j, t).unwrap();
        assert_relative_eq!(e[(0, 0)], t.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[(0, 1)], t.sin(), epsilon = 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let a = mat(&[&[1.0, 0.0], &[0.0, 2.0]]);
        assert!(matches!(
            matrix_exponential(&a, 1e4),
            Err(Error::Overflow { .. })
        ));
        assert!(matches!(
            matrix_exponential(&mat(&[&[1.0]]), 1e4),
            Err(Error::Overflow { .. })
        ));
    }

    #[test]
    fn nilpotent_block_is_defective_and_unbounded() {
        let r = spectral_report(&mat(&[&[0.0, 1.0], &[0.0, 0.0]]), 200.0, 512).unwrap();
        assert_eq!(r.eigenvalues.len(), 1);
        assert_eq!(r.eigenvalues[0].alg_mult, 2);
        assert_eq!(r.eigenvalues[0].geom_mult, 1);
        assert!(!r.semisimple_imaginary);
        assert_eq!(r.stability, Stability::NonpositiveDefective);
        assert_eq!(r.c_a, None);
    }

    #[test]
    fn contraction_has_unit_bound() {
        let r = spectral_report(&(-DMatrix::<f64>::identity(2, 2)), 200.0, 512).unwrap();
        assert_eq!(r.stability, Stability::AllNegative);
        assert_relative_eq!(r.c_a.unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(r.eigenvalues[0].geom_mult, 2);
    }

    #[test]
    fn rotation_is_semisimple_with_unit_bound() {
        let r = spectral_report(&mat(&[&[0.0, 1.0], &[-1.0, 0.0]]), 200.0, 512).unwrap();
        assert_eq!(r.stability, Stability::NonpositiveSemisimple);
        assert!(r.semisimple_imaginary);
        assert_eq!(r.eigenvalues.len(), 2);
        for e in &r.eigenvalues {
            assert_eq!(e.re, 0.0);
            assert_relative_eq!(e.im.abs(), 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(r.c_a.unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn positive_eigenvalue_is_flagged() {
        let r = spectral_report(&mat(&[&[1.0]]), 200.0, 64).unwrap();
        assert_eq!(r.stability, Stability::HasPositive);
        assert_eq!(r.c_a, None);
    }

    #[test]
    fn non_normal_transient_hump_is_captured() {
        // Stable but non-normal: |e^{tA}| exceeds 1 before decaying.
        let a = mat(&[&[-1.0, 10.0], &[0.0, -2.0]]);
        let r = spectral_report(&a, 200.0, 512).unwrap();
        assert_eq!(r.stability, Stability::AllNegative);
        let c = r.c_a.unwrap();
        assert!(c > 2.0, "c_a = {c}");
        assert!(c <= r.c_a_upper.unwrap() + 1e-9);
    }

    #[test]
    fn integrated_exponential_scalar() {
        let a = mat(&[&[-1.0]]);
        let i = integrated_exponential(&a, 2.0).unwrap();
        assert_relative_eq!(i[(0, 0)], 1.0 - (-2f64).exp(), epsilon = 1e-13);
        let z = integrated_exponential(&DMatrix::zeros(1, 1), 3.0).unwrap();
        assert_relative_eq!(z[(0, 0)], 3.0, epsilon = 1e-13);
    }

    #[test]
    fn gramian_matches_ou_variance() {
        let a = mat(&[&[-1.0]]);
        let m = mat(&[&[2.0]]);
        let g = exponential_gramian(&a, &m, 1.5).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0 - (-3f64).exp(), epsilon = 1e-12);
    }
}
