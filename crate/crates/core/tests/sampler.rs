use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use ou_coupling::levy::{Atom, LevyMeasure, PiecewiseDensity};
use ou_coupling::rng::RngStream;
use ou_coupling::sampler::{sample_endpoints, DriverMode, EndpointSampler};
use ou_coupling::stats::{cauchy_cdf, ks_one_sample, normal_cdf};
use ou_coupling::symbol::{time_integrated_exponent, LevyTriplet, OUModel};

fn first(v: &[DVector<f64>]) -> Vec<f64> {
    v.iter().map(|x| x[0]).collect()
}

#[test]
fn gaussian_endpoint_matches_closed_form() {
    let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::gaussian(DMatrix::identity(1, 1)).unwrap()).unwrap();
    let t = 0.7;
    let x = DVector::from_element(1, 2.0);
    let s = EndpointSampler::new(&m, DriverMode::GaussianExact, t).unwrap();
    let draws = first(&sample_endpoints(&s, &x, 20_000, 3, 0, 1).unwrap());
    let mean = 2.0 * (-t as f64).exp();
    let sd = ((1.0 - (-2.0 * t as f64).exp()) / 2.0).sqrt();
    let ks = ks_one_sample(&draws, |z| normal_cdf((z - mean) / sd));
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn cauchy_endpoint_matches_closed_form() {
    let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(LevyMeasure::stable(1.0, 1.0, 1).unwrap()).unwrap()).unwrap();
    let t = 1.5;
    let x = DVector::from_element(1, -1.0);
    let s = EndpointSampler::new(&m, DriverMode::StableExact, t).unwrap();
    let draws = first(&sample_endpoints(&s, &x, 20_000, 4, 0, 1).unwrap());
    let mean = -(-t as f64).exp();
    let scale = 1.0 - (-t as f64).exp();
    let ks = ks_one_sample(&draws, |z| cauchy_cdf(z - mean, scale));
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

/// Empirical characteristic function of `X_t - e^{tA}x` against `e^{-Φ_t}`.
fn check_characteristic_function(m: &OUModel, mode: DriverMode, t: f64, x: &DVector<f64>, xis: &[DVector<f64>]) {
    let n = 40_000;
    let s = EndpointSampler::new(m, mode, t).unwrap();
    let draws = sample_endpoints(&s, x, n, 11, 2, 2).unwrap();
    let centre = ou_coupling::spectral::matrix_exponential(&m.a, t).unwrap() * x;
    for xi in xis {
        let empirical: Complex64 = draws
            .iter()
            .map(|d| Complex64::from_polar(1.0, xi.dot(&(d - &centre))))
            .sum::<Complex64>()
            / n as f64;
        let exact = (-time_integrated_exponent(m, t, xi).unwrap()).exp();
        assert!((empirical - exact).norm() < 0.025, "xi {xi}: {empirical} vs {exact}");
    }
}

#[test]
fn compound_poisson_characteristic_function() {
    let nu = LevyMeasure::atomic(vec![Atom::new(vec![0.5], 2.0), Atom::new(vec![-1.5], 0.5)]).unwrap();
    let m = OUModel::new(
        DMatrix::from_element(1, 1, -0.8),
        DMatrix::from_element(1, 1, 1.0),
        LevyTriplet::new(DMatrix::zeros(1, 1), DVector::from_element(1, 0.4), nu).unwrap(),
    )
    .unwrap();
    let xis: Vec<_> = [-2.0, -0.7, 0.3, 1.1, 3.0].iter().map(|&s| DVector::from_element(1, s)).collect();
    check_characteristic_function(&m, DriverMode::CpTruncated { epsilon: 1e-3 }, 1.2, &DVector::from_element(1, 1.0), &xis);
}

#[test]
fn planar_density_characteristic_function() {
    let nu = LevyMeasure::density(PiecewiseDensity::uniform(-1.0, 2.0, 1.5).unwrap()).unwrap();
    let m = OUModel::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -1.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.3]),
        LevyTriplet::jumps(nu).unwrap(),
    )
    .unwrap();
    let xis = vec![
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![0.4, -1.2]),
        DVector::from_vec(vec![-2.0, 0.7]),
    ];
    check_characteristic_function(&m, DriverMode::CpTruncated { epsilon: 0.01 }, 0.9, &DVector::from_vec(vec![0.5, -0.5]), &xis);
}

#[test]
fn euler_scheme_approaches_exact_law() {
    let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::gaussian(DMatrix::identity(1, 1)).unwrap()).unwrap();
    let x = DVector::from_element(1, 0.0);
    let euler = EndpointSampler::new(&m, DriverMode::PathEuler { steps: 200 }, 1.0).unwrap();
    let draws = first(&sample_endpoints(&euler, &x, 20_000, 5, 0, 1).unwrap());
    let sd = ((1.0 - (-2.0f64).exp()) / 2.0).sqrt();
    let ks = ks_one_sample(&draws, |z| normal_cdf(z / sd));
    assert!(ks.p_value > 1e-3, "{ks:?}");
}

#[test]
fn draws_do_not_depend_on_worker_count() {
    let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(LevyMeasure::stable(1.5, 1.0, 1).unwrap()).unwrap()).unwrap();
    let s = EndpointSampler::new(&m, DriverMode::CpTruncated { epsilon: 0.05 }, 2.0).unwrap();
    let x = DVector::from_element(1, 0.3);
    let one = sample_endpoints(&s, &x, 500, 9, 1, 1).unwrap();
    let many = sample_endpoints(&s, &x, 500, 9, 1, 3).unwrap();
    assert_eq!(one, many);
    let mut rng = RngStream::for_item(9, 1, 17);
    assert_eq!(s.sample(&x, &mut rng).unwrap(), one[17]);
}

#[test]
fn mismatched_modes_are_rejected() {
    let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(LevyMeasure::stable(1.5, 1.0, 1).unwrap()).unwrap()).unwrap();
    assert!(matches!(
        EndpointSampler::new(&m, DriverMode::GaussianExact, 1.0),
        Err(ou_coupling::Error::Mode(_))
    ));
}
