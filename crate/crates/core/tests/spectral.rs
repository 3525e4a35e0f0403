use nalgebra::DMatrix;
use ou_coupling::spectral::{exponential_gramian, integrated_exponential, matrix_exponential, spectral_report, Stability};

fn classify(rows: usize, data: &[f64]) -> Stability {
    spectral_report(&DMatrix::from_row_slice(rows, rows, data), 200.0, 512).unwrap().stability
}

#[test]
fn stability_classes() {
    assert_eq!(classify(2, &[-1.0, 5.0, 0.0, -2.0]), Stability::AllNegative);
    assert_eq!(classify(2, &[0.0, -1.0, 1.0, 0.0]), Stability::NonpositiveSemisimple);
    assert_eq!(classify(2, &[0.0, 1.0, 0.0, 0.0]), Stability::NonpositiveDefective);
    assert_eq!(classify(1, &[0.3]), Stability::HasPositive);
    assert_eq!(classify(3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]), Stability::NonpositiveSemisimple);
}

#[test]
fn rotation_has_unit_semigroup_bound() {
    let r = spectral_report(&DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]), 200.0, 512).unwrap();
    assert!((r.c_a.unwrap() - 1.0).abs() < 1e-9);
    let defective = spectral_report(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), 200.0, 512).unwrap();
    assert!(defective.c_a.is_none());
}

#[test]
fn non_normal_bound_exceeds_one() {
    let r = spectral_report(&DMatrix::from_row_slice(2, 2, &[-1.0, 10.0, 0.0, -1.0]), 200.0, 512).unwrap();
    // |e^{tA}| is about 10 t e^{-t}, peaking near t = 1.
    let c = r.c_a.unwrap();
    assert!(c > 3.5 && c < 4.0, "{c}");
}

#[test]
fn scalar_closed_forms() {
    let a = DMatrix::from_element(1, 1, -0.7);
    let t: f64 = 1.9;
    assert!((matrix_exponential(&a, t).unwrap()[(0, 0)] - (-0.7 * t).exp()).abs() < 1e-14);
    let int = (1.0 - (-0.7 * t).exp()) / 0.7;
    assert!((integrated_exponential(&a, t).unwrap()[(0, 0)] - int).abs() < 1e-13);
    let gram = (1.0 - (-1.4 * t).exp()) / 1.4 * 2.0;
    let m = DMatrix::from_element(1, 1, 2.0);
    assert!((exponential_gramian(&a, &m, t).unwrap()[(0, 0)] - gram).abs() < 1e-13);
}

#[test]
fn rotation_exponential() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let e = matrix_exponential(&a, 0.8).unwrap();
    let (c, s) = (0.8f64.cos(), 0.8f64.sin());
    assert!((e - DMatrix::from_row_slice(2, 2, &[c, -s, s, c])).amax() < 1e-14);
}
