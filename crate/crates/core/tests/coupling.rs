use nalgebra::{DMatrix, DVector};
use ou_coupling::coupling::{mineka_pair, CouplingSetup};
use ou_coupling::levy::{truncate, Atom, LevyMeasure, PiecewiseDensity};
use ou_coupling::rng::RngStream;
use ou_coupling::stats::ks_two_sample;
use ou_coupling::symbol::{LevyTriplet, OUModel};

fn uniform_model(a: DMatrix<f64>) -> OUModel {
    let n = a.nrows();
    let nu = if n == 1 {
        LevyMeasure::density(PiecewiseDensity::uniform(-1.0, 1.0, 1.0).unwrap()).unwrap()
    } else {
        LevyMeasure::atomic(
            (0..5)
                .flat_map(|i| (0..5).map(move |j| Atom::new(vec![i as f64 * 0.2 - 0.4, j as f64 * 0.2 - 0.4], 0.04)))
                .collect(),
        )
        .unwrap()
    };
    OUModel::new(a, DMatrix::identity(n, n), LevyTriplet::jumps(nu).unwrap()).unwrap()
}

#[test]
fn walks_agree_after_coupling() {
    let m = uniform_model(DMatrix::from_element(1, 1, -0.5));
    let setup = CouplingSetup::new(&m, 1e-3).unwrap();
    let (x, y) = (DVector::from_element(1, 0.02), DVector::from_element(1, 0.0));
    let mut coupled = 0;
    for i in 0..200 {
        let run = setup.run_with_steps(4.0, &x, &y, 64, &mut RngStream::new(21, i)).unwrap();
        for k in 0..run.walk.len() {
            let gap = run.walk[k] - run.walk_mirror[k];
            assert!((gap - run.gap * run.difference[k] as f64).abs() < 1e-9 * (1.0 + run.walk[k].abs()));
        }
        if let Some(c) = run.coupling_step {
            coupled += 1;
            assert!(run.difference[c..].iter().all(|&w| w == 1));
            assert!(run.difference[..c].iter().all(|&w| w <= 0));
        }
    }
    assert!(coupled > 0);
}

#[test]
fn planar_walk_difference_is_a_multiple_of_the_gap() {
    let m = uniform_model(DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -0.6]));
    let setup = CouplingSetup::new(&m, 1e-6).unwrap();
    let (x, y) = (DVector::from_vec(vec![0.05, -0.02]), DVector::from_vec(vec![0.0, 0.0]));
    for i in 0..50 {
        let run = setup.run_with_steps(3.0, &x, &y, 32, &mut RngStream::new(5, i)).unwrap();
        for k in 0..run.walk.len() {
            let gap = run.walk[k] - run.walk_mirror[k];
            assert!((gap - run.gap * run.difference[k] as f64).abs() < 1e-9);
        }
    }
}

#[test]
fn both_mineka_marginals_are_the_jump_law() {
    let nu_bar = truncate(
        &LevyMeasure::density(PiecewiseDensity::uniform(-1.0, 1.0, 1.0).unwrap()).unwrap(),
        1e-3,
    )
    .unwrap()
    .normalized()
    .unwrap();
    let a = DVector::from_element(1, -0.4);
    let mut rng = RngStream::new(8, 0);
    let (mut u, mut v, mut direct) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..20_000 {
        let d = mineka_pair(&nu_bar, &a, &mut rng).unwrap();
        assert!(d.delta_u[0] == 0.0 || (d.delta_u[0].abs() - 0.4).abs() < 1e-12);
        u.push(d.u[0]);
        v.push(d.u[0] + d.delta_u[0]);
        direct.push(nu_bar.sample(&mut rng).unwrap()[0]);
    }
    assert!(ks_two_sample(&u, &direct).p_value > 1e-3);
    assert!(ks_two_sample(&v, &direct).p_value > 1e-3);
}

#[test]
fn unnormalized_measure_is_rejected() {
    let nu = truncate(&LevyMeasure::atomic(vec![Atom::new(vec![1.0], 3.0)]).unwrap(), 0.1).unwrap();
    let err = mineka_pair(&nu, &DVector::from_element(1, 0.5), &mut RngStream::new(0, 0)).unwrap_err();
    assert!(matches!(err, ou_coupling::Error::Precondition(_)));
}

#[test]
fn jordan_block_fails_the_gate() {
    let m = uniform_model(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    assert!(matches!(CouplingSetup::new(&m, 1e-3), Err(ou_coupling::Error::SpectralGate(_))));
}
