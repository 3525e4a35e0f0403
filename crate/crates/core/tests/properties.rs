use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use ou_coupling::coupling::rw_exact_tail;
use ou_coupling::estimate::{tv_exact_1d, tv_histogram};
use ou_coupling::levy::{interval_overlap, svc_set, IntervalUnion, LevyMeasure};
use ou_coupling::rng::RngStream;
use ou_coupling::spectral::matrix_exponential;
use ou_coupling::symbol::{LevyTriplet, OUModel};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reflection_inequalities_hold(k in 1usize..=12, num in 0i64..8, a in 1usize..=12) {
        let r = BigRational::new(BigInt::from(num), BigInt::from(8));
        let tail = rw_exact_tail(k, &r, a).unwrap();
        prop_assert_eq!(tail.inequalities(), [true; 4]);
    }

    #[test]
    fn histogram_distance_is_bounded(shift in -3.0f64..3.0, seed in 0u64..1000, bins in 2usize..64) {
        let mut rng = RngStream::new(seed, 0);
        let x: Vec<DVector<f64>> = (0..1000)
            .map(|_| DVector::from_element(1, StandardNormal.sample(&mut rng)))
            .collect();
        let y: Vec<DVector<f64>> = x.iter().map(|v| v.add_scalar(shift)).collect();
        let tv = tv_histogram(&x, &y, bins).unwrap();
        prop_assert!((0.0..=2.0).contains(&tv.tv_hat));
        let same = tv_histogram(&x, &x, bins).unwrap();
        prop_assert_eq!(same.tv_hat, 0.0);
        let back = tv_histogram(&y, &x, bins).unwrap();
        prop_assert!((back.tv_hat - tv.tv_hat).abs() < 1e-12);
    }

    #[test]
    fn interval_overlap_is_even_and_bounded(
        raw in prop::collection::vec((-5.0f64..5.0, 0.01f64..2.0), 1..6),
        z in -4.0f64..4.0,
    ) {
        let u = IntervalUnion::new(raw.into_iter().map(|(a, w)| (a, a + w)).collect()).unwrap();
        let len = u.length();
        let o = interval_overlap(&u, z);
        prop_assert!(o >= -1e-12 && o <= len + 1e-12);
        prop_assert!((o - interval_overlap(&u, -z)).abs() < 1e-9);
        prop_assert!((interval_overlap(&u, 0.0) - len).abs() < 1e-12);
    }

    #[test]
    fn svc_sets_lose_the_removed_length(level in 0u32..8, removed in 0.0f64..0.9) {
        let s = svc_set(level, removed).unwrap();
        prop_assert!(s.length() <= 1.0 + 1e-12);
        prop_assert!(s.length() >= 1.0 - removed - 1e-12);
        prop_assert_eq!(s.len(), 1usize << level);
    }

    #[test]
    fn semigroup_property(entries in prop::collection::vec(-1.0f64..1.0, 4), s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let a = DMatrix::from_row_slice(2, 2, &entries);
        let lhs = matrix_exponential(&a, s + t).unwrap();
        let rhs = matrix_exponential(&a, s).unwrap() * matrix_exponential(&a, t).unwrap();
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_distance_is_a_metric(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0) {
        let m = OUModel::scalar(-1.0, 1.0, LevyTriplet::jumps(LevyMeasure::stable(1.0, 1.0, 1).unwrap()).unwrap()).unwrap();
        let d = |p: f64, q: f64| tv_exact_1d(&m, 0.8, p, q).unwrap();
        let (xy, yz, xz) = (d(x, y), d(y, z), d(x, z));
        prop_assert!(xz <= xy + yz + 1e-6);
        prop_assert!((xy - d(y, x)).abs() < 1e-6);
        prop_assert!((0.0..=2.0 + 1e-9).contains(&xy));
        prop_assert!(d(x, x) < 1e-9);
    }
}
