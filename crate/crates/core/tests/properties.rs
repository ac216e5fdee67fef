use horlab_core::envelope::{inf_convolution, sup_convolution};
use horlab_core::geometry::heisenberg1;
use horlab_core::harness::{comparison_check, translation_lattice, translation_max_map, Verdict};
use horlab_core::io::{field_from_bytes, field_to_bytes};
use horlab_core::metric::{gauge_distance_heisenberg, EuclideanGauge, HeisenbergGauge};
use horlab_core::stats::loglog_slope;
use horlab_core::{DistanceOracle, Grid, GridFunction};
use proptest::prelude::*;

fn square(count: usize, values: Vec<f64>) -> GridFunction {
    GridFunction::new(Grid::cube(2, -1.0, 1.0, count).unwrap(), values).unwrap()
}

/// A 2-d field on a 5 × 5 grid.
fn field() -> impl Strategy<Value = GridFunction> {
    prop::collection::vec(-2.0f64..2.0, 25).prop_map(|v| square(5, v))
}

fn point3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 3)
}

/// `p·q` under the law the Heisenberg gauge is built on.
fn mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    vec![p[0] + q[0], p[1] + q[1], p[2] + q[2] + 0.5 * (p[0] * q[1] - p[1] * q[0])]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_bytes_round_trip(
        counts in prop::collection::vec(2usize..5, 1..4),
        seed in prop::collection::vec(any::<f64>(), 64),
        holes in prop::collection::vec(any::<bool>(), 64),
    ) {
        let grid = Grid::new(
            horlab_core::BoxDomain::new(vec![-1.0; counts.len()], vec![2.0; counts.len()]).unwrap(),
            counts,
        ).unwrap();
        let n = grid.len();
        let u = GridFunction::with_mask(grid, seed[..n].to_vec(), holes[..n].to_vec()).unwrap();
        let back = field_from_bytes(&field_to_bytes(&u)).unwrap();
        prop_assert_eq!(back.grid().counts(), u.grid().counts());
        prop_assert_eq!(back.mask(), u.mask());
        let same = back.values().iter().zip(u.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn comparison_ignores_a_common_shift(u in field(), v in field(), c in -5.0f64..5.0) {
        let mask = u.grid().interior_mask();
        let (a, _) = comparison_check(&u, &v, &mask, 1e-9).unwrap();
        let (b, _) = comparison_check(&u.map(|x| x + c), &v.map(|x| x + c), &mask, 1e-9).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ordered_pairs_always_compare(u in field(), bump in prop::collection::vec(0.0f64..1.0, 25)) {
        let v = GridFunction::new(u.grid().clone(), u.values().iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let (verdict, report) = comparison_check(&u, &v, &u.grid().interior_mask(), 0.0).unwrap();
        prop_assert_eq!(verdict, Verdict::Pass);
        prop_assert!(report.violations.is_empty());
    }

    #[test]
    fn envelopes_bracket_the_data(u in field(), eps in 0.05f64..1.0) {
        let e = EuclideanGauge { n: 2 };
        let up = sup_convolution(&u, eps, &e).unwrap().field;
        let down = inf_convolution(&u, eps, &e).unwrap().field;
        for k in 0..u.grid().len() {
            prop_assert!(down.value(k) <= u.value(k) && u.value(k) <= up.value(k));
        }
    }

    #[test]
    fn sup_convolution_is_a_sup_norm_contraction(u in field(), v in field(), eps in 0.05f64..1.0) {
        let e = EuclideanGauge { n: 2 };
        let a = sup_convolution(&u, eps, &e).unwrap().field;
        let b = sup_convolution(&v, eps, &e).unwrap().field;
        let lhs = a.zip_with(&b, |x, y| x - y).unwrap().sup_norm();
        let rhs = u.zip_with(&v, |x, y| x - y).unwrap().sup_norm();
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn sup_convolution_commutes_with_constants(u in field(), eps in 0.05f64..1.0, c in -3.0f64..3.0) {
        let e = EuclideanGauge { n: 2 };
        let a = sup_convolution(&u, eps, &e).unwrap().field;
        let b = sup_convolution(&u.map(|x| x + c), eps, &e).unwrap().field;
        for k in 0..u.grid().len() {
            prop_assert!((b.value(k) - a.value(k) - c).abs() <= 1e-12);
        }
    }

    #[test]
    fn sup_convolution_grows_with_epsilon(u in field(), e1 in 0.05f64..1.0, e2 in 0.05f64..1.0) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let e = EuclideanGauge { n: 2 };
        let a = sup_convolution(&u, lo, &e).unwrap().field;
        let b = sup_convolution(&u, hi, &e).unwrap().field;
        for k in 0..u.grid().len() {
            prop_assert!(a.value(k) <= b.value(k));
        }
    }

    #[test]
    fn heisenberg_envelope_brackets_the_data(values in prop::collection::vec(-1.0f64..1.0, 64), eps in 0.05f64..0.5) {
        let u = GridFunction::new(Grid::cube(3, -1.0, 1.0, 4).unwrap(), values).unwrap();
        let up = sup_convolution(&u, eps, &HeisenbergGauge).unwrap().field;
        for k in 0..u.grid().len() {
            prop_assert!(u.value(k) <= up.value(k));
        }
    }

    #[test]
    fn gauge_distance_is_a_left_invariant_metric(x in point3(), y in point3(), z in point3(), g in point3()) {
        let d = gauge_distance_heisenberg;
        prop_assert!((d(&x, &y) - d(&y, &x)).abs() <= 1e-12);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
        let shifted = d(&mul(&g, &x), &mul(&g, &y));
        prop_assert!((shifted - d(&x, &y)).abs() <= 1e-9 * (1.0 + d(&x, &y)));
        prop_assert_eq!(HeisenbergGauge.distance(&x, &x), 0.0);
    }

    #[test]
    fn translation_cells_shift_with_constants(values in prop::collection::vec(-1.0f64..1.0, 125), c in -2.0f64..2.0) {
        let grid = Grid::cube(3, -1.0, 1.0, 5).unwrap();
        let u = GridFunction::new(grid.clone(), values).unwrap();
        let sys = heisenberg1();
        let hs = translation_lattice(2, 0.3, 3);
        let mut mask = vec![false; grid.len()];
        mask[grid.node(&[2, 2, 2])] = true;
        let base = translation_max_map(&u, &u, &sys, 0.3, &hs, &hs, &mask).unwrap();
        let lifted = translation_max_map(&u.map(|x| x + c), &u, &sys, 0.3, &hs, &hs, &mask).unwrap();
        for (a, b) in base.cells.iter().zip(&lifted.cells) {
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((b.value - a.value - c).abs() <= 1e-12),
                (None, None) => {}
                _ => prop_assert!(false, "validity changed under a constant shift"),
            }
        }
        // the diagonal of an identical pair is zero
        for i in 0..hs.len() {
            if let Some(cell) = base.get(i, i) {
                prop_assert!(cell.value.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn loglog_slope_recovers_power_laws(k in -3.0f64..3.0, a in 0.1f64..10.0) {
        let xs = [0.1, 0.2, 0.4, 0.8];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| a * x.powf(k)).collect();
        prop_assert!((loglog_slope(&xs, &ys).unwrap() - k).abs() <= 1e-9);
    }
}
