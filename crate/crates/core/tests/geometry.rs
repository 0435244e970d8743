use coda_zero::geometry::{
    aitchison_distance, alr, clr, close_rows, ilr_pivot, inverse_alr, inverse_clr, inverse_ilr, pivot_basis,
    variation_matrix,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn composition(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0f64..6.0, d).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop_oneof![Just(3usize), Just(5), Just(20)].prop_flat_map(|d| (composition(d), composition(d)))
}

fn two_rows(x: &[f64], y: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, x.len(), &[x, y].concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ilr_is_an_isometry((x, y) in pair(), pivot in 0usize..3) {
        let m = two_rows(&x, &y);
        let z = ilr_pivot(&m, pivot).unwrap();
        let euclid = (z.values.row(0) - z.values.row(1)).norm();
        prop_assert!((euclid - aitchison_distance(&x, &y).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn clr_rows_sum_to_zero_and_invert((x, y) in pair()) {
        let m = two_rows(&x, &y);
        let c = clr(&m).unwrap();
        for i in 0..2 {
            prop_assert!(c.values.row(i).sum().abs() < 1e-10);
        }
        let back = inverse_clr(&c).unwrap();
        prop_assert!((back - close_rows(&m, 1.0).unwrap()).amax() < 1e-10);
    }

    #[test]
    fn alr_and_ilr_round_trip((x, y) in pair(), reference in 0usize..3) {
        let m = two_rows(&x, &y);
        let closed = close_rows(&m, 1.0).unwrap();
        prop_assert!((inverse_alr(&alr(&m, reference).unwrap()).unwrap() - &closed).amax() < 1e-10);
        prop_assert!((inverse_ilr(&ilr_pivot(&m, reference).unwrap()).unwrap() - &closed).amax() < 1e-10);
    }

    #[test]
    fn distance_ignores_scale((x, y) in pair(), a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let d = aitchison_distance(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * b).collect();
        prop_assert!((aitchison_distance(&xs, &ys).unwrap() - d).abs() < 1e-12 * d.max(1.0));
        prop_assert!((aitchison_distance(&y, &x).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn pivot_basis_is_orthonormal(d in 2usize..25, pivot in 0usize..25) {
        let pivot = pivot % d;
        let v = pivot_basis(d, pivot).unwrap();
        let gram = v.transpose() * &v;
        prop_assert!((gram - DMatrix::identity(d - 1, d - 1)).amax() < 1e-12);
        for k in 0..d - 1 {
            prop_assert!(v.column(k).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn variation_matrix_is_symmetric(rows in prop::collection::vec(composition(4), 3..8)) {
        let m = DMatrix::from_row_slice(rows.len(), 4, &rows.concat());
        let t = variation_matrix(&m).unwrap();
        let t = &t.values;
        for j in 0..4 {
            prop_assert_eq!(t[(j, j)], 0.0);
            for k in 0..4 {
                prop_assert!((t[(j, k)] - t[(k, j)]).abs() < 1e-12);
                prop_assert!(t[(j, k)] >= 0.0);
            }
        }
    }
}
