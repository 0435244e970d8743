mod common;

use coda_zero::geometry::ilr_pivot;
use coda_zero::impute::{
    apply_ceiling, lr_da, lr_em, lr_svd, mult_km, mult_lognorm, mult_repl, pls_em, run_method, DaParams, EmParams,
    Method, MethodParams, PlsComponents, PlsParams, Status, SvdParams,
};
use coda_zero::DetectionLimits;
use common::{aln_sample, censor_columns, rank2_composition, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn masked(x: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if x[(i, j)] == 0.0 {
                v.push((i, j));
            }
        }
    }
    v
}

#[test]
fn lr_em_is_reference_invariant() {
    let truth = aln_sample(20, 5, 4);
    let (x, dl) = censor_columns(&truth, &[0, 1, 2], 0.25);
    let a = lr_em(&x, &dl, &EmParams { reference: Some(4), ..EmParams::default() }).unwrap();
    let b = lr_em(&x, &dl, &EmParams { reference: Some(3), ..EmParams::default() }).unwrap();
    assert!(a.status.is_ok() && b.status.is_ok());
    assert!(a.diagnostics.converged.unwrap());
    let diff = (&a.imputed - &b.imputed).amax();
    assert!(diff < 1e-6, "{diff}");
    for (i, j) in masked(&x) {
        assert!(a.imputed[(i, j)] > 0.0 && a.imputed[(i, j)] <= dl.get(i, j) * (1.0 + 1e-9));
    }
    for i in 0..20 {
        for j in 0..5 {
            if x[(i, j)] > 0.0 {
                assert_eq!(a.imputed[(i, j)].to_bits(), x[(i, j)].to_bits());
            }
        }
    }
    let last = *a.diagnostics.change_trace.last().unwrap();
    assert!(last < 1e-4);
}

#[test]
fn lr_em_singular_design_fails() {
    // more parts than rows: least squares cannot be fitted
    let truth = aln_sample(6, 9, 1);
    let (x, dl) = censor_columns(&truth, &[0], 0.4);
    let out = lr_em(&x, &dl, &EmParams::default()).unwrap();
    assert!(matches!(out.status, Status::Failed(_)), "{:?}", out.status);
}

#[test]
fn full_rank_pls_matches_lr_em() {
    let truth = aln_sample(30, 5, 8);
    let (x, dl) = censor_columns(&truth, &[0, 2], 0.3);
    let em = lr_em(&x, &dl, &EmParams { max_iter: 2000, tol: 1e-12, reference: None }).unwrap();
    let pls = pls_em(
        &x,
        &dl,
        &PlsParams { components: PlsComponents::Fixed(3), max_iter: 2000, tol: 1e-12 },
    )
    .unwrap();
    assert!(em.diagnostics.converged.unwrap() && pls.diagnostics.converged.unwrap());
    let diff = (&em.imputed - &pls.imputed).amax();
    assert!(diff < 1e-6, "{diff}");
    assert!(pls.diagnostics.components.iter().all(|(_, k)| *k == 3));
}

#[test]
fn cross_validated_pls_records_components() {
    let truth = aln_sample(40, 8, 3);
    let (x, dl) = censor_columns(&truth, &[1, 3, 5], 0.3);
    let out = pls_em(&x, &dl, &PlsParams::default()).unwrap();
    assert!(out.status.is_ok());
    let parts: Vec<usize> = out.diagnostics.components.iter().map(|(p, _)| *p).collect();
    assert_eq!(parts, vec![1, 3, 5]);
    for (i, j) in masked(&x) {
        assert!(out.imputed[(i, j)] <= dl.get(i, j) * (1.0 + 1e-9));
    }
}

#[test]
fn lr_svd_recovers_rank_two_truth() {
    let (truth, coords) = rank2_composition(40, 10, 21);
    let mut r = rng(99);
    let mut x = truth.clone();
    let mut cells = 0;
    while cells < 40 {
        let (i, j) = (r.random_range(0..40), r.random_range(0..10));
        if x[(i, j)] > 0.0 && x.row(i).iter().filter(|v| **v == 0.0).count() < 3 {
            x[(i, j)] = 0.0;
            cells += 1;
        }
    }
    let dl = DetectionLimits::full(truth.map(|v| 1.5 * v)).unwrap();
    let params = SvdParams { max_iter: 100_000, tol: 1e-15, ..SvdParams::default() };
    let out = lr_svd(&x, &dl, &params).unwrap();
    assert!(out.status.is_ok());
    let got = ilr_pivot(&out.imputed, 0).unwrap().values;
    let rows: Vec<usize> = (0..40).filter(|&i| x.row(i).iter().any(|v| *v == 0.0)).collect();
    let mse: f64 = rows
        .iter()
        .map(|&i| (got.row(i) - coords.row(i)).norm_squared())
        .sum::<f64>()
        / (rows.len() * 9) as f64;
    assert!(mse.sqrt() < 1e-6, "rmse {}", mse.sqrt());
}

#[test]
fn lr_da_is_reproducible_and_bounded() {
    let truth = aln_sample(25, 4, 6);
    let (x, dl) = censor_columns(&truth, &[0, 1], 0.2);
    let params = DaParams { n_iter: 300, burn_in: 100, reference: None };
    let a = lr_da(&x, &dl, &params, &mut rng(5)).unwrap();
    let b = lr_da(&x, &dl, &params, &mut rng(5)).unwrap();
    assert_eq!(a.imputed, b.imputed);
    for (i, j) in masked(&x) {
        assert!(a.imputed[(i, j)] < dl.get(i, j));
    }
}

#[test]
fn lr_da_tracks_lr_em() {
    let truth = aln_sample(60, 4, 12);
    let (x, dl) = censor_columns(&truth, &[0, 1], 0.15);
    let em = lr_em(&x, &dl, &EmParams { max_iter: 500, tol: 1e-10, reference: None }).unwrap();
    let cells = masked(&x);
    let alr = |m: &DMatrix<f64>, i: usize, j: usize| (m[(i, j)] / m[(i, 3)]).ln();
    let params = DaParams { n_iter: 3000, burn_in: 500, reference: None };
    let mut total = 0.0;
    for seed in 0..10 {
        let da = lr_da(&x, &dl, &params, &mut rng(seed)).unwrap();
        let mad: f64 = cells.iter().map(|&(i, j)| (alr(&da.imputed, i, j) - alr(&em.imputed, i, j)).abs()).sum::<f64>()
            / cells.len() as f64;
        total += mad;
    }
    let mean_mad = total / 10.0;
    eprintln!("da-em {mean_mad}");
    assert!(mean_mad < 0.05, "{mean_mad}");
}

#[test]
fn mult_lognorm_beats_fixed_fraction_in_log_error() {
    // lognormal column censored at its 0.2 quantile; paired over 100 seeds
    let mut wins = 0;
    let (mut err_ln, mut err_repl) = (0.0, 0.0);
    for seed in 0..100 {
        let mut r = rng(1000 + seed);
        let n = 200;
        let truth = DMatrix::from_fn(n, 3, |_, j| {
            if j == 0 {
                common::normal(&mut r).exp()
            } else {
                50.0 + 10.0 * r.random::<f64>()
            }
        });
        let (x, dl) = censor_columns(&truth, &[0], 0.2);
        let a = mult_lognorm(&x, &dl, &mut r, false).unwrap();
        let b = mult_repl(&x, &dl, 0.65).unwrap();
        let cells = masked(&x);
        let sq = |m: &DMatrix<f64>| {
            cells
                .iter()
                .map(|&(i, j)| (m[(i, j)] / m[(i, 1)]).ln() - (truth[(i, j)] / truth[(i, 1)]).ln())
                .map(|e| e * e)
                .sum::<f64>()
                / cells.len() as f64
        };
        let (ea, eb) = (sq(&a.imputed), sq(&b.imputed));
        err_ln += ea;
        err_repl += eb;
        wins += usize::from(ea < eb);
        for &(i, j) in &cells {
            assert!(a.imputed[(i, j)] > 0.0 && a.imputed[(i, j)] < dl.get(i, j));
        }
    }
    eprintln!("msle {err_ln} vs {err_repl}, wins {wins}");
    assert!(err_ln < err_repl, "{err_ln} vs {err_repl}");
    assert!(wins > 50, "{wins}");
}

#[test]
fn mult_km_imputes_below_limit() {
    let truth = aln_sample(50, 4, 2);
    let (x, dl) = censor_columns(&truth, &[0, 2], 0.3);
    let out = mult_km(&x, &dl, &mut rng(3), 50).unwrap();
    assert!(out.status.is_ok());
    for (i, j) in masked(&x) {
        assert!(out.imputed[(i, j)] < dl.get(i, j));
    }
    // untouched column 1 keeps its ratios with column 3
    for i in 0..50 {
        let before = x[(i, 1)] / x[(i, 3)];
        let after = out.imputed[(i, 1)] / out.imputed[(i, 3)];
        assert!((before - after).abs() <= 1e-12 * before);
    }
}

#[test]
fn every_method_is_deterministic_and_respects_observed_cells() {
    let truth = aln_sample(40, 6, 17).map(|v| (v * 10.0).round() + 1.0);
    let (x, dl) = censor_columns(&truth, &[1, 3], 0.3);
    let params = MethodParams {
        da: DaParams { n_iter: 200, burn_in: 50, reference: None },
        ..MethodParams::default()
    };
    for method in Method::ALL {
        let a = run_method(method, &x, &dl, &params, &mut rng(8)).unwrap();
        let b = run_method(method, &x, &dl, &params, &mut rng(8)).unwrap();
        assert_eq!(a.imputed, b.imputed, "{method}");
        assert_eq!(a.status, Status::Ok, "{method}");
        assert!(a.diagnostics.runtime_s >= 0.0);
        if method.is_multiplicative() || method == Method::Gbm {
            continue;
        }
        for i in 0..40 {
            for j in 0..6 {
                if x[(i, j)] > 0.0 {
                    assert_eq!(a.imputed[(i, j)].to_bits(), x[(i, j)].to_bits(), "{method}");
                } else {
                    assert!(a.imputed[(i, j)] > 0.0, "{method}");
                }
            }
        }
    }
}

#[test]
fn ceiling_of_imputation_has_unit_floor() {
    let truth = aln_sample(30, 4, 5).map(|v| (v * 5.0).round() + 1.0);
    let (x, dl) = censor_columns(&truth, &[0], 0.3);
    let out = mult_repl(&x, &dl, 0.65).unwrap();
    let c = apply_ceiling(&out).unwrap();
    assert!(c.imputed.iter().all(|v| *v >= 1.0 && v.fract() == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn multiplicative_replacement_keeps_ratios(
        vals in prop::collection::vec(prop_oneof![Just(0.0), 0.5f64..100.0], 6),
        dl in 0.01f64..0.4,
    ) {
        prop_assume!(vals.iter().any(|v| *v > 0.0));
        let x = DMatrix::from_row_slice(2, 3, &vals);
        prop_assume!(x.row_iter().all(|r| r.iter().any(|v| *v > 0.0)));
        let limits = DetectionLimits::uniform(dl, 2, 3).unwrap();
        let out = mult_repl(&x, &limits, 0.65).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..3 {
                    if x[(i, j)] > 0.0 && x[(i, k)] > 0.0 {
                        let want = x[(i, j)] / x[(i, k)];
                        let got = out.imputed[(i, j)] / out.imputed[(i, k)];
                        prop_assert!((want - got).abs() <= 1e-12 * want.max(1.0));
                    }
                }
            }
            let total_in: f64 = x.row(i).sum();
            prop_assert!((out.imputed.row(i).sum() - total_in).abs() < 1e-9 * total_in);
        }
    }
}
