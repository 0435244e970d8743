#![allow(dead_code)]

use coda_zero::geometry::{inverse_alr, inverse_ilr, pivot_basis, LogRatioCoordinates, LogRatioKind};
use coda_zero::DetectionLimits;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// n×d additive-logistic-normal sample with correlated ALR coordinates.
pub fn aln_sample(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let q = d - 1;
    let mut mix = DMatrix::<f64>::zeros(q, q);
    for i in 0..q {
        for j in 0..=i {
            mix[(i, j)] = if i == j { 0.8 } else { 0.4 * normal(&mut r) };
        }
    }
    let z = DMatrix::from_fn(n, q, |_, _| normal(&mut r)) * mix.transpose();
    let z = DMatrix::from_fn(n, q, |i, j| z[(i, j)] + 0.3 * j as f64);
    let coords = LogRatioCoordinates {
        values: z,
        kind: LogRatioKind::Alr { reference: d - 1 },
        parts: d,
        basis: None,
    };
    inverse_alr(&coords).unwrap() * 100.0
}

/// Zeroes cells of the listed columns lying below the column's `p` quantile
/// and returns (censored data, per-cell limits equal to the column threshold).
pub fn censor_columns(x: &DMatrix<f64>, cols: &[usize], p: f64) -> (DMatrix<f64>, DetectionLimits) {
    let (n, d) = x.shape();
    let mut out = x.clone();
    let mut limits = vec![f64::INFINITY; d];
    for j in 0..d {
        let mut v: Vec<f64> = x.column(j).iter().copied().collect();
        v.sort_by(f64::total_cmp);
        limits[j] = if cols.contains(&j) {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            v[lo] + (h - lo as f64) * (v[(lo + 1).min(n - 1)] - v[lo])
        } else {
            v[0]
        };
        if cols.contains(&j) {
            for i in 0..n {
                if x[(i, j)] < limits[j] {
                    out[(i, j)] = 0.0;
                }
            }
        }
    }
    (out, DetectionLimits::broadcast(&limits, n).unwrap())
}

/// Closed composition whose pivot coordinates are exactly rank 2.
pub fn rank2_composition(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let a = DMatrix::from_fn(n, 2, |_, _| normal(&mut r));
    let b = DMatrix::from_fn(d - 1, 2, |_, _| 0.7 * normal(&mut r));
    let y = a * b.transpose();
    let coords = LogRatioCoordinates {
        values: y.clone(),
        kind: LogRatioKind::Ilr { pivot: 0 },
        parts: d,
        basis: Some(pivot_basis(d, 0).unwrap()),
    };
    (inverse_ilr(&coords).unwrap(), y)
}
