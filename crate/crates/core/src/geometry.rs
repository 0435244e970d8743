//! Simplex geometry: closure, ALR/CLR/pivot-ILR coordinates and their
//! inverses, the Aitchison distance and the variation matrix.
//!
//! All transforms take row-wise compositions and refuse zero-bearing input;
//! replacing zeros is the job of [`crate::impute`].
//!
//! Column indices are 0-based throughout.

use nalgebra::{DMatrix, DVector};

use crate::data::require_strict;
use crate::error::{contract, domain, CodaError, Result};

/// Which log-ratio map produced a set of coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogRatioKind {
    /// Additive log-ratio with the given reference part.
    Alr { reference: usize },
    Clr,
    /// Pivot coordinates with the given part moved to the first position.
    Ilr { pivot: usize },
}

/// Log-ratio coordinates together with what is needed to invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioCoordinates {
    pub values: DMatrix<f64>,
    pub kind: LogRatioKind,
    /// Number of parts of the source compositions.
    pub parts: usize,
    /// D×(D−1) orthonormal contrast matrix for ILR (rows in original part order).
    pub basis: Option<DMatrix<f64>>,
}

/// Symmetric D×D matrix of log-ratio variances, zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationMatrix {
    pub values: DMatrix<f64>,
}

impl VariationMatrix {
    /// Parts ordered by increasing log-ratio variance against `target`, excluding the target itself.
    pub fn closest_parts(&self, target: usize) -> Vec<usize> {
        let d = self.values.nrows();
        let mut parts: Vec<usize> = (0..d).filter(|&k| k != target).collect();
        parts.sort_by(|&a, &b| {
            self.values[(target, a)]
                .total_cmp(&self.values[(target, b)])
                .then(a.cmp(&b))
        });
        parts
    }
}

/// Rescales `x` so it sums to `total`.
pub fn closure(x: &[f64], total: f64) -> Result<Vec<f64>> {
    if !(total > 0.0) || !total.is_finite() {
        return contract(format!("closure total must be positive, got {total}"));
    }
    if x.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return domain("closure requires finite nonnegative entries");
    }
    let sum: f64 = x.iter().sum();
    if sum <= 0.0 {
        return Err(CodaError::Degenerate("closure of an all-zero vector".into()));
    }
    Ok(x.iter().map(|v| v / sum * total).collect())
}

/// Row-wise closure of a nonnegative matrix.
pub fn close_rows(x: &DMatrix<f64>, total: f64) -> Result<DMatrix<f64>> {
    let mut out = x.clone();
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let closed = closure(&row, total)?;
        for (j, v) in closed.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

fn check_vector(x: &[f64], what: &str) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return domain(format!("{what} requires strictly positive parts, found {v}"));
    }
    Ok(())
}

/// Aitchison distance, with the 1/(2D) normalisation of the pairwise log-ratio sum.
///
/// Evaluated through centred logs: the double sum equals 2D·Σ(a_i − ā)² with
/// a = ln x − ln y, so the result is the Euclidean norm of the centred difference.
pub fn aitchison_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return contract(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    if x.len() < 2 {
        return contract("compositions need at least two parts");
    }
    check_vector(x, "aitchison_distance")?;
    check_vector(y, "aitchison_distance")?;
    Ok(aitchison_unchecked(x.iter().copied(), y.iter().copied()))
}

pub(crate) fn aitchison_unchecked(
    x: impl Iterator<Item = f64>,
    y: impl Iterator<Item = f64>,
) -> f64 {
    let diff: Vec<f64> = x.zip(y).map(|(a, b)| a.ln() - b.ln()).collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    diff.iter().map(|a| (a - mean).powi(2)).sum::<f64>().sqrt()
}

pub(crate) fn row_distance(x: &DMatrix<f64>, i: usize, y: &DMatrix<f64>, k: usize) -> f64 {
    aitchison_unchecked(x.row(i).iter().copied(), y.row(k).iter().copied())
}

/// Additive log-ratio coordinates against part `reference`: entry (i, k) is
/// ln(x_ik / x_i,ref) for every k ≠ ref, in original part order.
pub fn alr(x: &DMatrix<f64>, reference: usize) -> Result<LogRatioCoordinates> {
    let (n, d) = x.shape();
    if reference >= d {
        return contract(format!("reference part {reference} out of range for D = {d}"));
    }
    require_strict(x, "alr")?;
    let values = DMatrix::from_fn(n, d - 1, |i, k| {
        let part = if k < reference { k } else { k + 1 };
        (x[(i, part)] / x[(i, reference)]).ln()
    });
    Ok(LogRatioCoordinates {
        values,
        kind: LogRatioKind::Alr { reference },
        parts: d,
        basis: None,
    })
}

/// Inverse ALR; rows are closed to 1.
pub fn inverse_alr(z: &LogRatioCoordinates) -> Result<DMatrix<f64>> {
    let LogRatioKind::Alr { reference } = z.kind else {
        return contract("inverse_alr called on non-ALR coordinates");
    };
    let d = z.parts;
    if z.values.ncols() + 1 != d || reference >= d {
        return contract("ALR coordinates do not match their metadata");
    }
    let n = z.values.nrows();
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let shift = z.values.row(i).iter().fold(0.0f64, |m, v| m.max(*v));
        let mut total = 0.0;
        for part in 0..d {
            let v = if part == reference {
                (-shift).exp()
            } else {
                let k = if part < reference { part } else { part - 1 };
                (z.values[(i, k)] - shift).exp()
            };
            out[(i, part)] = v;
            total += v;
        }
        for part in 0..d {
            out[(i, part)] /= total;
        }
    }
    Ok(out)
}

/// Centred log-ratio coordinates; every row sums to zero.
pub fn clr(x: &DMatrix<f64>) -> Result<LogRatioCoordinates> {
    require_strict(x, "clr")?;
    Ok(LogRatioCoordinates {
        values: clr_unchecked(x),
        kind: LogRatioKind::Clr,
        parts: x.ncols(),
        basis: None,
    })
}

pub(crate) fn clr_unchecked(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut logs = x.map(f64::ln);
    center_rows(&mut logs);
    logs
}

pub(crate) fn center_rows(m: &mut DMatrix<f64>) {
    let d = m.ncols() as f64;
    for mut row in m.row_iter_mut() {
        let mean = row.sum() / d;
        row.add_scalar_mut(-mean);
    }
}

/// Exponentiates centred logs and closes each row to 1.
pub fn inverse_clr(z: &LogRatioCoordinates) -> Result<DMatrix<f64>> {
    if z.kind != LogRatioKind::Clr || z.values.ncols() != z.parts {
        return contract("inverse_clr called on non-CLR coordinates");
    }
    Ok(exp_close_rows(&z.values))
}

pub(crate) fn exp_close_rows(logs: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logs.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        row.apply(|v| *v = (*v - max).exp());
        let total = row.sum();
        row.apply(|v| *v /= total);
    }
    out
}

/// D×(D−1) Helmert-type pivot basis: column i contrasts the i-th part of the
/// permuted order (pivot first) against the geometric mean of all later parts.
/// Rows are returned in original part order.
pub fn pivot_basis(parts: usize, pivot: usize) -> Result<DMatrix<f64>> {
    if parts < 2 || pivot >= parts {
        return contract(format!("pivot {pivot} invalid for D = {parts}"));
    }
    let order = pivot_order(parts, pivot);
    let mut h = DMatrix::zeros(parts, parts - 1);
    for i in 0..parts - 1 {
        let rest = (parts - i - 1) as f64;
        let lead = (rest / (rest + 1.0)).sqrt();
        let tail = -1.0 / (rest * (rest + 1.0)).sqrt();
        h[(order[i], i)] = lead;
        for &part in &order[i + 1..] {
            h[(part, i)] = tail;
        }
    }
    Ok(h)
}

/// Part order with `pivot` moved to the front, the rest in original order.
pub fn pivot_order(parts: usize, pivot: usize) -> Vec<usize> {
    std::iter::once(pivot)
        .chain((0..parts).filter(|&p| p != pivot))
        .collect()
}

/// Pivot (ILR) coordinates. The first coordinate is
/// √((D−1)/D)·ln(x_pivot / gm(other parts)).
pub fn ilr_pivot(x: &DMatrix<f64>, pivot: usize) -> Result<LogRatioCoordinates> {
    let d = x.ncols();
    let basis = pivot_basis(d, pivot)?;
    require_strict(x, "ilr_pivot")?;
    let values = clr_unchecked(x) * &basis;
    Ok(LogRatioCoordinates {
        values,
        kind: LogRatioKind::Ilr { pivot },
        parts: d,
        basis: Some(basis),
    })
}

/// Inverse pivot ILR; rows are closed to 1.
pub fn inverse_ilr(z: &LogRatioCoordinates) -> Result<DMatrix<f64>> {
    let LogRatioKind::Ilr { pivot } = z.kind else {
        return contract("inverse_ilr called on non-ILR coordinates");
    };
    let Some(basis) = &z.basis else {
        return contract("ILR coordinates carry no basis");
    };
    let d = z.parts;
    if basis.shape() != (d, d.saturating_sub(1)) || z.values.ncols() + 1 != d {
        return contract("ILR basis shape does not match the coordinates");
    }
    let expected = pivot_basis(d, pivot)?;
    if (basis - &expected).amax() > 1e-12 {
        return contract("ILR basis is not the pivot basis named by the coordinates");
    }
    Ok(exp_close_rows(&(&z.values * basis.transpose())))
}

/// Sample variances (n − 1 denominator) of every pairwise log-ratio column.
pub fn variation_matrix(x: &DMatrix<f64>) -> Result<VariationMatrix> {
    let (n, d) = x.shape();
    if n < 2 {
        return contract("variation matrix needs at least two rows");
    }
    require_strict(x, "variation_matrix")?;
    let mut values = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j + 1..d {
            let ratios: Vec<f64> = (0..n).map(|i| (x[(i, j)] / x[(i, k)]).ln()).collect();
            let mean = ratios.iter().sum::<f64>() / n as f64;
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            values[(j, k)] = var;
            values[(k, j)] = var;
        }
    }
    Ok(VariationMatrix { values })
}

/// Geometric mean of a strictly positive slice.
pub fn geometric_mean(x: &[f64]) -> f64 {
    (x.iter().map(|v| v.ln()).sum::<f64>() / x.len() as f64).exp()
}

pub(crate) fn sample_covariance(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.nrows();
    if n < 2 {
        return contract("covariance needs at least two rows");
    }
    let means = DVector::from_fn(z.ncols(), |j, _| z.column(j).mean());
    let mut centred = z.clone();
    for (j, mut col) in centred.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    Ok(centred.transpose() * &centred / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    /// Direct evaluation of the double sum with 1/(2D) normalisation.
    fn distance_oracle(x: &[f64], y: &[f64]) -> f64 {
        let d = x.len();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += ((x[i] / x[j]).ln() - (y[i] / y[j]).ln()).powi(2);
            }
        }
        (s / (2.0 * d as f64)).sqrt()
    }

    #[test]
    fn closure_examples() {
        assert_eq!(closure(&[1.0, 1.0, 2.0], 1.0).unwrap(), vec![0.25, 0.25, 0.5]);
        assert_eq!(closure(&[0.25, 0.25, 0.5], 100.0).unwrap(), vec![25.0, 25.0, 50.0]);
        assert_eq!(closure(&[3.0, 0.0, 7.0], 1.0).unwrap(), vec![0.3, 0.0, 0.7]);
        assert!(matches!(closure(&[0.0, 0.0], 1.0), Err(CodaError::Degenerate(_))));
    }

    #[test]
    fn distance_examples() {
        let x = [0.2, 0.3, 0.5];
        assert_eq!(aitchison_distance(&x, &x).unwrap(), 0.0);
        let d = aitchison_distance(&[0.2, 0.8], &[0.5, 0.5]).unwrap();
        let oracle = distance_oracle(&[0.2, 0.8], &[0.5, 0.5]);
        assert!((d - oracle).abs() < 1e-14);
        assert!((d - 0.9803).abs() < 5e-5, "{d}");
        let scaled = aitchison_distance(&[2.0, 8.0], &[0.5, 0.5]).unwrap();
        assert!((scaled - d).abs() < 1e-12);
        assert!(matches!(aitchison_distance(&[0.0, 1.0], &[1.0, 1.0]), Err(CodaError::Domain(_))));
    }

    #[test]
    fn alr_examples() {
        let z = alr(&mat(&[&[1.0, 1.0, 1.0]]), 1).unwrap();
        assert_eq!(z.values.as_slice(), &[0.0, 0.0]);
        let z = alr(&mat(&[&[E, 1.0, 1.0]]), 2).unwrap();
        assert!((z.values[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(z.values[(0, 1)], 0.0);
        assert!(alr(&mat(&[&[0.0, 1.0, 1.0]]), 2).is_err());
        let back = inverse_alr(&alr(&mat(&[&[2.0, 3.0, 5.0]]), 0).unwrap()).unwrap();
        for (a, b) in back.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn clr_examples() {
        let z = clr(&mat(&[&[1.0, 1.0, 1.0]])).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
        let z = clr(&mat(&[&[E * E, 1.0 / E, 1.0 / E]])).unwrap();
        for (a, b) in z.values.iter().zip([2.0, -1.0, -1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn pivot_first_coordinate() {
        let x = mat(&[&[0.1, 0.6, 0.3, 2.0]]);
        for pivot in 0..4 {
            let z = ilr_pivot(&x, pivot).unwrap();
            let others: Vec<f64> = (0..4).filter(|&p| p != pivot).map(|p| x[(0, p)]).collect();
            let expected = (3.0f64 / 4.0).sqrt() * (x[(0, pivot)] / geometric_mean(&others)).ln();
            assert!((z.values[(0, 0)] - expected).abs() < 1e-14);
        }
        let z = ilr_pivot(&mat(&[&[1.0, 1.0, 1.0]]), 2).unwrap();
        assert!(z.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn pivot_basis_is_orthonormal_contrast() {
        for d in [2, 3, 7] {
            for pivot in 0..d {
                let h = pivot_basis(d, pivot).unwrap();
                let gram = h.transpose() * &h;
                assert!((gram - DMatrix::identity(d - 1, d - 1)).amax() < 1e-12);
                for col in h.column_iter() {
                    assert!(col.sum().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverse_ilr_examples() {
        let z = LogRatioCoordinates {
            values: DMatrix::zeros(1, 2),
            kind: LogRatioKind::Ilr { pivot: 0 },
            parts: 3,
            basis: Some(pivot_basis(3, 0).unwrap()),
        };
        let x = inverse_ilr(&z).unwrap();
        assert!(x.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

        let mut wrong = z.clone();
        wrong.kind = LogRatioKind::Ilr { pivot: 1 };
        assert!(matches!(inverse_ilr(&wrong), Err(CodaError::Contract(_))));
        let mut alr_kind = z;
        alr_kind.kind = LogRatioKind::Alr { reference: 0 };
        assert!(inverse_ilr(&alr_kind).is_err());
    }

    #[test]
    fn variation_matrix_examples() {
        let x = mat(&[&[2.0, 1.0, 5.0], &[4.0, 2.0, 1.0], &[6.0, 3.0, 2.5]]);
        let t = variation_matrix(&x).unwrap();
        assert_eq!(t.values[(0, 1)], 0.0);
        for j in 0..3 {
            assert_eq!(t.values[(j, j)], 0.0);
        }
        // loop oracle for (0, 2)
        let r: Vec<f64> = (0..3).map(|i| (x[(i, 0)] / x[(i, 2)]).ln()).collect();
        let m = r.iter().sum::<f64>() / 3.0;
        let v = r.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 2.0;
        assert!((t.values[(0, 2)] - v).abs() < 1e-14);
        assert_eq!(t.values[(0, 2)], t.values[(2, 0)]);
        assert_eq!(t.closest_parts(0), vec![1, 2]);
    }
}
