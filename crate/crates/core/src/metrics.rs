//! Distortion metrics against a zero-free truth, and failure accounting.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{require_strict, CensoringMask};
use crate::error::{contract, CodaError, Result};
use crate::geometry::{ilr_pivot, row_distance, sample_covariance};
use crate::impute::Variant;

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return contract(format!("shape mismatch: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// ‖S − S′‖_F / (D−1) for the sample covariances of the pivot coordinates.
pub fn adcs(original: &DMatrix<f64>, imputed: &DMatrix<f64>) -> Result<f64> {
    same_shape(original, imputed)?;
    if original.nrows() < 2 {
        return contract("ADCS needs at least two rows");
    }
    let s = sample_covariance(&ilr_pivot(original, 0)?.values)?;
    let t = sample_covariance(&ilr_pivot(imputed, 0)?.values)?;
    Ok((s - t).norm() / (original.ncols() - 1) as f64)
}

/// Rows against which the CED normaliser (largest pairwise distance) is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CedReference {
    /// Truth rows with no masked cell.
    #[default]
    ExcludeMasked,
    /// Every truth row.
    AllRows,
}

/// Mean Aitchison distance between truth and imputation over rows with a
/// masked cell, divided by the largest pairwise distance among unmasked truth rows.
pub fn ced(original: &DMatrix<f64>, imputed: &DMatrix<f64>, mask: &CensoringMask) -> Result<f64> {
    ced_with(original, imputed, mask, CedReference::ExcludeMasked)
}

pub fn ced_with(
    original: &DMatrix<f64>,
    imputed: &DMatrix<f64>,
    mask: &CensoringMask,
    reference: CedReference,
) -> Result<f64> {
    same_shape(original, imputed)?;
    if mask.shape() != original.shape() {
        return contract("mask shape does not match data");
    }
    require_strict(original, "ced")?;
    require_strict(imputed, "ced")?;
    let n = original.nrows();
    let masked: Vec<usize> = (0..n).filter(|&i| mask.row(i).iter().any(|m| *m)).collect();
    if masked.is_empty() {
        return contract("mask marks no rows");
    }
    let reference_rows: Vec<usize> = match reference {
        CedReference::ExcludeMasked => (0..n).filter(|i| masked.binary_search(i).is_err()).collect(),
        CedReference::AllRows => (0..n).collect(),
    };
    if reference_rows.len() < 2 {
        return contract(format!(
            "{} reference row(s): the normaliser needs at least two",
            reference_rows.len()
        ));
    }
    let mut diameter: f64 = 0.0;
    for (a, &i) in reference_rows.iter().enumerate() {
        for &k in &reference_rows[a + 1..] {
            diameter = diameter.max(row_distance(original, i, original, k));
        }
    }
    if diameter <= 1e-12 {
        return Err(CodaError::Degenerate("all reference rows are proportional".into()));
    }
    let total: f64 = masked.iter().map(|&i| row_distance(original, i, imputed, i)).sum();
    Ok(total / masked.len() as f64 / diameter)
}

/// One evaluated (method, variant, m, p, rep) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub method: String,
    pub variant: Variant,
    pub m: usize,
    pub p: f64,
    pub rep: usize,
    pub status: String,
    pub ced: Option<f64>,
    pub adcs: Option<f64>,
    pub runtime_s: Option<f64>,
    pub neg_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureSummary {
    pub method: String,
    pub m: usize,
    pub p: f64,
    pub records: usize,
    pub failure_rate: f64,
    pub degenerate_rate: f64,
    pub negative_row_incidence: f64,
    pub mean_runtime_ok: Option<f64>,
}

/// Order-independent sum: values are sorted first.
pub(crate) fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Per (method, m, p): failure and degenerate rates, negative-row incidence and
/// mean runtime of ok records. Ceil records mirror their raw twins and are
/// skipped when raw records exist for the group.
pub fn failure_accounting(records: &[MetricRecord]) -> Vec<FailureSummary> {
    let mut groups: BTreeMap<(String, usize, u64), Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.clone(), r.m, r.p.to_bits())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, m, p_bits), mut group)| {
            if group.iter().any(|r| r.variant == Variant::Raw) {
                group.retain(|r| r.variant == Variant::Raw);
            }
            let n = group.len() as f64;
            let count = |f: &dyn Fn(&MetricRecord) -> bool| group.iter().filter(|r| f(r)).count() as f64 / n;
            let mut runtimes: Vec<f64> =
                group.iter().filter(|r| r.status == "ok").filter_map(|r| r.runtime_s).collect();
            let mean_runtime_ok = (!runtimes.is_empty()).then(|| stable_sum(&mut runtimes) / runtimes.len() as f64);
            FailureSummary {
                method,
                m,
                p: f64::from_bits(p_bits),
                records: group.len(),
                failure_rate: count(&|r| r.status == "failed"),
                degenerate_rate: count(&|r| r.status == "degenerate"),
                negative_row_incidence: count(&|r| r.neg_rows > 0),
                mean_runtime_ok,
            }
        })
        .collect()
}
