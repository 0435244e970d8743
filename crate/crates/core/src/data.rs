//! Labelled matrix containers shared by every module.
//!
//! Rows are samples (compositions), columns are parts. Numerical routines take
//! plain `nalgebra::DMatrix` views; these wrappers carry labels and validate
//! the invariants at construction.

use nalgebra::DMatrix;

use crate::error::{contract, domain, CodaError, Result};

/// `true` marks a cell treated as zero / censored.
pub type CensoringMask = DMatrix<bool>;

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn check_labels(rows: &[String], cols: &[String], n: usize, d: usize) -> Result<()> {
    if rows.len() != n || cols.len() != d {
        return contract(format!(
            "label counts ({}, {}) do not match matrix shape ({n}, {d})",
            rows.len(),
            cols.len()
        ));
    }
    Ok(())
}

/// Real-valued n×D composition matrix, either strict (all entries > 0) or
/// zero-bearing (entries ≥ 0).
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    values: DMatrix<f64>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl CompositionMatrix {
    pub fn new(values: DMatrix<f64>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        let (n, d) = values.shape();
        if n < 2 || d < 2 {
            return contract(format!("composition matrix needs n >= 2 and D >= 2, got {n}x{d}"));
        }
        check_labels(&row_labels, &col_labels, n, d)?;
        for ((i, j), v) in values.iter().enumerate().map(|(k, v)| ((k % n, k / n), v)) {
            if !v.is_finite() {
                return domain(format!("non-finite entry at ({i}, {j})"));
            }
            if *v < 0.0 {
                return domain(format!("negative entry {v} at ({i}, {j})"));
            }
        }
        Ok(Self { values, row_labels, col_labels })
    }

    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let (n, d) = values.shape();
        Self::new(values, default_labels("s", n), default_labels("p", d))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn is_strict(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn zero_mask(&self) -> CensoringMask {
        zero_mask(&self.values)
    }
}

/// Nonnegative integer counts, lattice-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    counts: DMatrix<u64>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl CountMatrix {
    pub fn new(counts: DMatrix<u64>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        let (n, d) = counts.shape();
        check_labels(&row_labels, &col_labels, n, d)?;
        Ok(Self { counts, row_labels, col_labels })
    }

    pub fn from_counts(counts: DMatrix<u64>) -> Self {
        let (n, d) = counts.shape();
        Self {
            row_labels: default_labels("s", n),
            col_labels: default_labels("p", d),
            counts,
        }
    }

    /// Converts an integer-valued real matrix; rejects negative or fractional cells.
    pub fn from_real(values: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = values.shape();
        let mut counts = DMatrix::<u64>::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                let v = values[(i, j)];
                if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
                    return domain(format!("cell ({i}, {j}) = {v} is not a nonnegative integer count"));
                }
                counts[(i, j)] = v as u64;
            }
        }
        Ok(Self::from_counts(counts))
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    pub fn nrows(&self) -> usize {
        self.counts.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.counts.ncols()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn to_real(&self) -> DMatrix<f64> {
        self.counts.map(|c| c as f64)
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts.row(i).iter().sum()
    }

    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.counts.iter().filter(|&&c| c == 0).count();
        zeros as f64 / self.counts.len().max(1) as f64
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let n = self.nrows();
        let counts = DMatrix::from_fn(n, cols.len(), |i, k| self.counts[(i, cols[k])]);
        Self {
            counts,
            row_labels: self.row_labels.clone(),
            col_labels: cols.iter().map(|&c| self.col_labels[c].clone()).collect(),
        }
    }

    pub(crate) fn with_counts(&self, counts: DMatrix<u64>) -> Self {
        Self {
            counts,
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
        }
    }
}

/// Positive detection limits for every cell; column-broadcast limits are expanded on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionLimits(DMatrix<f64>);

impl DetectionLimits {
    pub fn full(limits: DMatrix<f64>) -> Result<Self> {
        if limits.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return domain("detection limits must be finite and > 0");
        }
        Ok(Self(limits))
    }

    pub fn broadcast(per_column: &[f64], nrows: usize) -> Result<Self> {
        Self::full(DMatrix::from_fn(nrows, per_column.len(), |_, j| per_column[j]))
    }

    pub fn uniform(value: f64, nrows: usize, ncols: usize) -> Result<Self> {
        Self::full(DMatrix::from_element(nrows, ncols, value))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

pub fn zero_mask(values: &DMatrix<f64>) -> CensoringMask {
    values.map(|v| v == 0.0)
}

pub(crate) fn require_strict(x: &DMatrix<f64>, what: &str) -> Result<()> {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let v = x[(i, j)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(CodaError::Domain(format!(
                    "{what} requires strictly positive finite entries; found {v} at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}
