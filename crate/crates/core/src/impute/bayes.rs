use std::str::FromStr;

use nalgebra::DMatrix;

use super::{Diagnostics, ImputationOutcome, Status};
use crate::data::CountMatrix;
use crate::error::{contract, CodaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Haldane,
    Perks,
    Jeffreys,
    BayesLaplace,
}

impl FromStr for PriorKind {
    type Err = CodaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "haldane" => Ok(PriorKind::Haldane),
            "perks" => Ok(PriorKind::Perks),
            "jeffreys" => Ok(PriorKind::Jeffreys),
            "bayeslaplace" | "bl" => Ok(PriorKind::BayesLaplace),
            _ => contract(format!("unknown prior '{s}'")),
        }
    }
}

/// Dirichlet prior with strength `s` and center `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrior {
    pub name: Option<PriorKind>,
    pub strength: f64,
    pub center: Vec<f64>,
}

impl DirichletPrior {
    /// Uniform-center prior: s = 0, 1, D/2, D for Haldane, Perks, Jeffreys, Bayes–Laplace.
    pub fn named(kind: PriorKind, parts: usize) -> Result<Self> {
        if parts < 2 {
            return contract("a prior needs at least two parts");
        }
        let d = parts as f64;
        let strength = match kind {
            PriorKind::Haldane => 0.0,
            PriorKind::Perks => 1.0,
            PriorKind::Jeffreys => d / 2.0,
            PriorKind::BayesLaplace => d,
        };
        Ok(Self {
            name: Some(kind),
            strength,
            center: vec![1.0 / d; parts],
        })
    }

    pub fn custom(strength: f64, center: Vec<f64>) -> Result<Self> {
        if !(strength >= 0.0) || !strength.is_finite() {
            return contract(format!("prior strength must be >= 0, got {strength}"));
        }
        if center.iter().any(|t| !(*t > 0.0)) || (center.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return contract("prior center must be positive and sum to 1");
        }
        Ok(Self { name: None, strength, center })
    }
}

/// Bayesian–multiplicative replacement on counts.
///
/// In a row with total N, a zero part j becomes s·t_j/(N+s) and a positive
/// part becomes (c_j/N)·(1 − s/(N+s)·Σ_{zero k} t_k). Output rows are proportions.
pub fn gbm_cmult(counts: &CountMatrix, prior: &DirichletPrior) -> Result<ImputationOutcome> {
    let (n, d) = (counts.nrows(), counts.ncols());
    if prior.center.len() != d {
        return contract(format!("prior has {} parts, data has {d}", prior.center.len()));
    }
    let c = counts.counts();
    let mut out = DMatrix::zeros(n, d);
    let mut any_zero = false;
    for i in 0..n {
        let total = counts.row_total(i) as f64;
        if total == 0.0 {
            return contract(format!("row {i} has zero total"));
        }
        let s = prior.strength;
        let zero_mass: f64 = (0..d).filter(|&j| c[(i, j)] == 0).map(|j| prior.center[j]).sum();
        any_zero |= zero_mass > 0.0;
        let shrink = 1.0 - s / (total + s) * zero_mass;
        for j in 0..d {
            out[(i, j)] = if c[(i, j)] == 0 {
                s * prior.center[j] / (total + s)
            } else {
                c[(i, j)] as f64 / total * shrink
            };
        }
    }
    let diagnostics = Diagnostics {
        negative_rows: vec![false; n],
        ..Diagnostics::default()
    };
    let status = if any_zero && prior.strength == 0.0 {
        Status::Degenerate("zero prior strength cannot replace zeros".into())
    } else {
        Status::Ok
    };
    Ok(ImputationOutcome { imputed: out, status, diagnostics })
}
