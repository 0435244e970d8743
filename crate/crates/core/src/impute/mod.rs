//! Zero-replacement methods behind one interface.
//!
//! Every imputer takes a zero-bearing matrix (zeros are the censored cells),
//! a detection-limit matrix and method parameters, and returns an
//! [`ImputationOutcome`]. Broken preconditions (shapes, parameter ranges)
//! come back as `Err`; algorithmic trouble (singular regressions, negative
//! multiplicative factors) is reported through [`Status`].

mod bayes;
mod da;
mod em;
mod multiplicative;
mod pls;
mod svd;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::DetectionLimits;
use crate::error::{contract, domain, CodaError, Result};

pub use bayes::{gbm_cmult, DirichletPrior, PriorKind};
pub use da::{lr_da, DaParams};
pub use em::{lr_em, pls_em, EmParams, PlsComponents, PlsParams};
pub use multiplicative::{mult_km, mult_lognorm, mult_repl, multiplicative_adjust};
pub use svd::{lr_svd, SvdParams};

/// Default fraction of the detection limit used by simple replacement.
pub const DEFAULT_FRACTION: f64 = 0.65;

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Failed(String),
    Degenerate(String),
}

impl Status {
    pub fn is_ok(&self) -> bool {
        matches!(self, Status::Ok)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed(_) => "failed",
            Status::Degenerate(_) => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Raw,
    Ceil,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Ceil => "ceil",
        }
    }
}

impl FromStr for Variant {
    type Err = CodaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(Variant::Raw),
            "ceil" => Ok(Variant::Ceil),
            other => contract(format!("unknown variant '{other}' (expected raw or ceil)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    /// `None` for non-iterative methods.
    pub converged: Option<bool>,
    /// Maximum change of the imputed coordinates per iteration.
    pub change_trace: Vec<f64>,
    pub negative_rows: Vec<bool>,
    pub runtime_s: f64,
    pub notes: Vec<String>,
    /// Cells produced by a numerical fallback (saturated truncation, uniform KM fallback, ridge).
    pub flagged_cells: usize,
    /// PLS components chosen per censored part at the last iteration, as (part, components).
    pub components: Vec<(usize, usize)>,
    pub variant: Option<Variant>,
}

impl Diagnostics {
    pub fn negative_row_count(&self) -> usize {
        self.negative_rows.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationOutcome {
    pub imputed: DMatrix<f64>,
    pub status: Status,
    pub diagnostics: Diagnostics,
}

impl ImputationOutcome {
    pub(crate) fn ok(imputed: DMatrix<f64>, diagnostics: Diagnostics) -> Self {
        Self { imputed, status: Status::Ok, diagnostics }
    }

    pub(crate) fn failed(input: &DMatrix<f64>, reason: impl Into<String>) -> Self {
        Self {
            imputed: input.clone(),
            status: Status::Failed(reason.into()),
            diagnostics: Diagnostics {
                negative_rows: vec![false; input.nrows()],
                ..Diagnostics::default()
            },
        }
    }
}

/// Stable method identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    MultRepl,
    MultLognorm,
    MultKm,
    LrEm,
    LrDa,
    LrSvd,
    Gbm,
    Pls,
    DlUnif,
    Add1,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::MultRepl,
        Method::MultLognorm,
        Method::MultKm,
        Method::LrEm,
        Method::LrDa,
        Method::LrSvd,
        Method::Gbm,
        Method::Pls,
        Method::DlUnif,
        Method::Add1,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Method::MultRepl => "mult_repl",
            Method::MultLognorm => "mult_lognorm",
            Method::MultKm => "mult_KMSS",
            Method::LrEm => "lr_em",
            Method::LrDa => "lr_da",
            Method::LrSvd => "lr_SVD",
            Method::Gbm => "GBM",
            Method::Pls => "PLS",
            Method::DlUnif => "dl_unif",
            Method::Add1 => "add1",
        }
    }

    /// Methods whose positive cells are rescaled by a per-row factor.
    pub fn is_multiplicative(&self) -> bool {
        matches!(self, Method::MultRepl | Method::MultLognorm | Method::MultKm | Method::Gbm)
    }

    pub fn valid_ids() -> String {
        Method::ALL.iter().map(|m| m.id()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = CodaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.id() == s)
            .ok_or_else(|| CodaError::Contract(format!("unknown method '{s}'; valid: {}", Method::valid_ids())))
    }
}

impl TryFrom<String> for Method {
    type Error = CodaError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.id().to_string()
    }
}

/// Parameters for every method, with the harness defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    pub fraction: f64,
    pub lognorm_random: bool,
    pub km_draws: usize,
    pub em: EmParams,
    pub da: DaParams,
    pub svd: SvdParams,
    pub pls: PlsParams,
    pub prior: PriorKind,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_FRACTION,
            lognorm_random: false,
            km_draws: 100,
            em: EmParams::default(),
            da: DaParams::default(),
            svd: SvdParams::default(),
            pls: PlsParams::default(),
            prior: PriorKind::BayesLaplace,
        }
    }
}

/// Runs one method and stamps the wall-clock runtime into the diagnostics.
///
/// GBM needs integer counts and returns proportions.
pub fn run_method<R: Rng + ?Sized>(
    method: Method,
    x: &DMatrix<f64>,
    dl: &DetectionLimits,
    params: &MethodParams,
    rng: &mut R,
) -> Result<ImputationOutcome> {
    let start = Instant::now();
    let mut out = match method {
        Method::MultRepl => mult_repl(x, dl, params.fraction)?,
        Method::MultLognorm => mult_lognorm(x, dl, rng, params.lognorm_random)?,
        Method::MultKm => mult_km(x, dl, rng, params.km_draws)?,
        Method::LrEm => lr_em(x, dl, &params.em)?,
        Method::LrDa => lr_da(x, dl, &params.da, rng)?,
        Method::LrSvd => lr_svd(x, dl, &params.svd)?,
        Method::Gbm => {
            let counts = crate::data::CountMatrix::from_real(x)?;
            let prior = DirichletPrior::named(params.prior, x.ncols())?;
            gbm_cmult(&counts, &prior)?
        }
        Method::Pls => pls_em(x, dl, &params.pls)?,
        Method::DlUnif => dl_unif(x, dl, rng)?,
        Method::Add1 => add1(x)?,
    };
    out.diagnostics.runtime_s = start.elapsed().as_secs_f64();
    Ok(out)
}

pub(crate) fn check_input(x: &DMatrix<f64>, dl: &DetectionLimits) -> Result<()> {
    if x.nrows() < 2 || x.ncols() < 2 {
        return contract(format!("need at least a 2x2 matrix, got {}x{}", x.nrows(), x.ncols()));
    }
    if dl.shape() != x.shape() {
        return contract(format!(
            "detection limits {:?} do not match data shape {:?}",
            dl.shape(),
            x.shape()
        ));
    }
    check_values(x)
}

pub(crate) fn check_values(x: &DMatrix<f64>) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return domain(format!("entries must be finite and nonnegative, found {v}"));
    }
    Ok(())
}

pub(crate) fn mask_of(x: &DMatrix<f64>) -> DMatrix<bool> {
    x.map(|v| v == 0.0)
}

/// Masked cell ← Uniform(0.1·dl, dl); other cells untouched.
pub fn dl_unif<R: Rng + ?Sized>(x: &DMatrix<f64>, dl: &DetectionLimits, rng: &mut R) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    let mut out = x.clone();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if x[(i, j)] == 0.0 {
                let d = dl.get(i, j);
                let u = Uniform::new(0.1 * d, d).map_err(|e| CodaError::Domain(e.to_string()))?;
                out[(i, j)] = u.sample(rng);
            }
        }
    }
    let diagnostics = Diagnostics {
        negative_rows: vec![false; x.nrows()],
        ..Diagnostics::default()
    };
    Ok(ImputationOutcome::ok(out, diagnostics))
}

/// Every zero becomes 1.
pub fn add1(x: &DMatrix<f64>) -> Result<ImputationOutcome> {
    check_values(x)?;
    let out = x.map(|v| if v == 0.0 { 1.0 } else { v });
    let diagnostics = Diagnostics {
        negative_rows: vec![false; x.nrows()],
        ..Diagnostics::default()
    };
    Ok(ImputationOutcome::ok(out, diagnostics))
}

/// ⌈v⌉ with values within 1e-12 (relative) of an integer snapped to it.
pub fn ceil_tolerant(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-12 * v.abs().max(1.0) {
        r
    } else {
        v.ceil()
    }
}

/// Upward rounding of every cell of an ok or degenerate outcome.
pub fn apply_ceiling(outcome: &ImputationOutcome) -> Result<ImputationOutcome> {
    if let Status::Failed(reason) = &outcome.status {
        return contract(format!("cannot ceil a failed outcome ({reason})"));
    }
    let mut out = outcome.clone();
    out.imputed = outcome.imputed.map(ceil_tolerant);
    out.diagnostics.variant = Some(Variant::Ceil);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, v.len(), &[v, v].concat())
    }

    #[test]
    fn add1_examples() {
        let out = add1(&row(&[0.0, 2.0, 8.0])).unwrap();
        assert_eq!(out.imputed.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 8.0]);
        let twice = add1(&out.imputed).unwrap();
        assert_eq!(twice.imputed, out.imputed);
    }

    #[test]
    fn dl_unif_mean() {
        let x = DMatrix::from_element(1000, 2, 0.0);
        let dl = DetectionLimits::uniform(1.0, 1000, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sum = 0.0;
        for _ in 0..50 {
            let out = dl_unif(&x, &dl, &mut rng).unwrap();
            assert!(out.imputed.iter().all(|v| *v >= 0.1 && *v < 1.0));
            sum += out.imputed.sum();
        }
        assert!((sum / 100_000.0 - 0.55).abs() < 0.005);
    }

    #[test]
    fn ceiling_examples() {
        assert_eq!(ceil_tolerant(0.03), 1.0);
        assert_eq!(ceil_tolerant(1.0), 1.0);
        assert_eq!(ceil_tolerant(7.2), 8.0);
        assert_eq!(ceil_tolerant(3.0000000000000004), 3.0);
        let out = add1(&row(&[0.0, 2.5, 8.0])).unwrap();
        let c = apply_ceiling(&out).unwrap();
        assert_eq!(c.imputed[(0, 1)], 3.0);
        assert_eq!(c.diagnostics.variant, Some(Variant::Ceil));
        let failed = ImputationOutcome::failed(&out.imputed, "x");
        assert!(apply_ceiling(&failed).is_err());
    }

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
        }
        let err = "lmrob".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("mult_KMSS"));
    }
}
