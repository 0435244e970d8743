//! Censored-regression EM in log-ratio coordinates (least squares on ALR, or
//! PLS on pivot coordinates).

use nalgebra::{DMatrix, DVector};

use super::pls::{select_components, Pls1};
use super::{check_input, mask_of, Diagnostics, ImputationOutcome, Status, DEFAULT_FRACTION};
use crate::censored::{trunc_normal_mean, TruncatedNormalSpec};
use crate::data::DetectionLimits;
use crate::error::{contract, Result};

const SIGMA_FLOOR: f64 = 1e-10;
const CV_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EmParams {
    pub max_iter: usize,
    /// Stop when the largest change of an imputed coordinate falls below this.
    pub tol: f64,
    /// ALR reference part; defaults to the last part without zeros.
    pub reference: Option<usize>,
}

impl Default for EmParams {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-4, reference: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlsComponents {
    /// Chosen per part by 10-fold prediction error over 1..=max at the first iteration.
    CrossValidated { max: usize },
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlsParams {
    pub components: PlsComponents,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PlsParams {
    fn default() -> Self {
        Self {
            components: PlsComponents::CrossValidated { max: 10 },
            max_iter: 50,
            tol: 1e-4,
        }
    }
}

enum Coords {
    Alr(usize),
    Pivot,
}

enum Regression {
    Ols,
    Pls(PlsComponents),
}

/// One censored part's regression problem in the current log matrix.
struct Step {
    target: DVector<f64>,
    predictors: DMatrix<f64>,
    /// Per row: (scale, offset) with log value = coordinate/scale + offset.
    scale: f64,
    offsets: Vec<f64>,
}

fn build_step(logs: &DMatrix<f64>, part: usize, coords: &Coords) -> Step {
    let (n, d) = logs.shape();
    match *coords {
        Coords::Alr(r) => {
            let others: Vec<usize> = (0..d).filter(|&k| k != part && k != r).collect();
            let predictors = DMatrix::from_fn(n, others.len(), |i, c| logs[(i, others[c])] - logs[(i, r)]);
            let offsets: Vec<f64> = (0..n).map(|i| logs[(i, r)]).collect();
            let target = DVector::from_fn(n, |i, _| logs[(i, part)] - offsets[i]);
            Step { target, predictors, scale: 1.0, offsets }
        }
        Coords::Pivot => {
            let others: Vec<usize> = (0..d).filter(|&k| k != part).collect();
            let m = others.len();
            let scale = ((d - 1) as f64 / d as f64).sqrt();
            let mut predictors = DMatrix::zeros(n, m - 1);
            let mut offsets = vec![0.0; n];
            let mut vals = vec![0.0; m];
            for i in 0..n {
                for (c, &k) in others.iter().enumerate() {
                    vals[c] = logs[(i, k)];
                }
                offsets[i] = vals.iter().sum::<f64>() / m as f64;
                // pivot coordinates of the remaining parts, via suffix sums
                let mut suffix = vals.iter().sum::<f64>();
                for c in 0..m - 1 {
                    suffix -= vals[c];
                    let rest = (m - c - 1) as f64;
                    predictors[(i, c)] = (rest / (rest + 1.0)).sqrt() * (vals[c] - suffix / rest);
                }
            }
            let target = DVector::from_fn(n, |i, _| scale * (logs[(i, part)] - offsets[i]));
            Step { target, predictors, scale, offsets }
        }
    }
}

fn ols_fit(step: &Step) -> std::result::Result<(DVector<f64>, f64), String> {
    let (n, q) = step.predictors.shape();
    if n <= q + 1 {
        return Err(format!("singular: {n} rows for {} regression parameters", q + 1));
    }
    let mut design = DMatrix::from_element(n, q + 1, 1.0);
    design.columns_mut(1, q).copy_from(&step.predictors);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err("singular predictor matrix".into());
    }
    let beta = svd.solve(&step.target, 0.0).map_err(|e| e.to_string())?;
    let fitted = design * beta;
    let rss = (&step.target - &fitted).norm_squared();
    Ok((fitted, (rss / (n - q - 1) as f64).sqrt()))
}

fn pls_fit(step: &Step, k: usize) -> std::result::Result<(DVector<f64>, f64, usize), String> {
    let n = step.predictors.nrows();
    let model = Pls1::fit(&step.predictors, &step.target, k)?;
    let used = model.components();
    let beta = model.coefficients(used);
    let fitted = model.predict_with(&step.predictors, &beta);
    let rss = (&step.target - &fitted).norm_squared();
    let df = n.saturating_sub(used + 1).max(1);
    Ok((fitted, (rss / df as f64).sqrt(), used))
}

fn censored_em(
    x: &DMatrix<f64>,
    dl: &DetectionLimits,
    coords: Coords,
    regression: Regression,
    max_iter: usize,
    tol: f64,
) -> Result<ImputationOutcome> {
    let (n, d) = x.shape();
    let mask = mask_of(x);
    let parts: Vec<usize> = (0..d).filter(|&j| (0..n).any(|i| mask[(i, j)])).collect();
    let mut diagnostics = Diagnostics {
        negative_rows: vec![false; n],
        converged: Some(true),
        ..Diagnostics::default()
    };
    if parts.is_empty() {
        return Ok(ImputationOutcome::ok(x.clone(), diagnostics));
    }
    if n < 3 {
        return contract("censored regression needs at least 3 rows");
    }
    let mut logs = DMatrix::from_fn(n, d, |i, j| {
        if mask[(i, j)] {
            (DEFAULT_FRACTION * dl.get(i, j)).ln()
        } else {
            x[(i, j)].ln()
        }
    });
    let mut chosen: Vec<Option<usize>> = vec![None; d];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for &j in &parts {
            let step = build_step(&logs, j, &coords);
            let fit = match &regression {
                Regression::Ols => ols_fit(&step).map(|(f, s)| (f, s, 0)),
                Regression::Pls(selection) => {
                    let k = match (chosen[j], selection) {
                        (Some(k), _) => Ok(k),
                        (None, PlsComponents::Fixed(k)) => Ok(*k),
                        (None, PlsComponents::CrossValidated { max }) => {
                            let kmax = (*max).min(n.saturating_sub(2)).min(step.predictors.ncols()).max(1);
                            select_components(&step.predictors, &step.target, kmax, CV_FOLDS)
                        }
                    };
                    k.and_then(|k| {
                        chosen[j] = Some(k);
                        pls_fit(&step, k)
                    })
                }
            };
            let (fitted, sigma, used) = match fit {
                Ok(v) => v,
                Err(reason) => {
                    let mut out = ImputationOutcome::failed(x, format!("part {j}: {reason}"));
                    out.diagnostics.iterations = iterations;
                    return Ok(out);
                }
            };
            if matches!(regression, Regression::Pls(_)) {
                diagnostics.components.retain(|(p, _)| *p != j);
                diagnostics.components.push((j, used));
            }
            let sigma = sigma.max(SIGMA_FLOOR);
            for i in 0..n {
                if !mask[(i, j)] {
                    continue;
                }
                let bound = step.scale * (dl.get(i, j).ln() - step.offsets[i]);
                let spec = TruncatedNormalSpec::new(fitted[i], sigma, bound)?;
                let m = trunc_normal_mean(&spec);
                diagnostics.flagged_cells += usize::from(m.flagged);
                max_change = max_change.max((m.value - step.target[i]).abs());
                logs[(i, j)] = m.value / step.scale + step.offsets[i];
            }
        }
        diagnostics.change_trace.push(max_change);
        if !max_change.is_finite() {
            let mut out = ImputationOutcome::failed(x, "non-finite imputed coordinates");
            out.diagnostics.iterations = iterations;
            return Ok(out);
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    diagnostics.iterations = iterations;
    diagnostics.converged = Some(converged);
    if !converged {
        diagnostics.notes.push(format!("no convergence within {max_iter} iterations"));
    }
    let mut out = x.clone();
    for j in 0..d {
        for i in 0..n {
            if mask[(i, j)] {
                out[(i, j)] = logs[(i, j)].exp();
            }
        }
    }
    if out.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Ok(ImputationOutcome::failed(x, "imputed values underflowed or overflowed"));
    }
    Ok(ImputationOutcome { imputed: out, status: Status::Ok, diagnostics })
}

/// Index of the last part without zeros, or the validated user choice.
pub(crate) fn alr_reference(x: &DMatrix<f64>, reference: Option<usize>) -> Result<usize> {
    let clean = |j: usize| x.column(j).iter().all(|v| *v > 0.0);
    match reference {
        Some(r) if r >= x.ncols() => contract(format!("reference {r} out of range")),
        Some(r) if !clean(r) => contract(format!("reference part {r} contains zeros")),
        Some(r) => Ok(r),
        None => match (0..x.ncols()).rev().find(|&j| clean(j)) {
            Some(r) => Ok(r),
            None => contract("no zero-free part available as ALR reference"),
        },
    }
}

/// EM imputation with least-squares regressions in ALR coordinates.
///
/// Parts with zeros are visited in ascending order; each regression uses the
/// current values of every other part, and censored cells are replaced by the
/// conditional mean of the fitted normal truncated at ln(dl/x_ref).
pub fn lr_em(x: &DMatrix<f64>, dl: &DetectionLimits, params: &EmParams) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    if params.max_iter == 0 || !(params.tol > 0.0) {
        return contract("max_iter must be >= 1 and tol > 0");
    }
    if x.iter().all(|v| *v > 0.0) {
        return censored_em(x, dl, Coords::Alr(0), Regression::Ols, params.max_iter, params.tol);
    }
    let r = alr_reference(x, params.reference)?;
    censored_em(x, dl, Coords::Alr(r), Regression::Ols, params.max_iter, params.tol)
}

/// EM imputation with PLS regressions in pivot coordinates: the part being
/// imputed is the pivot and is regressed on the pivot coordinates of the rest.
pub fn pls_em(x: &DMatrix<f64>, dl: &DetectionLimits, params: &PlsParams) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    if params.max_iter == 0 || !(params.tol > 0.0) {
        return contract("max_iter must be >= 1 and tol > 0");
    }
    let (n, d) = x.shape();
    if d < 3 {
        return contract("PLS imputation needs at least 3 parts");
    }
    match params.components {
        PlsComponents::Fixed(k) if k == 0 || k > (n - 1).min(d - 2) => {
            return contract(format!("n_components must lie in 1..={}", (n - 1).min(d - 2)));
        }
        PlsComponents::CrossValidated { max: 0 } => return contract("component search needs max >= 1"),
        _ => {}
    }
    if x.row_iter().any(|r| r.iter().all(|v| *v == 0.0)) {
        return contract("every row needs a positive part");
    }
    censored_em(
        x,
        dl,
        Coords::Pivot,
        Regression::Pls(params.components),
        params.max_iter,
        params.tol,
    )
}
