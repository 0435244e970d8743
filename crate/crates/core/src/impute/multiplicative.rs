use nalgebra::DMatrix;
use rand::Rng;

use super::{check_input, mask_of, Diagnostics, ImputationOutcome, Status, DEFAULT_FRACTION};
use crate::censored::{
    fit_censored_lognormal, km_draw_below, km_left_censored, trunc_normal_draw, trunc_normal_mean,
    TruncatedNormalSpec,
};
use crate::data::DetectionLimits;
use crate::error::{contract, Result};

/// Puts `delta` into the zero cells and rescales the positive cells of each
/// row by 1 − Σδ/C, C being the row total of `x`. Row totals are preserved.
///
/// Returns the adjusted matrix and, per row, whether the factor was ≤ 0.
/// Rows without any positive cell are returned as an error string.
pub fn multiplicative_adjust(
    x: &DMatrix<f64>,
    delta: &DMatrix<f64>,
) -> std::result::Result<(DMatrix<f64>, Vec<bool>), String> {
    let (n, d) = x.shape();
    let mut out = x.clone();
    let mut bad = vec![false; n];
    for i in 0..n {
        let total: f64 = x.row(i).sum();
        if total <= 0.0 {
            return Err(format!("row {i} has no positive part"));
        }
        let imputed: f64 = (0..d).filter(|&j| x[(i, j)] == 0.0).map(|j| delta[(i, j)]).sum();
        if imputed == 0.0 {
            continue;
        }
        let factor = 1.0 - imputed / total;
        bad[i] = factor <= 0.0;
        for j in 0..d {
            out[(i, j)] = if x[(i, j)] == 0.0 { delta[(i, j)] } else { x[(i, j)] * factor };
        }
    }
    Ok((out, bad))
}

fn finish(x: &DMatrix<f64>, delta: &DMatrix<f64>, mut diagnostics: Diagnostics) -> ImputationOutcome {
    match multiplicative_adjust(x, delta) {
        Err(reason) => {
            let mut out = ImputationOutcome::failed(x, reason);
            out.diagnostics.notes = diagnostics.notes;
            out
        }
        Ok((imputed, bad)) => {
            let count = bad.iter().filter(|b| **b).count();
            diagnostics.negative_rows = bad;
            let status = if count > 0 {
                Status::Degenerate(format!("{count} row(s) with nonpositive adjustment factor"))
            } else {
                Status::Ok
            };
            ImputationOutcome { imputed, status, diagnostics }
        }
    }
}

/// Multiplicative simple replacement: zero cells get `fraction`·dl.
pub fn mult_repl(x: &DMatrix<f64>, dl: &DetectionLimits, fraction: f64) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return contract(format!("fraction must lie in (0, 1), got {fraction}"));
    }
    let delta = dl.matrix() * fraction;
    Ok(finish(x, &delta, Diagnostics::default()))
}

/// Column-wise observed values and the limits of the masked cells.
fn column_split(x: &DMatrix<f64>, dl: &DetectionLimits, j: usize) -> (Vec<f64>, Vec<f64>) {
    let mut observed = Vec::new();
    let mut limits = Vec::new();
    for i in 0..x.nrows() {
        if x[(i, j)] == 0.0 {
            limits.push(dl.get(i, j));
        } else {
            observed.push(x[(i, j)]);
        }
    }
    (observed, limits)
}

/// Multiplicative lognormal replacement.
///
/// Each column with zeros gets a censored lognormal fit; zero cells receive
/// the geometric mean of the fitted law below their limit (or a truncated
/// draw when `random`). Columns whose fit fails fall back to 0.65·dl.
pub fn mult_lognorm<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    dl: &DetectionLimits,
    rng: &mut R,
    random: bool,
) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    let mask = mask_of(x);
    let mut delta = dl.matrix() * DEFAULT_FRACTION;
    let mut diagnostics = Diagnostics::default();
    for j in 0..x.ncols() {
        let (observed, limits) = column_split(x, dl, j);
        if limits.is_empty() {
            continue;
        }
        let fit = if observed.len() >= 2 {
            fit_censored_lognormal(&observed, &limits)
        } else {
            contract("fewer than two observed values")
        };
        let fit = match fit {
            Ok(f) => f,
            Err(e) => {
                diagnostics.notes.push(format!("column {j}: lognormal fit failed ({e}); used 0.65*DL"));
                continue;
            }
        };
        for i in 0..x.nrows() {
            if !mask[(i, j)] {
                continue;
            }
            let spec = TruncatedNormalSpec::new(fit.mu_log, fit.sigma_log, dl.get(i, j).ln())?;
            let v = if random { trunc_normal_draw(&spec, rng) } else { trunc_normal_mean(&spec) };
            diagnostics.flagged_cells += usize::from(v.flagged);
            delta[(i, j)] = v.value.exp().min(dl.get(i, j));
        }
    }
    Ok(finish(x, &delta, diagnostics))
}

/// Multiplicative Kaplan–Meier replacement: zero cells get the geometric mean
/// of `draws` draws from the smoothed KM CDF restricted below their limit.
pub fn mult_km<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    dl: &DetectionLimits,
    rng: &mut R,
    draws: usize,
) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    if draws == 0 {
        return contract("draws must be at least 1");
    }
    let mask = mask_of(x);
    let mut delta = DMatrix::zeros(x.nrows(), x.ncols());
    let mut diagnostics = Diagnostics::default();
    for j in 0..x.ncols() {
        let (observed, limits) = column_split(x, dl, j);
        if limits.is_empty() {
            continue;
        }
        let ecdf = match km_left_censored(&observed, &limits) {
            Ok(e) => e,
            Err(e) => return Ok(ImputationOutcome::failed(x, format!("column {j}: {e}"))),
        };
        for i in 0..x.nrows() {
            if !mask[(i, j)] {
                continue;
            }
            let limit = dl.get(i, j);
            let mut log_sum = 0.0;
            for _ in 0..draws {
                let d = km_draw_below(&ecdf, limit, rng)?;
                diagnostics.flagged_cells += usize::from(d.flagged);
                log_sum += d.value.ln();
            }
            delta[(i, j)] = (log_sum / draws as f64).exp().min(limit);
        }
    }
    Ok(finish(x, &delta, diagnostics))
}
