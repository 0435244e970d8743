//! Iterative low-rank imputation in pivot coordinates with box constraints.

use nalgebra::DMatrix;

use super::multiplicative::mult_repl;
use super::{check_input, mask_of, Diagnostics, ImputationOutcome, Status, DEFAULT_FRACTION};
use crate::data::DetectionLimits;
use crate::error::{contract, Result};
use crate::geometry::pivot_basis;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdParams {
    pub rank: usize,
    /// Weight of the observed data against the low-rank fit on observed cells.
    pub weight_beta: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SvdParams {
    fn default() -> Self {
        Self { rank: 2, weight_beta: 0.5, max_iter: 200, tol: 1e-6 }
    }
}

/// Best rank-`rank` approximation, singular values in descending order.
fn truncated(y: &DMatrix<f64>, rank: usize) -> Option<DMatrix<f64>> {
    let svd = y.clone().svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for &k in order.iter().take(rank) {
        out += svd.singular_values[k] * u.column(k) * vt.row(k);
    }
    Some(out)
}

/// Log-ratio SVD imputation.
///
/// Starting from multiplicative replacement at 0.65·dl, each sweep takes the
/// rank-`rank` reconstruction of the pivot coordinates of the current log
/// matrix, maps it back to log scale anchored on each row's observed cells,
/// blends observed cells with weight `weight_beta` on the data, and clips
/// censored cells at ln dl. The returned matrix keeps observed cells verbatim.
pub fn lr_svd(x: &DMatrix<f64>, dl: &DetectionLimits, params: &SvdParams) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    let (n, d) = x.shape();
    let max_rank = n.min(d - 1).saturating_sub(1);
    if params.rank < 1 || params.rank > max_rank {
        return contract(format!("rank must lie in 1..={max_rank}, got {}", params.rank));
    }
    if !(0.0..=1.0).contains(&params.weight_beta) || params.max_iter == 0 || !(params.tol > 0.0) {
        return contract("weight_beta must lie in [0, 1], max_iter >= 1 and tol > 0");
    }
    let mask = mask_of(x);
    let mut diagnostics = Diagnostics {
        negative_rows: vec![false; n],
        converged: Some(true),
        ..Diagnostics::default()
    };
    if !mask.iter().any(|m| *m) {
        return Ok(ImputationOutcome::ok(x.clone(), diagnostics));
    }
    if x.row_iter().any(|r| r.iter().all(|v| *v == 0.0)) {
        return Ok(ImputationOutcome::failed(x, "row without positive parts"));
    }

    let start = mult_repl(x, dl, DEFAULT_FRACTION)?;
    let init = if start.status == Status::Ok {
        start.imputed
    } else {
        diagnostics.notes.push("multiplicative start degenerate; used plain 0.65*DL".into());
        DMatrix::from_fn(n, d, |i, j| if mask[(i, j)] { DEFAULT_FRACTION * dl.get(i, j) } else { x[(i, j)] })
    };
    let data_logs = x.map(|v| if v > 0.0 { v.ln() } else { 0.0 });
    let dl_logs = dl.matrix().map(f64::ln);
    let mut g = init.map(f64::ln);
    let h = pivot_basis(d, 0)?;
    let beta = params.weight_beta;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_iter {
        iterations += 1;
        let mut clr = g.clone();
        for mut row in clr.row_iter_mut() {
            let m = row.mean();
            row.add_scalar_mut(-m);
        }
        let coords = &clr * &h;
        let recon = match truncated(&coords, params.rank) {
            Some(r) => r,
            None => return Ok(ImputationOutcome::failed(x, "SVD failed")),
        };
        let recon_clr = recon * h.transpose();
        let mut next = g.clone();
        for i in 0..n {
            let (mut shift, mut count) = (0.0, 0usize);
            for j in 0..d {
                if !mask[(i, j)] {
                    shift += data_logs[(i, j)] - recon_clr[(i, j)];
                    count += 1;
                }
            }
            let shift = shift / count as f64;
            for j in 0..d {
                let fit = recon_clr[(i, j)] + shift;
                next[(i, j)] = if mask[(i, j)] {
                    fit.min(dl_logs[(i, j)])
                } else {
                    (1.0 - beta) * fit + beta * data_logs[(i, j)]
                };
            }
        }
        let change = (&next - &g).norm() / g.norm().max(f64::MIN_POSITIVE);
        g = next;
        diagnostics.change_trace.push(change);
        if !change.is_finite() {
            return Ok(ImputationOutcome::failed(x, "non-finite iterate"));
        }
        if change < params.tol {
            converged = true;
            break;
        }
    }
    diagnostics.iterations = iterations;
    diagnostics.converged = Some(converged);
    let mut out = x.clone();
    for j in 0..d {
        for i in 0..n {
            if mask[(i, j)] {
                out[(i, j)] = g[(i, j)].exp().min(dl.get(i, j));
            }
        }
    }
    if out.iter().any(|v| !(*v > 0.0)) {
        return Ok(ImputationOutcome::failed(x, "imputed value underflowed"));
    }
    Ok(ImputationOutcome { imputed: out, status: Status::Ok, diagnostics })
}
