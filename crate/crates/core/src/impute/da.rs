//! Data augmentation in ALR coordinates: a Gibbs sampler alternating
//! truncated-normal draws for censored coordinates with normal–inverse-Wishart
//! parameter draws.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::em::alr_reference;
use super::{check_input, mask_of, Diagnostics, ImputationOutcome, Status, DEFAULT_FRACTION};
use crate::censored::{trunc_normal_draw, TruncatedNormalSpec};
use crate::data::DetectionLimits;
use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DaParams {
    pub n_iter: usize,
    pub burn_in: usize,
    pub reference: Option<usize>,
}

impl Default for DaParams {
    fn default() -> Self {
        Self { n_iter: 1500, burn_in: 500, reference: None }
    }
}

/// Draws a precision matrix Λ ~ Wishart(df, S⁻¹), i.e. Σ = Λ⁻¹ ~ IW(df, S),
/// returning the lower Cholesky factor of Λ (Bartlett decomposition).
fn wishart_precision_factor<R: Rng + ?Sized>(
    scatter_chol: &Cholesky<f64, Dyn>,
    df: usize,
    rng: &mut R,
) -> Option<DMatrix<f64>> {
    let q = scatter_chol.l().nrows();
    // S⁻¹ = M Mᵀ with M = L⁻ᵀ
    let m = scatter_chol.l().try_inverse()?.transpose();
    let mut a = DMatrix::zeros(q, q);
    for i in 0..q {
        let shape = (df - i) as f64 / 2.0;
        let chi2: f64 = Gamma::new(shape, 2.0).ok()?.sample(rng);
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    // Λ = (M A)(M A)ᵀ; with (M A)ᵀ = Q R the lower factor is Rᵀ
    let r = (m * a).transpose().qr().r();
    let mut l = r.transpose();
    for j in 0..q {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
    }
    (0..q).all(|j| l[(j, j)] > 0.0 && l[(j, j)].is_finite()).then_some(l)
}

/// ALR data augmentation. The output is the average of the post-burn-in draws
/// of each censored coordinate, mapped back with the reference part.
pub fn lr_da<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    dl: &DetectionLimits,
    params: &DaParams,
    rng: &mut R,
) -> Result<ImputationOutcome> {
    check_input(x, dl)?;
    if params.n_iter == 0 || params.burn_in >= params.n_iter {
        return contract("need n_iter >= 1 and burn_in < n_iter");
    }
    let (n, d) = x.shape();
    let mask = mask_of(x);
    let mut diagnostics = Diagnostics {
        negative_rows: vec![false; n],
        ..Diagnostics::default()
    };
    if !mask.iter().any(|m| *m) {
        return Ok(ImputationOutcome::ok(x.clone(), diagnostics));
    }
    let r = alr_reference(x, params.reference)?;
    let cols: Vec<usize> = (0..d).filter(|&k| k != r).collect();
    let q = cols.len();
    if n <= q {
        return Ok(ImputationOutcome::failed(
            x,
            format!("{n} rows cannot support a {q}-dimensional covariance draw"),
        ));
    }
    let mut z = DMatrix::from_fn(n, q, |i, c| {
        let j = cols[c];
        let v = if mask[(i, j)] { DEFAULT_FRACTION * dl.get(i, j) } else { x[(i, j)] };
        (v / x[(i, r)]).ln()
    });
    let bounds = DMatrix::from_fn(n, q, |i, c| (dl.get(i, cols[c]) / x[(i, r)]).ln());
    let censored: Vec<(usize, Vec<usize>)> = (0..n)
        .map(|i| (i, (0..q).filter(|&c| mask[(i, cols[c])]).collect::<Vec<_>>()))
        .filter(|(_, cs)| !cs.is_empty())
        .collect();
    let mut sums = DMatrix::<f64>::zeros(n, q);
    let kept = params.n_iter - params.burn_in;
    let mut ridged = 0usize;

    for it in 0..params.n_iter {
        // parameter step
        let mean = DVector::from_fn(q, |c, _| z.column(c).mean());
        let mut centered = z.clone();
        for c in 0..q {
            centered.column_mut(c).add_scalar_mut(-mean[c]);
        }
        let scatter = centered.tr_mul(&centered);
        let chol = match Cholesky::new(scatter.clone()) {
            Some(c) => c,
            None => {
                ridged += 1;
                let eps = 1e-8 * scatter.trace() / d as f64;
                let ridge = &scatter + DMatrix::identity(q, q) * eps;
                match Cholesky::new(ridge) {
                    Some(c) => c,
                    None => return Ok(ImputationOutcome::failed(x, "scatter matrix not positive definite")),
                }
            }
        };
        let lw = match wishart_precision_factor(&chol, n - 1, rng) {
            Some(l) => l,
            None => return Ok(ImputationOutcome::failed(x, "covariance draw not positive definite")),
        };
        // μ ~ N(z̄, Σ/n) with Σ = (Lw Lwᵀ)⁻¹: μ = z̄ + Lw⁻ᵀ ε / √n
        let eps = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let shift = match lw.transpose().solve_upper_triangular(&eps) {
            Some(s) => s,
            None => return Ok(ImputationOutcome::failed(x, "singular precision factor")),
        };
        let mu = mean + shift / (n as f64).sqrt();
        let precision = &lw * lw.transpose();

        // imputation step: Gibbs over censored coordinates, row by row
        for (i, cs) in &censored {
            for &c in cs {
                let lcc = precision[(c, c)];
                let mut acc = 0.0;
                for k in 0..q {
                    if k != c {
                        acc += precision[(c, k)] * (z[(*i, k)] - mu[k]);
                    }
                }
                let cond_mean = mu[c] - acc / lcc;
                let spec = TruncatedNormalSpec::new(cond_mean, (1.0 / lcc).sqrt(), bounds[(*i, c)]);
                let spec = match spec {
                    Ok(s) => s,
                    Err(_) => return Ok(ImputationOutcome::failed(x, "non-finite conditional distribution")),
                };
                let draw = trunc_normal_draw(&spec, rng);
                diagnostics.flagged_cells += usize::from(draw.flagged);
                z[(*i, c)] = draw.value;
            }
        }
        if it >= params.burn_in {
            for (i, cs) in &censored {
                for &c in cs {
                    sums[(*i, c)] += z[(*i, c)];
                }
            }
        }
    }
    diagnostics.iterations = params.n_iter;
    if ridged > 0 {
        diagnostics.notes.push(format!("ridge added to {ridged} scatter matrices"));
    }
    let mut out = x.clone();
    for (i, cs) in &censored {
        for &c in cs {
            let v = x[(*i, r)] * (sums[(*i, c)] / kept as f64).exp();
            if !(v > 0.0) || !v.is_finite() {
                return Ok(ImputationOutcome::failed(x, format!("imputed value {v} at ({i}, {})", cols[c])));
            }
            out[(*i, cols[c])] = v;
        }
    }
    Ok(ImputationOutcome { imputed: out, status: Status::Ok, diagnostics })
}
