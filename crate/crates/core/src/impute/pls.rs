//! PLS1 regression by NIPALS with centering, plus k-fold component selection.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Pls1 {
    x_mean: DVector<f64>,
    y_mean: f64,
    weights: DMatrix<f64>,
    loadings: DMatrix<f64>,
    y_loadings: Vec<f64>,
}

impl Pls1 {
    /// Fits up to `max_components` latent components. Stops early once the
    /// response residual or the predictor residual is exhausted.
    pub(crate) fn fit(x: &DMatrix<f64>, y: &DVector<f64>, max_components: usize) -> Result<Self, String> {
        let (n, q) = x.shape();
        let x_mean = DVector::from_fn(q, |j, _| x.column(j).mean());
        let y_mean = y.mean();
        let mut xr = x.clone();
        for j in 0..q {
            let m = x_mean[j];
            xr.column_mut(j).add_scalar_mut(-m);
        }
        let mut yr = y.add_scalar(-y_mean);
        let x_scale = xr.norm();
        if !(x_scale > 1e-12 * (1.0 + x.norm())) {
            return Err("degenerate latent space: predictors are constant".into());
        }
        let y_scale = yr.norm();
        let mut w_cols = Vec::new();
        let mut p_cols = Vec::new();
        let mut qs = Vec::new();
        for _ in 0..max_components.min(q).min(n.saturating_sub(1)) {
            let mut w = xr.tr_mul(&yr);
            let wn = w.norm();
            if !(wn > 1e-12 * x_scale * y_scale.max(1e-300)) || yr.norm() <= 1e-12 * y_scale {
                break;
            }
            w /= wn;
            let t = &xr * &w;
            let tt = t.norm_squared();
            if !(tt > 1e-24 * x_scale * x_scale) {
                break;
            }
            let p = xr.tr_mul(&t) / tt;
            let qa = yr.dot(&t) / tt;
            xr -= &t * p.transpose();
            yr.axpy(-qa, &t, 1.0);
            w_cols.push(w);
            p_cols.push(p);
            qs.push(qa);
        }
        Ok(Self {
            x_mean,
            y_mean,
            weights: stack(&w_cols, q),
            loadings: stack(&p_cols, q),
            y_loadings: qs,
        })
    }

    pub(crate) fn components(&self) -> usize {
        self.y_loadings.len()
    }

    /// Regression coefficients using the first `k` components: W (PᵀW)⁻¹ q.
    pub(crate) fn coefficients(&self, k: usize) -> DVector<f64> {
        let q = self.x_mean.len();
        let k = k.min(self.components());
        if k == 0 {
            return DVector::zeros(q);
        }
        let w = self.weights.columns(0, k);
        let p = self.loadings.columns(0, k);
        let ptw = p.transpose() * w;
        let qv = DVector::from_column_slice(&self.y_loadings[..k]);
        // PᵀW is unit upper triangular for NIPALS, LU is plenty.
        let c = ptw.lu().solve(&qv).unwrap_or_else(|| qv.clone());
        w * c
    }

    pub(crate) fn predict_with(&self, x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
        let offset = self.y_mean - self.x_mean.dot(beta);
        (x * beta).add_scalar(offset)
    }
}

fn stack(cols: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

/// Number of components in 1..=`max_components` minimising the k-fold
/// prediction error; fold of row i is i mod `folds`.
pub(crate) fn select_components(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    max_components: usize,
    folds: usize,
) -> Result<usize, String> {
    let n = x.nrows();
    let folds = folds.min(n).max(2);
    let kmax = max_components.max(1);
    let mut press = vec![0.0; kmax];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
        let test: Vec<usize> = (0..n).filter(|i| i % folds == f).collect();
        if test.is_empty() {
            continue;
        }
        let xt = x.select_rows(&train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let xv = x.select_rows(&test);
        let model = Pls1::fit(&xt, &yt, kmax)?;
        for (k, slot) in press.iter_mut().enumerate() {
            let beta = model.coefficients(k + 1);
            let pred = model.predict_with(&xv, &beta);
            *slot += test.iter().enumerate().map(|(r, &i)| (y[i] - pred[r]).powi(2)).sum::<f64>();
        }
    }
    let best = press
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k + 1)
        .unwrap_or(1);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_pls_is_least_squares() {
        let x = DMatrix::from_fn(12, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * (i * j) as f64);
        let y = DVector::from_fn(12, |i, _| (i as f64).sin() * 2.0 + 0.3 * i as f64);
        let model = Pls1::fit(&x, &y, 3).unwrap();
        let beta = model.coefficients(3);
        let pred = model.predict_with(&x, &beta);

        let mut design = DMatrix::from_element(12, 4, 1.0);
        design.columns_mut(1, 3).copy_from(&x);
        let ols = design.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let ols_pred = design * ols;
        assert!((pred - ols_pred).amax() < 1e-10);
    }

    #[test]
    fn constant_predictors_fail() {
        let x = DMatrix::from_element(5, 2, 3.0);
        let y = DVector::from_fn(5, |i, _| i as f64);
        assert!(Pls1::fit(&x, &y, 2).is_err());
    }

    #[test]
    fn selection_prefers_signal_components() {
        let x = DMatrix::from_fn(40, 4, |i, j| ((i * (j + 2)) % 7) as f64 + (i as f64 * 0.37 * (j + 1) as f64).cos());
        let y = DVector::from_fn(40, |i, _| x[(i, 0)] - 2.0 * x[(i, 2)]);
        let k = select_components(&x, &y, 4, 10).unwrap();
        assert!(k >= 2);
    }
}
