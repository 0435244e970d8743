//! Left-censoring toolkit shared by the parametric imputers: truncated-normal
//! moments and draws, censored lognormal maximum likelihood, and a
//! Kaplan–Meier CDF for left-censored data with a monotone smoother.

use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{contract, domain, CodaError, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Standardised truncation points below this are treated as saturated.
pub const SATURATION_Z: f64 = -37.0;
/// Offset (in units of sigma) below the truncation point returned on saturation.
pub const SATURATION_EPS: f64 = 1e-8;

pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// ln Φ(z), accurate far into the lower tail.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > -30.0 {
        norm_cdf(z).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - 0.5 * (2.0 * std::f64::consts::PI).ln() - (-z).ln()
            + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)).ln()
    }
}

/// φ(z)/Φ(z), the inverse Mills ratio for an upper truncation point.
pub fn inverse_mills(z: f64) -> f64 {
    if z > -30.0 {
        norm_pdf(z) / norm_cdf(z)
    } else {
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2))
    }
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Normal(mu, sigma²) restricted to values below `upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormalSpec {
    pub mu: f64,
    pub sigma: f64,
    pub upper: f64,
}

impl TruncatedNormalSpec {
    pub fn new(mu: f64, sigma: f64, upper: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() || upper.is_nan() {
            return contract(format!("invalid truncated normal (mu={mu}, sigma={sigma}, upper={upper})"));
        }
        Ok(Self { mu, sigma, upper })
    }

    /// Standardised truncation point (upper − mu)/sigma.
    pub fn z(&self) -> f64 {
        (self.upper - self.mu) / self.sigma
    }
}

/// A value together with a flag telling whether a numerical fallback produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub flagged: bool,
}

/// Conditional mean mu − sigma·φ(a)/Φ(a).
///
/// When Φ(a) underflows (a < −37) the result is pinned to
/// `upper − SATURATION_EPS·sigma` and flagged.
pub fn trunc_normal_mean(spec: &TruncatedNormalSpec) -> Flagged {
    let a = spec.z();
    let saturated = Flagged {
        value: spec.upper - SATURATION_EPS * spec.sigma,
        flagged: true,
    };
    if a < SATURATION_Z {
        return saturated;
    }
    let value = spec.mu - spec.sigma * inverse_mills(a);
    if value < spec.upper {
        Flagged { value, flagged: false }
    } else {
        saturated
    }
}

/// One draw below `upper`: inverse-CDF sampling, or exponential rejection in
/// the far tail (flagged).
pub fn trunc_normal_draw<R: Rng + ?Sized>(spec: &TruncatedNormalSpec, rng: &mut R) -> Flagged {
    let a = spec.z();
    if a < SATURATION_Z {
        let t = lower_tail_rejection(-a, rng);
        let mut value = spec.mu - spec.sigma * t;
        if value >= spec.upper {
            value = spec.upper - SATURATION_EPS * spec.sigma;
        }
        return Flagged { value, flagged: true };
    }
    let unit = Uniform::new(0.0f64, 1.0).expect("unit interval");
    let mass = norm_cdf(a);
    let z = loop {
        let u: f64 = unit.sample(rng);
        if u > 0.0 {
            let z = norm_ppf(u * mass);
            if z.is_finite() && z < a {
                break z;
            }
        }
    };
    Flagged {
        value: spec.mu + spec.sigma * z,
        flagged: false,
    }
}

/// Robert (1995) exponential proposal for N(0,1) restricted to [b, ∞), b > 0.
fn lower_tail_rejection<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let rate = 0.5 * (b + (b * b + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    let unit = Uniform::new(0.0f64, 1.0).expect("unit interval");
    loop {
        let t = b + exp.sample(rng);
        let u: f64 = unit.sample(rng);
        if u <= (-0.5 * (t - rate).powi(2)).exp() && t > b {
            return t;
        }
    }
}

/// Maximum-likelihood lognormal fit to positive data with left-censored points.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoredLognormalFit {
    pub mu_log: f64,
    pub sigma_log: f64,
    pub n_obs: usize,
    pub n_cens: usize,
    pub loglik: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

const FIT_MAX_ITER: usize = 200;
const FIT_GRAD_TOL: f64 = 1e-6;

struct CensoredLogLik<'a> {
    logs: &'a [f64],
    limits: &'a [f64],
}

impl CensoredLogLik<'_> {
    /// Log-likelihood, gradient and Hessian in (mu, ln sigma).
    fn eval(&self, mu: f64, eta: f64) -> (f64, [f64; 2], [[f64; 3]; 1]) {
        let sigma = eta.exp();
        let mut ll = 0.0;
        let (mut g_mu, mut g_eta) = (0.0, 0.0);
        let (mut h_mm, mut h_me, mut h_ee) = (0.0, 0.0, 0.0);
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        for &y in self.logs {
            let r = (y - mu) / sigma;
            ll += -eta - 0.5 * r * r - half_ln_2pi;
            g_mu += r / sigma;
            g_eta += r * r - 1.0;
            h_mm += -1.0 / (sigma * sigma);
            h_me += -2.0 * r / sigma;
            h_ee += -2.0 * r * r;
        }
        for &c in self.limits {
            let z = (c - mu) / sigma;
            let lam = inverse_mills(z);
            ll += log_norm_cdf(z);
            g_mu += -lam / sigma;
            g_eta += -lam * z;
            let curv = lam * (z + lam);
            h_mm += -curv / (sigma * sigma);
            h_me += -curv * z / sigma + lam / sigma;
            h_ee += -curv * z * z + lam * z;
        }
        (ll, [g_mu, g_eta], [[h_mm, h_me, h_ee]])
    }

    fn value(&self, mu: f64, eta: f64) -> f64 {
        self.eval(mu, eta).0
    }
}

/// Fits (mu, sigma) of ln X by maximum likelihood, treating each censored
/// limit L as the event ln X < ln L.
///
/// Safeguarded Newton iterations on (mu, ln sigma) with analytic derivatives,
/// falling back to gradient ascent when the Hessian is not negative definite.
/// Starts at the mean and (MLE) standard deviation of the observed logs.
pub fn fit_censored_lognormal(observed: &[f64], censored_limits: &[f64]) -> Result<CensoredLognormalFit> {
    if observed.is_empty() {
        return contract("at least one observed value is required");
    }
    if observed.len() + censored_limits.len() < 2 {
        return contract("at least two data points are required");
    }
    if observed.iter().chain(censored_limits).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return domain("observed values and censoring limits must be positive");
    }
    let logs: Vec<f64> = observed.iter().map(|v| v.ln()).collect();
    let limits: Vec<f64> = censored_limits.iter().map(|v| v.ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 && limits.is_empty() {
        return Err(CodaError::Degenerate(
            "all observed values identical and nothing censored: sigma is zero".into(),
        ));
    }
    let lik = CensoredLogLik { logs: &logs, limits: &limits };
    let mut theta = [mean, if sd > 0.0 { sd.ln() } else { 0.0 }];
    let mut trace = Vec::new();
    for iter in 0..=FIT_MAX_ITER {
        let (ll, g, [[hmm, hme, hee]]) = lik.eval(theta[0], theta[1]);
        let gnorm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        trace.push(gnorm);
        if !ll.is_finite() || !gnorm.is_finite() {
            return Err(CodaError::NonConvergence { iterations: iter, last: gnorm, trace });
        }
        if gnorm < FIT_GRAD_TOL {
            return Ok(CensoredLognormalFit {
                mu_log: theta[0],
                sigma_log: theta[1].exp(),
                n_obs: logs.len(),
                n_cens: limits.len(),
                loglik: ll,
                iterations: iter,
                gradient_norm: gnorm,
            });
        }
        if iter == FIT_MAX_ITER {
            break;
        }
        // Newton direction solves H d = -g; accept only if it is an ascent direction.
        let det = hmm * hee - hme * hme;
        let mut dir = if hmm < 0.0 && det > 0.0 {
            [(-g[0] * hee + g[1] * hme) / det, (-g[1] * hmm + g[0] * hme) / det]
        } else {
            [g[0], g[1]]
        };
        if dir[0] * g[0] + dir[1] * g[1] <= 0.0 {
            dir = [g[0], g[1]];
        }
        let slope = dir[0] * g[0] + dir[1] * g[1];
        // summation noise in ll; smaller predicted gains cannot be seen by the test below
        let noise = 1e-12 * (1.0 + ll.abs());
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = [theta[0] + step * dir[0], theta[1] + step * dir[1]];
            let cand_ll = lik.value(cand[0], cand[1]);
            if cand_ll.is_finite() && cand_ll >= ll + 1e-4 * step * slope - noise {
                theta = cand;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // Line search exhausted: the remaining gradient is numerical noise
            // unless it is still large.
            if gnorm < 1e-4 * (1.0 + ll.abs()) * f64::EPSILON.sqrt() {
                return Ok(CensoredLognormalFit {
                    mu_log: theta[0],
                    sigma_log: theta[1].exp(),
                    n_obs: logs.len(),
                    n_cens: limits.len(),
                    loglik: ll,
                    iterations: iter,
                    gradient_norm: gnorm,
                });
            }
            return Err(CodaError::NonConvergence { iterations: iter, last: gnorm, trace });
        }
    }
    let last = *trace.last().unwrap_or(&f64::NAN);
    Err(CodaError::NonConvergence { iterations: FIT_MAX_ITER, last, trace })
}

/// Log-likelihood of a censored lognormal sample at (mu, sigma) on the log scale.
pub fn censored_lognormal_loglik(observed: &[f64], censored_limits: &[f64], mu: f64, sigma: f64) -> f64 {
    let logs: Vec<f64> = observed.iter().map(|v| v.ln()).collect();
    let limits: Vec<f64> = censored_limits.iter().map(|v| v.ln()).collect();
    CensoredLogLik { logs: &logs, limits: &limits }.value(mu, sigma.ln())
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Butland slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// `xs` strictly increasing, `ys` nondecreasing.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let k = xs.len();
        if k < 2 || ys.len() != k {
            return contract("monotone interpolant needs at least two knots");
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.windows(2).any(|w| w[1] < w[0]) {
            return contract("knots must be increasing in x and nondecreasing in y");
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..k - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut slopes = vec![0.0; k];
        slopes[0] = delta[0];
        slopes[k - 1] = delta[k - 2];
        for i in 1..k - 1 {
            let (d0, d1) = (delta[i - 1], delta[i]);
            slopes[i] = if d0 <= 0.0 || d1 <= 0.0 {
                0.0
            } else {
                let (h0, h1) = (h[i - 1], h[i]);
                3.0 * (h0 + h1) / ((2.0 * h1 + h0) / d0 + (h1 + 2.0 * h0) / d1)
            };
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[k - 1] {
            return self.ys[k - 1];
        }
        let i = self.xs.partition_point(|v| *v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let y = h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1];
        y.clamp(self.ys[i], self.ys[i + 1])
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
}

/// Kaplan–Meier CDF of left-censored positive data.
///
/// `support`/`cdf` are the product-limit steps at the distinct observed values.
/// The smoothed CDF interpolates (ln x, F) monotonically and spreads the mass
/// lying below the smallest observation over one mean log-spacing beneath it.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftCensoredEcdf {
    pub support: Vec<f64>,
    pub cdf: Vec<f64>,
    smoothed: MonotoneCubic,
}

impl LeftCensoredEcdf {
    /// Smoothed CDF at `x` (> 0).
    pub fn smoothed_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.smoothed.eval(x.ln())
    }

    /// Lower end of the smoothed support.
    pub fn lower_anchor(&self) -> f64 {
        self.smoothed.x_range().0.exp()
    }

    /// Step-function KM CDF at `x`.
    pub fn step_cdf(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|v| *v <= x);
        if k == 0 {
            0.0
        } else {
            self.cdf[k - 1]
        }
    }

    /// Smallest x in (0, upper) with smoothed CDF ≥ target, by bisection in ln x.
    fn invert(&self, target: f64, upper: f64) -> f64 {
        let mut lo = self.smoothed.x_range().0;
        let mut hi = upper.ln();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.smoothed.eval(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        hi.exp()
    }
}

/// Product-limit estimate for left-censored data via axis reversal: with
/// T = −X the censored points become right-censored, the standard KM survival
/// of T is computed, and F_X(x) = S_T(−x⁻) = Π_{x_k > x} (1 − d_k / r_k), where
/// r_k counts observed values ≤ x_k plus censoring limits ≤ x_k.
pub fn km_left_censored(observed: &[f64], censored_limits: &[f64]) -> Result<LeftCensoredEcdf> {
    if observed.iter().chain(censored_limits).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return domain("values and limits must be positive");
    }
    let mut obs = observed.to_vec();
    obs.sort_by(f64::total_cmp);
    let mut support: Vec<f64> = Vec::new();
    let mut events: Vec<usize> = Vec::new();
    for v in obs.iter().copied() {
        match support.last() {
            Some(&last) if last == v => *events.last_mut().expect("nonempty") += 1,
            _ => {
                support.push(v);
                events.push(1);
            }
        }
    }
    if support.len() < 2 {
        return Err(CodaError::Degenerate(
            "Kaplan-Meier needs at least two distinct observed values".into(),
        ));
    }
    let mut limits = censored_limits.to_vec();
    limits.sort_by(f64::total_cmp);
    let at_risk: Vec<usize> = support
        .iter()
        .map(|&x| obs.partition_point(|v| *v <= x) + limits.partition_point(|v| *v <= x))
        .collect();
    let j = support.len();
    let mut cdf = vec![1.0; j];
    for k in (0..j - 1).rev() {
        cdf[k] = cdf[k + 1] * (1.0 - events[k + 1] as f64 / at_risk[k + 1] as f64);
    }
    let logs: Vec<f64> = support.iter().map(|v| v.ln()).collect();
    let mean_gap = (logs[j - 1] - logs[0]) / (j - 1) as f64;
    let mut xs = Vec::with_capacity(j + 1);
    let mut ys = Vec::with_capacity(j + 1);
    xs.push(logs[0] - mean_gap);
    ys.push(0.0);
    xs.extend_from_slice(&logs);
    ys.extend_from_slice(&cdf);
    let smoothed = MonotoneCubic::new(xs, ys)?;
    Ok(LeftCensoredEcdf { support, cdf, smoothed })
}

/// Inverse-CDF draw from the smoothed estimator restricted to (0, limit).
///
/// With no smoothed mass below `limit` the draw falls back to
/// Uniform(0.1·limit, limit) and is flagged.
pub fn km_draw_below<R: Rng + ?Sized>(ecdf: &LeftCensoredEcdf, limit: f64, rng: &mut R) -> Result<Flagged> {
    if !(limit > 0.0) || !limit.is_finite() {
        return domain(format!("limit must be positive, got {limit}"));
    }
    let mass = ecdf.smoothed_cdf(limit);
    if mass <= 1e-12 {
        let unif = Uniform::new(0.1 * limit, limit).expect("valid interval");
        return Ok(Flagged {
            value: unif.sample(rng),
            flagged: true,
        });
    }
    let unit = Uniform::new(0.0f64, 1.0).expect("unit interval");
    let u: f64 = loop {
        let u: f64 = unit.sample(rng);
        if u > 0.0 {
            break u;
        }
    };
    let mut value = ecdf.invert(u * mass, limit);
    if value >= limit {
        value = limit * (1.0 - 1e-12);
    }
    Ok(Flagged { value, flagged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson quadrature of t·φ((t−mu)/sigma)/sigma over (mu − 14σ, upper),
    /// normalised by the same integral of the density.
    fn mean_by_quadrature(mu: f64, sigma: f64, upper: f64) -> f64 {
        let lo = mu - 14.0 * sigma;
        let n = 200_000;
        let h = (upper - lo) / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=n {
            let t = lo + k as f64 * h;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let f = norm_pdf((t - mu) / sigma) / sigma;
            num += w * t * f;
            den += w * f;
        }
        num / den
    }

    #[test]
    fn trunc_mean_examples() {
        let far = trunc_normal_mean(&TruncatedNormalSpec::new(0.0, 1.0, 38.0).unwrap());
        assert!(far.value.abs() < 1e-12 && !far.flagged);
        let half = trunc_normal_mean(&TruncatedNormalSpec::new(0.0, 1.0, 0.0).unwrap());
        assert!((half.value - mean_by_quadrature(0.0, 1.0, 0.0)).abs() < 1e-8);
        assert!((half.value + 0.797_884_560_8).abs() < 1e-9);
        let spec = TruncatedNormalSpec::new(5.0, 2.0, 4.0).unwrap();
        let m = trunc_normal_mean(&spec).value;
        assert!(m < 4.0);
        assert!((m - (5.0 - 2.0 * norm_pdf(-0.5) / norm_cdf(-0.5))).abs() < 1e-14);
        assert!((m - mean_by_quadrature(5.0, 2.0, 4.0)).abs() < 1e-8);
    }

    #[test]
    fn trunc_mean_saturates() {
        let spec = TruncatedNormalSpec::new(0.0, 2.0, -80.0).unwrap();
        let m = trunc_normal_mean(&spec);
        assert!(m.flagged);
        assert_eq!(m.value, -80.0 - 2e-8);
        // just inside the non-saturated region the asymptotic ratio is used
        let m = trunc_normal_mean(&TruncatedNormalSpec::new(0.0, 1.0, -36.0).unwrap());
        assert!(!m.flagged && m.value < -36.0 && m.value > -36.1);
    }

    #[test]
    fn trunc_draws_respect_bound_and_seed() {
        let spec = TruncatedNormalSpec::new(0.0, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = trunc_normal_draw(&spec, &mut rng);
            assert!(d.value < 0.0);
            sum += d.value;
        }
        assert!((sum / n as f64 + 0.798).abs() < 0.01);

        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(trunc_normal_draw(&spec, &mut a), trunc_normal_draw(&spec, &mut b));
        }
        let tail = TruncatedNormalSpec::new(0.0, 1.0, -50.0).unwrap();
        for _ in 0..1000 {
            let d = trunc_normal_draw(&tail, &mut a);
            assert!(d.flagged && d.value < -50.0 && d.value > -51.0);
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let logs = [0.3, -0.2, 1.1, 0.7, -1.4];
        let limits = [-0.5, -1.0, 0.1];
        let lik = CensoredLogLik { logs: &logs, limits: &limits };
        let (mu, eta) = (0.2, -0.1);
        let (_, g, [[hmm, hme, hee]]) = lik.eval(mu, eta);
        let e = 1e-6;
        let gm = (lik.value(mu + e, eta) - lik.value(mu - e, eta)) / (2.0 * e);
        let ge = (lik.value(mu, eta + e) - lik.value(mu, eta - e)) / (2.0 * e);
        assert!((gm - g[0]).abs() < 1e-6 && (ge - g[1]).abs() < 1e-6);
        let g_at = |m: f64, t: f64| lik.eval(m, t).1;
        let fd_mm = (g_at(mu + e, eta)[0] - g_at(mu - e, eta)[0]) / (2.0 * e);
        let fd_me = (g_at(mu, eta + e)[0] - g_at(mu, eta - e)[0]) / (2.0 * e);
        let fd_ee = (g_at(mu, eta + e)[1] - g_at(mu, eta - e)[1]) / (2.0 * e);
        assert!((fd_mm - hmm).abs() < 1e-5, "{fd_mm} {hmm}");
        assert!((fd_me - hme).abs() < 1e-5, "{fd_me} {hme}");
        assert!((fd_ee - hee).abs() < 1e-5, "{fd_ee} {hee}");
    }

    #[test]
    fn uncensored_fit_is_sample_moments() {
        let obs = [0.5, 1.2, 3.3, 0.9, 2.2, 1.7];
        let fit = fit_censored_lognormal(&obs, &[]).unwrap();
        let logs: Vec<f64> = obs.iter().map(|v: &f64| v.ln()).collect();
        let m = logs.iter().sum::<f64>() / 6.0;
        let s = (logs.iter().map(|y| (y - m).powi(2)).sum::<f64>() / 6.0).sqrt();
        assert!((fit.mu_log - m).abs() < 1e-8);
        assert!((fit.sigma_log - s).abs() < 1e-8);
    }

    #[test]
    fn fit_ascends_and_is_equivariant() {
        let obs = [0.8, 1.5, 2.5, 4.0, 1.1, 3.2, 6.5];
        let lim = [0.7, 0.7, 0.7];
        let fit = fit_censored_lognormal(&obs, &lim).unwrap();
        assert!(fit.gradient_norm < 1e-6);
        let logs: Vec<f64> = obs.iter().map(|v: &f64| v.ln()).collect();
        let m = logs.iter().sum::<f64>() / 7.0;
        let s = (logs.iter().map(|y| (y - m).powi(2)).sum::<f64>() / 7.0).sqrt();
        assert!(fit.loglik >= censored_lognormal_loglik(&obs, &lim, m, s));
        assert!(fit.mu_log < m);

        let c = 37.5;
        let obs_c: Vec<f64> = obs.iter().map(|v| v * c).collect();
        let lim_c: Vec<f64> = lim.iter().map(|v| v * c).collect();
        let scaled = fit_censored_lognormal(&obs_c, &lim_c).unwrap();
        assert!((scaled.mu_log - fit.mu_log - c.ln()).abs() < 1e-6);
        assert!((scaled.sigma_log - fit.sigma_log).abs() < 1e-6);
    }

    #[test]
    fn fit_rejects_degenerate_sigma() {
        assert!(matches!(
            fit_censored_lognormal(&[2.0, 2.0, 2.0], &[]),
            Err(CodaError::Degenerate(_))
        ));
        assert!(fit_censored_lognormal(&[], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn km_without_censoring_is_ecdf() {
        let ecdf = km_left_censored(&[1.0, 2.0, 3.0, 4.0], &[]).unwrap();
        assert_eq!(ecdf.support, vec![1.0, 2.0, 3.0, 4.0]);
        for (got, want) in ecdf.cdf.iter().zip([0.25, 0.5, 0.75, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    /// Right-censored product-limit on the reversed axis, written out directly.
    fn reversed_km(observed: &[f64], limits: &[f64], x: f64) -> f64 {
        // times t = -value; events at -observed, censorings at -limit
        let mut times: Vec<(f64, bool)> = observed.iter().map(|v| (-v, true)).collect();
        times.extend(limits.iter().map(|l| (-l, false)));
        // S_T(t-) for t = -x: product over event times strictly less than -x
        let mut event_times: Vec<f64> = times.iter().filter(|t| t.1).map(|t| t.0).collect();
        event_times.sort_by(f64::total_cmp);
        event_times.dedup();
        let mut s = 1.0;
        for &t in event_times.iter().filter(|t| **t < -x) {
            let at_risk = times.iter().filter(|u| u.0 >= t).count() as f64;
            let deaths = times.iter().filter(|u| u.1 && u.0 == t).count() as f64;
            s *= 1.0 - deaths / at_risk;
        }
        s
    }

    #[test]
    fn km_matches_reversed_product_limit() {
        let observed = [0.8, 1.5, 2.0, 3.1];
        let limits = [1.0, 2.5];
        let ecdf = km_left_censored(&observed, &limits).unwrap();
        for (x, f) in ecdf.support.iter().zip(&ecdf.cdf) {
            assert!((reversed_km(&observed, &limits, *x) - f).abs() < 1e-14, "x = {x}");
        }
        assert_eq!(*ecdf.cdf.last().unwrap(), 1.0);
        assert!(ecdf.cdf.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn smoothed_cdf_is_monotone() {
        let ecdf = km_left_censored(&[0.4, 0.9, 1.0, 2.2, 7.5, 7.6, 30.0], &[0.5, 0.5, 1.2]).unwrap();
        let mut prev = 0.0;
        for k in 0..20_000 {
            let x = 0.05 * (1.0004f64).powi(k);
            let f = ecdf.smoothed_cdf(x);
            assert!(f >= prev - 1e-15 && f <= 1.0);
            prev = f;
        }
        assert!(km_left_censored(&[1.0, 1.0], &[0.5]).is_err());
    }

    #[test]
    fn km_draws_below_limit() {
        let ecdf = km_left_censored(&[0.4, 0.9, 1.0, 2.2, 7.5, 7.6, 30.0], &[0.5, 0.5, 1.2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let d = km_draw_below(&ecdf, 1.0, &mut rng).unwrap();
            assert!(d.value > 0.0 && d.value < 1.0 && !d.flagged);
        }
        // below the smoothed support: uniform fallback, flagged
        let d = km_draw_below(&ecdf, 0.01, &mut rng).unwrap();
        assert!(d.flagged && d.value >= 0.001 && d.value < 0.01);
    }

    #[test]
    fn km_draw_concentrated_atom() {
        let mut obs = vec![1.0; 1000];
        obs.extend([1.001, 1.002]);
        let ecdf = km_left_censored(&obs, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let d = km_draw_below(&ecdf, 1.0005, &mut rng).unwrap();
            assert!((d.value - 1.0).abs() < 2e-3, "{}", d.value);
        }
    }
}
