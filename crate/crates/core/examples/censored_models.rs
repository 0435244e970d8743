//! Truncated normals, a censored lognormal fit and a left-censored KM estimate.

use coda_zero::censored::{
    fit_censored_lognormal, km_draw_below, km_left_censored, trunc_normal_draw, trunc_normal_mean, TruncatedNormalSpec,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

fn main() -> coda_zero::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let spec = TruncatedNormalSpec::new(0.0, 1.0, 0.0)?;
    println!("E[Z | Z < 0] = {:.6} (exact -sqrt(2/pi) = {:.6})", trunc_normal_mean(&spec).value, -(2.0 / std::f64::consts::PI).sqrt());
    let far = TruncatedNormalSpec::new(0.0, 1.0, -40.0)?;
    let d = trunc_normal_draw(&far, &mut rng);
    println!("draw below -40: {:.4} (flagged: {})", d.value, d.flagged);

    // lognormal(1, 0.8) sample censored at 2.0
    let dist = LogNormal::new(1.0, 0.8).unwrap();
    let sample: Vec<f64> = (0..2000).map(|_| dist.sample(&mut rng)).collect();
    let limit = 2.0;
    let observed: Vec<f64> = sample.iter().copied().filter(|v| *v >= limit).collect();
    let censored = vec![limit; sample.len() - observed.len()];
    let fit = fit_censored_lognormal(&observed, &censored)?;
    println!(
        "censored fit: mu {:.3} sigma {:.3} ({} observed, {} censored, {} iterations)",
        fit.mu_log, fit.sigma_log, fit.n_obs, fit.n_cens, fit.iterations
    );

    // per-value limits keep some observations below other values' limits
    let limits: Vec<f64> = sample.iter().map(|_| 1.0 + 2.0 * rand::Rng::random::<f64>(&mut rng)).collect();
    let (obs, cens): (Vec<_>, Vec<_>) = sample.iter().zip(&limits).partition(|(v, l)| **v >= **l);
    let obs: Vec<f64> = obs.into_iter().map(|(v, _)| *v).collect();
    let cens: Vec<f64> = cens.into_iter().map(|(_, l)| *l).collect();
    let ecdf = km_left_censored(&obs, &cens)?;
    println!("KM step cdf at 2.0: {:.3} (true {:.3})", ecdf.step_cdf(2.0), statrs::function::erf::erfc(-(2f64.ln() - 1.0) / (0.8 * 2f64.sqrt())) / 2.0);
    let draws: Vec<f64> = (0..5).map(|_| km_draw_below(&ecdf, 1.5, &mut rng).map(|f| f.value)).collect::<Result<_, _>>()?;
    println!("KM draws below 1.5: {draws:.3?}");
    Ok(())
}
