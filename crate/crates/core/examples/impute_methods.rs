//! Every imputation method on one simulated matrix with inserted zeros.

use coda_zero::bench::lognormal_alpha;
use coda_zero::countlab::{insert_zeros, make_zero_free, simulate_dm, ColumnRule, DmSpec};
use coda_zero::impute::{apply_ceiling, run_method, Method, MethodParams};
use coda_zero::metrics::{adcs, ced_with, CedReference};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> coda_zero::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let alpha = lognormal_alpha(20, 1.0, 1e6, &mut rng)?;
    let raw = simulate_dm(&DmSpec { alpha, depth: 100_000, n: 60 }, &mut rng)?;
    let truth = make_zero_free(&raw, 20_000, &mut rng)?.counts;
    let (zeroed, plan) = insert_zeros(&truth, 0.4, &ColumnRule::EverySecond)?;
    println!(
        "{}x{} truth, zero rate {:.3} over columns {:?}",
        truth.nrows(),
        truth.ncols(),
        plan.realized_zero_rate,
        plan.target_columns
    );

    let x = zeroed.to_real();
    let original = truth.to_real();
    let params = MethodParams::default();
    println!("{:<13} {:>10} {:>10} {:>10} {:>10}", "method", "CED", "ADCS", "CED ceil", "time s");
    for method in Method::ALL {
        let out = run_method(method, &x, &plan.realized_dl, &params, &mut rng)?;
        if !out.status.is_ok() {
            println!("{:<13} {}", method.id(), out.status.label());
            continue;
        }
        // GBM returns proportions; rescale to the observed totals before rounding up
        let mut for_ceil = out.clone();
        if method == Method::Gbm {
            for i in 0..x.nrows() {
                let total = x.row(i).sum();
                for_ceil.imputed.row_mut(i).scale_mut(total);
            }
        }
        let ceiled = apply_ceiling(&for_ceil)?;
        println!(
            "{:<13} {:>10.5} {:>10.5} {:>10.5} {:>10.4}",
            method.id(),
            ced_with(&original, &out.imputed, &plan.realized_mask, CedReference::AllRows)?,
            adcs(&original, &out.imputed)?,
            ced_with(&original, &ceiled.imputed, &plan.realized_mask, CedReference::AllRows)?,
            out.diagnostics.runtime_s
        );
    }
    Ok(())
}
