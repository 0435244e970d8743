//! Dirichlet-multinomial counts, the zero-free generator and quantile zero insertion.

use coda_zero::countlab::{insert_zeros, make_zero_free, quantize_scale, simulate_dm, ColumnRule, DmSpec};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> coda_zero::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = DmSpec { alpha: vec![0.3, 0.5, 1.0, 4.0, 10.0], depth: 40, n: 8 };
    let counts = simulate_dm(&spec, &mut rng)?;
    println!("DM draw ({:.0}% zeros):\n{}", 100.0 * counts.zero_fraction(), counts.counts());

    let z = make_zero_free(&counts, 500, &mut rng)?;
    println!("zero-free at depth {} ({} doublings):\n{}", z.depth, z.doublings, z.counts.counts());

    let (zeroed, plan) = insert_zeros(&z.counts, 0.3, &ColumnRule::Explicit(vec![0, 2]))?;
    println!("zeros below the 0.3 quantile of columns 0 and 2:\n{}", zeroed.counts());
    println!("thresholds: {}", plan.realized_dl.matrix().row(0));

    let small = coda_zero::CountMatrix::from_counts(DMatrix::from_row_slice(1, 2, &[12, 6]));
    println!("(12, 6) scaled by 0.1 and ceiled: {}", quantize_scale(&small, 0.1)?.counts());
    Ok(())
}
