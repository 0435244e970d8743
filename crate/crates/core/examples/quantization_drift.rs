//! Drift of the log-ratio of two column means as counts are scaled down and ceiled.

use coda_zero::countlab::{logratio_shift_experiment, DmSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> coda_zero::Result<()> {
    let spec = DmSpec { alpha: vec![6.0, 3.0, 1.0], depth: 1000, n: 100 };
    let scales = [1.0, 0.1, 0.01, 0.001];
    for seed in 0..3 {
        let table = logratio_shift_experiment(&spec, &scales, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let means: Vec<String> = table
            .summaries
            .iter()
            .map(|s| s.mean_lr.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()))
            .collect();
        println!("seed {seed}: {}", means.join("  "));
    }
    let table = logratio_shift_experiment(&spec, &scales, &mut ChaCha8Rng::seed_from_u64(0))?;
    table.write_means(std::io::stdout())?;
    Ok(())
}
