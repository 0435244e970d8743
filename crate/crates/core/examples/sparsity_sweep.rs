//! A small sparsity sweep on a synthetic zero-free matrix.
//!
//! Pass an output directory to keep results.csv, the manifest and aggregates.

use coda_zero::bench::{run_sweep, Design, ExperimentConfig, InputSpec};
use coda_zero::impute::Method;

fn main() -> coda_zero::Result<()> {
    let out_dir = std::env::args().nth(1).map(Into::into);
    let cfg = ExperimentConfig {
        input: InputSpec::Synthetic {
            n: 60,
            parts: 120,
            spread: 1.5,
            concentration: 1e7,
            depth: 10_000_000,
            depth_full: 20_000,
            seed: 1,
        },
        design: Design::SparsitySweep { m_list: vec![30], p_list: vec![0.05, 0.4, 0.8] },
        methods: vec![Method::LrSvd, Method::MultRepl, Method::DlUnif, Method::Add1, Method::Gbm],
        reps: 5,
        out_dir,
        ..ExperimentConfig::default()
    };
    let out = run_sweep(&cfg)?;
    println!("{:<10} {:<5} {:>5} {:>10} {:>10}", "method", "var", "p", "CED", "ADCS");
    for method in &cfg.methods {
        for variant in &cfg.variants {
            for p in [0.05, 0.4, 0.8] {
                let cell: Vec<_> = out
                    .records
                    .iter()
                    .filter(|r| r.method == method.id() && r.variant == *variant && r.p == p && r.status == "ok")
                    .collect();
                let mean = |f: fn(&coda_zero::metrics::MetricRecord) -> Option<f64>| {
                    cell.iter().filter_map(|r| f(r)).sum::<f64>() / cell.len().max(1) as f64
                };
                println!(
                    "{:<10} {:<5} {:>5} {:>10.5} {:>10.5}",
                    method.id(),
                    variant.as_str(),
                    p,
                    mean(|r| r.ced),
                    mean(|r| r.adcs)
                );
            }
        }
    }
    Ok(())
}
