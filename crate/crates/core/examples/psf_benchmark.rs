//! Runs a short PSF benchmark and prints the per-method means.
//!
//! `cargo run --release --example psf_benchmark -- [replicates] [base_seed]`

use std::time::Instant;

use symaxis::experiments::{run_psf_benchmark, PsfBenchmarkConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let replicates = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let base_seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let config = PsfBenchmarkConfig {
        replicates,
        base_seed,
        ..PsfBenchmarkConfig::default()
    };
    let start = Instant::now();
    let report = run_psf_benchmark(&config).expect("benchmark failed");
    println!("{replicates} replicates in {:.1?}", start.elapsed());
    for m in &report.methods {
        println!(
            "{:<28} L1 {:>12.1} (sd {:>9.1})   L2 {:>12.1} (sd {:>10.1})",
            m.method.name(),
            m.mean_l1,
            m.sd_l1,
            m.mean_l2,
            m.sd_l2
        );
    }
    for t in &report.sign_tests {
        if t.p_value < 0.5 {
            println!(
                "{:?} {} < {}: {}/{} p = {:.2e}",
                t.metric, t.better, t.worse, t.wins, t.trials, t.p_value
            );
        }
    }
}
