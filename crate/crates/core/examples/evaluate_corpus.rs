//! Generate a corpus, evaluate the oracle and toy planners on it and print
//! per-behavior ADE, as `voxplan evalrun` does.
//!
//! cargo run --release --example evaluate_corpus -- [scenarios]

use voxplan::config::RunConfig;
use voxplan::metrics::{evaluate, generate_synthetic};

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(100);
    let mut cfg = RunConfig::default();
    cfg.toy.sampling.k = 4;
    let corpus = generate_synthetic(&cfg.synth, 3, n)?;

    for name in ["oracle", "oracle_noisy", "toy"] {
        let planner = cfg.build_planner(name)?;
        let report = evaluate(&corpus, planner.as_ref(), &cfg.eval_options())?;
        println!("== {name}: {} scored, invariants ok: {}", report.counts.scored, report.invariants_hold());
        for h in &report.horizons {
            println!(
                "   @{}s  ADE {:.3}  bADE {:.3}",
                h.horizon_s,
                h.ade.unwrap_or(f64::NAN),
                h.bade.unwrap_or(f64::NAN)
            );
        }
        for b in report.behaviors.iter().filter(|b| b.count > 0) {
            let ade5 = b.ade.last().copied().flatten().unwrap_or(f64::NAN);
            println!("   {:<16} n={:<4} ADE@5s {ade5:.3}", b.behavior.as_str(), b.count);
        }
    }
    Ok(())
}
