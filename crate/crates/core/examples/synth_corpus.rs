//! Generate a synthetic JSONL corpus and report its behavior mix.
//!
//! cargo run --release --example synth_corpus -- [scenarios] [out.jsonl]

use std::collections::BTreeMap;

use voxplan::metrics::{generate_synthetic, ground_truth_behavior, SynthConfig};
use voxplan::scenario::corpus::save_corpus;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let out = args.next();
    let cfg = SynthConfig::default();
    let corpus = generate_synthetic(&cfg, 0, n)?;

    let mut counts = BTreeMap::new();
    for s in &corpus {
        *counts.entry(ground_truth_behavior(s)?).or_insert(0usize) += 1;
    }
    for (b, c) in &counts {
        println!(
            "{:<16} {:>5.1}%  (target {:>4.1}%)",
            b.as_str(),
            100.0 * *c as f64 / n as f64,
            100.0 * cfg.mix.weight(*b)
        );
    }
    if let Some(path) = out {
        save_corpus(std::path::Path::new(&path), &corpus)?;
        println!("wrote {path}");
    }
    Ok(())
}
