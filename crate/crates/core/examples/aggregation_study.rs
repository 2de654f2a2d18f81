//! Greedy decoding vs. mean and likelihood-weighted aggregation of
//! nucleus samples, for a planner that over-weights standing still.
//!
//! cargo run --release --example aggregation_study -- [scenarios] [stationary_bias]

use voxplan::metrics::{evaluate, generate_synthetic, EvalOptions, SynthConfig};
use voxplan::planner::{Aggregation, SamplingConfig, ToyPlanner, ToyPlannerConfig};
use voxplan::scenario::PlanningProfile;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let bias: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3.5);

    let profile = PlanningProfile::womd();
    let corpus = generate_synthetic(&SynthConfig::default(), 7, n)?;
    let opts = EvalOptions::default();

    for (label, sampling) in [
        ("greedy", SamplingConfig { greedy: true, ..Default::default() }),
        ("mean of 16", SamplingConfig::default()),
        ("weighted of 16", SamplingConfig { aggregation: Aggregation::LikelihoodWeighted, ..Default::default() }),
    ] {
        let cfg = ToyPlannerConfig { stationary_bias: bias, sampling, ..Default::default() };
        let planner = ToyPlanner::new(cfg, profile)?;
        let start = std::time::Instant::now();
        let report = evaluate(&corpus, &planner, &opts)?;
        let h = report.horizon(5.0).expect("5 s horizon");
        println!(
            "{label:>15}: ADE@5s {:.3}  bADE@5s {:.3}  meta acc {:.3}  ({:.1?})",
            h.ade.unwrap_or(f64::NAN),
            h.bade.unwrap_or(f64::NAN),
            report.meta_decision_accuracy.unwrap_or(f64::NAN),
            start.elapsed()
        );
    }
    Ok(())
}
