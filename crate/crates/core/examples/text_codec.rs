//! Prompt and target text round trip for one generated scenario.
//!
//! cargo run --example text_codec

use voxplan::behavior::stage_decisions;
use voxplan::metrics::{generate_synthetic, SynthConfig};
use voxplan::scenario::codec::{decode_plan, encode_prompt, encode_target, TargetFormat};
use voxplan::scenario::PlanningProfile;

fn main() -> anyhow::Result<()> {
    let profile = PlanningProfile::womd();
    let s = generate_synthetic(&SynthConfig::default(), 11, 1)?.remove(0);
    let future = s.ground_truth.truncated(profile.waypoint_count()).expect("8 s of ground truth");
    let decisions = stage_decisions(&future, &s.history, &profile);

    print!("--- prompt ---\n{}", encode_prompt(&s.history, s.command));
    let format = TargetFormat::from(&profile);
    let target = encode_target(&decisions, &future, &format)?;
    print!("--- target ---\n{target}");

    let (back, traj) = decode_plan(&target, &format)?;
    assert_eq!(back, decisions);
    let worst = traj
        .waypoints()
        .iter()
        .zip(future.waypoints())
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max);
    println!("--- decoded ---\nmax rounding error {worst:.4} m");
    Ok(())
}
