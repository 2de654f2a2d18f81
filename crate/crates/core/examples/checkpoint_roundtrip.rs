//! Export the toy planner's weights as named tensors and load them back.
//!
//! cargo run --release --example checkpoint_roundtrip

use voxplan::checkpoint::Checkpoint;
use voxplan::planner::{ToyPlanner, ToyPlannerConfig};
use voxplan::scenario::PlanningProfile;

fn main() -> anyhow::Result<()> {
    let profile = PlanningProfile::womd();
    let planner = ToyPlanner::new(ToyPlannerConfig::default(), profile)?;
    let ckpt = planner.export();
    for name in ckpt.names().take(8) {
        let (shape, _) = ckpt.get(name)?;
        println!("{name:<40} {shape:?}");
    }
    println!("... {} tensors in total", ckpt.names().count());

    let dir = std::env::temp_dir().join("voxplan-ckpt-example.json");
    ckpt.save(&dir)?;
    let restored = ToyPlanner::from_checkpoint(ToyPlannerConfig::default(), profile, &Checkpoint::load(&dir)?)?;
    println!("restored planner identical: {}", restored == planner);
    std::fs::remove_file(&dir)?;
    Ok(())
}
