//! Lift a generated scenario's camera features into the voxel grid, then
//! gate and keep the top-M voxels as tokens.
//!
//! cargo run --release --example lift_volume -- [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxplan::metrics::{generate_synthetic, SynthConfig};
use voxplan::volume::{build_sparse_tokens, compute_gate_field, lift_dense, LiftConfig, LiftParams};

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let scenario = generate_synthetic(&SynthConfig::default(), seed, 1)?.remove(0);
    let frames = scenario.frame_features()?;
    let cfg = LiftConfig::desk();
    let grid = &cfg.grid;

    let dense = lift_dense(&frames[0].maps, &scenario.rig, grid)?;
    let seen = dense.valid.iter().filter(|v| **v).count();
    println!("grid {:?} = {} voxels, {seen} seen by at least one view", grid.counts(), grid.len());

    let params = LiftParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    let gates = compute_gate_field(&frames, &scenario.rig, grid, &params)?;
    let (lo, hi) = gates.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), g| (a.min(*g), b.max(*g)));
    println!("gates in [{lo:.4}, {hi:.4}]");

    let sparse = build_sparse_tokens(&frames, &scenario.rig, grid, &params, cfg.top_m)?;
    println!("kept {} of {} voxels, {} channels each", sparse.len(), grid.len(), sparse.channels);
    for i in 0..3.min(sparse.len()) {
        let norm = sparse.feature(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("  voxel at {:?}  gate {:.4}  |f| {norm:.4}", sparse.coords[i], sparse.gates[i]);
    }
    Ok(())
}
