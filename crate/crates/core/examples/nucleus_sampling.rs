//! Top-p truncation and the empirical distribution it samples from.
//!
//! cargo run --example nucleus_sampling -- [top_p]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxplan::planner::{nucleus_sample, nucleus_support, softmax};

fn main() -> anyhow::Result<()> {
    let p: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.9);
    let dist = softmax(&[2.0, 1.2, 0.9, 0.1, -1.0], 1.0);
    let support = nucleus_support(&dist, p)?;
    println!("probabilities {:?}", dist.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
    println!("top-p {p}: support {support:?}");

    let kept: f64 = support.iter().map(|&i| dist[i]).sum();
    let mut counts = vec![0usize; dist.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    for _ in 0..n {
        counts[nucleus_sample(&dist, p, &mut rng)?] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        let expected = if support.contains(&i) { dist[i] / kept } else { 0.0 };
        println!("  token {i}: sampled {:.4}  renormalized {expected:.4}", *c as f64 / n as f64);
    }
    Ok(())
}
