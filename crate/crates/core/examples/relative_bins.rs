//! The 32-bin relative-position scheme and the bias matrix it induces.
//!
//! cargo run --example relative_bins

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxplan::attention::{bin_bounds, bin_index, relative_bias_matrix, HeadBias, TokenLayout};

fn main() {
    for delta in [-200.0, -128.0, -9.0, -8.0, -0.5, 0.0, 0.5, 7.9, 8.0, 8.1, 16.0, 127.0, 200.0] {
        let b = bin_index(delta);
        let (lo, hi) = bin_bounds()[b];
        println!("delta {delta:>7}: bin {b:>2}  [{lo}, {hi})");
    }

    let layout = TokenLayout {
        visual_coords: vec![[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [5.0, 5.0, 2.0]],
        text_positions: vec![0.0, 1.0],
    };
    let bias = HeadBias::random(1.0, &mut ChaCha8Rng::seed_from_u64(0));
    let m = relative_bias_matrix(&layout, &bias);
    let n = layout.len();
    println!("\nbias matrix, 3 voxel + 2 text tokens:");
    for row in m.chunks(n) {
        println!("  {}", row.iter().map(|v| format!("{v:>7.3}")).collect::<Vec<_>>().join(" "));
    }
}
