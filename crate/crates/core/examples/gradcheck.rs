//! Finite-difference check of every hand-written gradient.
//!
//! cargo run --release --example gradcheck -- [seeds]

use voxplan::numcheck::{check_all, DEFAULT_TOL_ABS};

fn main() -> anyhow::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        for r in check_all(seed, 1e-5, DEFAULT_TOL_ABS)? {
            println!(
                "seed {seed} {:<24} {:>4} coords  rel {:.2e}  abs {:.2e}  {}",
                r.op,
                r.coordinates,
                r.max_rel_error,
                r.max_abs_error,
                if r.passed { "ok" } else { "FAIL" }
            );
            worst = worst.max(r.max_rel_error);
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
