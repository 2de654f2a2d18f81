//! Behavior, command and meta-decision labels of a few hand-made tracks.
//!
//! cargo run --example behavior_labels

use voxplan::behavior::{classify_behavior, derive_command, label_meta_decision, FutureTrack, MotionSegment};

fn arc(speed: f64, yaw_rate: f64, seconds: f64, dt: f64) -> Vec<[f64; 2]> {
    let (mut x, mut y, mut h) = (0.0, 0.0, 0.0);
    (0..(seconds / dt).round() as usize)
        .map(|_| {
            h += yaw_rate * dt;
            x += speed * dt * h.cos();
            y += speed * dt * h.sin();
            [x, y]
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    let dt = 0.2;
    let tracks = [
        ("parked", vec![[0.0, 0.0]; 40]),
        ("cruise", arc(10.0, 0.0, 8.0, dt)),
        ("left turn", arc(6.0, 0.25, 8.0, dt)),
        ("right turn", arc(6.0, -0.25, 8.0, dt)),
        ("u-turn", arc(4.0, 0.6, 8.0, dt)),
    ];
    for (name, pts) in tracks {
        let track = FutureTrack::from_positions(pts, dt)?;
        println!(
            "{name:>10}: behavior {:<16} command {:<20} final heading {:>7.1} deg",
            classify_behavior(&track).as_str(),
            derive_command(&track, 8.0, 2.0).as_str(),
            track.final_heading_deg()
        );
    }

    let speeding_up: Vec<[f64; 2]> = (0..=13)
        .map(|i| {
            let t = i as f64 * dt;
            [5.0 * t + 0.5 * t * t, 0.0]
        })
        .collect();
    let seg = MotionSegment::from_positions(speeding_up, dt, Some(5.0));
    println!(
        "\nsegment from 5 m/s at 1 m/s^2: mean accel {:.2}, decision {}",
        seg.mean_acceleration(),
        label_meta_decision(&seg).as_str()
    );
    Ok(())
}
