//! Project ego-frame points through a surround rig and sample features.
//!
//! cargo run --example camera_projection

use voxplan::geometry::{bilinear_sample, pixel_to_feature_coords, project_to_view, CameraRig, FeatureMap};

fn main() -> anyhow::Result<()> {
    let rig = CameraRig::surround(4, 1.6, 224.0, [448, 448]);
    // Channel 0 holds the column, channel 1 the row.
    let fm = FeatureMap::from_fn(16, 16, 2, |y, x, c| if c == 0 { x as f64 } else { y as f64 })?;
    for p in [[10.0, 0.0, 0.0], [0.0, 10.0, 1.6], [-10.0, -2.0, 3.0], [3.0, 3.0, 0.0]] {
        print!("point {p:?}:");
        for (v, cam) in rig.cameras.iter().enumerate() {
            if let Some(px) = project_to_view(p, cam) {
                let [u, w] = pixel_to_feature_coords(px, cam.image_size(), fm.size());
                let f = bilinear_sample(&fm, u, w);
                print!("  view {v} px ({:.1}, {:.1}) feat ({:.2}, {:.2})", px[0], px[1], f[0], f[1]);
            }
        }
        println!();
    }
    Ok(())
}
