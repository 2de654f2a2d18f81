//! Procedural stand-in for camera features: a static set of 3D blobs,
//! each with its own embedding, splatted into every view as Gaussian
//! bumps. Rendering is deterministic, so a corpus only needs to store
//! the scene description.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{compensate_ego_motion, CameraRig, FeatureMap, RigidPose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    /// Center in the current ego frame, meters.
    pub center: [f64; 3],
    pub radius: f64,
    pub embedding_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralScene {
    pub channels: usize,
    /// `[width, height]` of every rendered feature map.
    pub feature_size: [usize; 2],
    pub background_seed: u64,
    pub blobs: Vec<Blob>,
}

const BACKGROUND_AMPLITUDE: f64 = 0.05;

fn embedding(seed: u64, channels: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..channels).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

impl ProceduralScene {
    /// Render one feature map per camera as seen from the frame whose ego
    /// pose (relative to the current frame) is `pose`.
    pub fn render(&self, rig: &CameraRig, pose: &RigidPose) -> Vec<FeatureMap> {
        let embeddings: Vec<Vec<f64>> = self.blobs.iter().map(|b| embedding(b.embedding_seed, self.channels)).collect();
        let local: Vec<[f64; 3]> = self.blobs.iter().map(|b| compensate_ego_motion(b.center, pose)).collect();
        let phase = embedding(self.background_seed, self.channels);
        let [fw, fh] = self.feature_size;

        rig.cameras
            .iter()
            .enumerate()
            .map(|(view, cam)| {
                let k = cam.intrinsics();
                let [iw, ih] = cam.image_size();
                // (pixel center, pixel radius) of every blob in front of the camera.
                let splats: Vec<Option<([f64; 2], f64)>> = self
                    .blobs
                    .iter()
                    .zip(&local)
                    .map(|(b, p)| {
                        let [x, y, z] = cam.extrinsic().apply(*p);
                        (z > cam.near_plane())
                            .then(|| ([k.fx * x / z + k.cx, k.fy * y / z + k.cy], (k.fx * b.radius / z).max(1.0)))
                    })
                    .collect();
                let mut data = vec![0.0; fw * fh * self.channels];
                for row in 0..fh {
                    let py = (row as f64 + 0.5) * ih as f64 / fh as f64 - 0.5;
                    for col in 0..fw {
                        let px = (col as f64 + 0.5) * iw as f64 / fw as f64 - 0.5;
                        let cell = &mut data[(row * fw + col) * self.channels..][..self.channels];
                        for (c, v) in cell.iter_mut().enumerate() {
                            *v = BACKGROUND_AMPLITUDE
                                * (phase[c] + 0.37 * (row + 2 * col) as f64 + 1.3 * view as f64).sin();
                        }
                        for (splat, emb) in splats.iter().zip(&embeddings) {
                            let Some(([bu, bv], r)) = splat else { continue };
                            let d2 = (px - bu).powi(2) + (py - bv).powi(2);
                            let w = (-d2 / (2.0 * r * r)).exp();
                            if w < 1e-6 {
                                continue;
                            }
                            for (v, e) in cell.iter_mut().zip(emb) {
                                *v += w * e;
                            }
                        }
                    }
                }
                FeatureMap::new(fh, fw, self.channels, data).expect("rendered map is well-formed")
            })
            .collect()
    }
}
