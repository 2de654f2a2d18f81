//! Multi-view lifting of image features into an ego-centred voxel volume,
//! gated sparse selection and temporal fusion.

mod params;
mod sparse;

pub use params::{LiftConfig, LiftParams};
pub use sparse::{
    blend_vacant, blend_vacant_grad_gate, build_sparse_from_gates, build_sparse_tokens, compute_gate_field,
    fourier_features, pos_embed, select_top_m, GateField, SparseVolumeSet,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    bilinear_accumulate, compensate_ego_motion, pixel_to_feature_coords, project_to_view, CameraRig, FeatureMap,
    RigidPose,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("camera rig is empty")]
    EmptyRig,
    #[error("got {maps} feature maps for {views} camera views")]
    ViewCount { maps: usize, views: usize },
    #[error("feature map has {found} channels, expected {expected}")]
    Channels { expected: usize, found: usize },
    #[error("got {found} frames, parameters expect {expected}")]
    FrameCount { expected: usize, found: usize },
    #[error("pose of frame 0 must be the identity")]
    FirstPoseNotIdentity,
    #[error("M = {m} is outside 1..={voxels}")]
    TopMOutOfRange { m: usize, voxels: usize },
    #[error("coordinate {0:?} lies outside the volume range")]
    OutOfRange([f64; 3]),
    #[error("invalid grid: {0}")]
    BadGrid(&'static str),
    #[error("gate values must lie in [0, 1] and match the grid size")]
    BadGates,
}

/// Axis-aligned voxel lattice in the current ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct VolumeGrid {
    min: [f64; 3],
    max: [f64; 3],
    resolution: [f64; 3],
    counts: [usize; 3],
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    min: [f64; 3],
    max: [f64; 3],
    resolution: [f64; 3],
}

impl TryFrom<RawGrid> for VolumeGrid {
    type Error = VolumeError;
    fn try_from(r: RawGrid) -> Result<Self, Self::Error> {
        VolumeGrid::new(r.min, r.max, r.resolution)
    }
}

impl From<VolumeGrid> for RawGrid {
    fn from(g: VolumeGrid) -> Self {
        RawGrid { min: g.min, max: g.max, resolution: g.resolution }
    }
}

impl VolumeGrid {
    pub fn new(min: [f64; 3], max: [f64; 3], resolution: [f64; 3]) -> Result<Self, VolumeError> {
        let mut counts = [0; 3];
        for a in 0..3 {
            if !(min[a].is_finite() && max[a].is_finite() && resolution[a].is_finite()) {
                return Err(VolumeError::BadGrid("non-finite bounds"));
            }
            if max[a] <= min[a] {
                return Err(VolumeError::BadGrid("max must exceed min"));
            }
            if resolution[a] <= 0.0 {
                return Err(VolumeError::BadGrid("resolution must be positive"));
            }
            counts[a] = ((max[a] - min[a]) / resolution[a]).round() as usize;
            if counts[a] == 0 {
                return Err(VolumeError::BadGrid("resolution exceeds extent"));
            }
        }
        Ok(Self { min, max, resolution, counts })
    }

    /// `(-30, 80) x (-30, 30) x (-2, 8)` m at 1 x 1 x 2 m: 110 x 60 x 5.
    pub fn full_scale() -> Self {
        Self::new([-30.0, -30.0, -2.0], [80.0, 30.0, 8.0], [1.0, 1.0, 2.0]).expect("valid grid")
    }

    /// Same range at 5 x 5 x 2 m: 22 x 12 x 5.
    pub fn desk() -> Self {
        Self::new([-30.0, -30.0, -2.0], [80.0, 30.0, 8.0], [5.0, 5.0, 2.0]).expect("valid grid")
    }

    pub fn min(&self) -> [f64; 3] {
        self.min
    }

    pub fn max(&self) -> [f64; 3] {
        self.max
    }

    pub fn resolution(&self) -> [f64; 3] {
        self.resolution
    }

    /// `[X, Y, Z]`.
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// x-major linear index: `(ix * Y + iy) * Z + iz`.
    pub fn linear_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.counts[1] + iy) * self.counts[2] + iz
    }

    pub fn cell(&self, index: usize) -> [usize; 3] {
        let [_, y, z] = self.counts;
        [index / (y * z), (index / z) % y, index % z]
    }

    /// Voxel center: `min + (i + 0.5) * resolution`.
    pub fn center(&self, index: usize) -> [f64; 3] {
        let c = self.cell(index);
        std::array::from_fn(|a| self.min[a] + (c[a] as f64 + 0.5) * self.resolution[a])
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// Per-voxel features with a flag for voxels seen by at least one view.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVolume {
    pub grid: VolumeGrid,
    pub channels: usize,
    pub features: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DenseVolume {
    pub fn feature(&self, index: usize) -> &[f64] {
        &self.features[index * self.channels..(index + 1) * self.channels]
    }
}

pub(crate) fn check_maps(maps: &[FeatureMap], rig: &CameraRig, channels: Option<usize>) -> Result<usize, VolumeError> {
    if rig.is_empty() {
        return Err(VolumeError::EmptyRig);
    }
    if maps.len() != rig.len() {
        return Err(VolumeError::ViewCount { maps: maps.len(), views: rig.len() });
    }
    let c = channels.unwrap_or(maps[0].channels());
    for m in maps {
        if m.channels() != c {
            return Err(VolumeError::Channels { expected: c, found: m.channels() });
        }
    }
    Ok(c)
}

/// Mean of the bilinear samples over every view in which `point` (in the
/// frame the maps were captured in) projects inside the image. Writes the
/// mean into `out` and returns the number of contributing views; `out` is
/// zero when no view sees the point.
pub fn sample_semantic(maps: &[FeatureMap], rig: &CameraRig, point: [f64; 3], out: &mut [f64]) -> usize {
    out.fill(0.0);
    let mut seen = 0;
    for (fm, cam) in maps.iter().zip(&rig.cameras) {
        if let Some(px) = project_to_view(point, cam) {
            let [u, v] = pixel_to_feature_coords(px, cam.image_size(), fm.size());
            bilinear_accumulate(fm, u, v, 1.0, out);
            seen += 1;
        }
    }
    if seen > 1 {
        let inv = seen as f64;
        for o in out.iter_mut() {
            *o /= inv;
        }
    }
    seen
}

/// Lift one frame's maps into the grid, with voxel centers moved into that
/// frame's ego coordinates through `pose`.
pub fn lift_frame(
    maps: &[FeatureMap],
    pose: &RigidPose,
    rig: &CameraRig,
    grid: &VolumeGrid,
) -> Result<DenseVolume, VolumeError> {
    let channels = check_maps(maps, rig, None)?;
    let n = grid.len();
    let mut features = vec![0.0; n * channels];
    let mut valid = vec![false; n];
    features.par_chunks_mut(channels.max(1)).zip(valid.par_iter_mut()).enumerate().for_each(|(i, (out, ok))| {
        let p = compensate_ego_motion(grid.center(i), pose);
        *ok = sample_semantic(maps, rig, p, out) > 0;
    });
    Ok(DenseVolume { grid: grid.clone(), channels, features, valid })
}

/// Dense lifting of the current frame.
pub fn lift_dense(maps: &[FeatureMap], rig: &CameraRig, grid: &VolumeGrid) -> Result<DenseVolume, VolumeError> {
    lift_frame(maps, &RigidPose::identity(), rig, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraModel, Intrinsics, RigidTransform, DEFAULT_NEAR_PLANE};

    #[test]
    fn grid_layout() {
        assert_eq!(VolumeGrid::full_scale().counts(), [110, 60, 5]);
        assert_eq!(VolumeGrid::desk().counts(), [22, 12, 5]);
        let g = VolumeGrid::new([0.0; 3], [4.0, 3.0, 2.0], [1.0; 3]).unwrap();
        assert_eq!(g.len(), 24);
        assert_eq!(g.linear_index(1, 2, 1), (3 + 2) * 2 + 1);
        assert_eq!(g.cell(g.linear_index(3, 1, 0)), [3, 1, 0]);
        assert_eq!(g.center(0), [0.5, 0.5, 0.5]);
        assert!(VolumeGrid::new([0.0; 3], [0.0, 1.0, 1.0], [1.0; 3]).is_err());
    }

    fn front_camera() -> CameraModel {
        CameraModel::mounted(0.0, 0.0, [0.0, 0.0, 0.0], 50.0, [100, 100]).unwrap()
    }

    #[test]
    fn constant_map_lifts_to_constant() {
        let rig = CameraRig::new(vec![front_camera()]);
        let fm = FeatureMap::from_fn(8, 8, 3, |_, _, c| c as f64 + 0.5).unwrap();
        let grid = VolumeGrid::new([-10.0, -10.0, -2.0], [30.0, 10.0, 2.0], [2.0, 2.0, 2.0]).unwrap();
        let vol = lift_dense(&[fm], &rig, &grid).unwrap();
        let valid = vol.valid.iter().filter(|v| **v).count();
        assert!(valid > 0 && valid < grid.len());
        for i in 0..grid.len() {
            let expect: &[f64] = if vol.valid[i] { &[0.5, 1.5, 2.5] } else { &[0.0; 3] };
            for (a, b) in vol.feature(i).iter().zip(expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_views_average() {
        // Both cameras look down +x from the ego origin; the second is offset.
        let cam = |x: f64| {
            CameraModel::new(
                Intrinsics { fx: 10.0, fy: 10.0, cx: 5.0, cy: 5.0 },
                [10, 10],
                RigidTransform::new(
                    nalgebra::Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0),
                    nalgebra::Vector3::new(0.0, 0.0, x),
                )
                .unwrap(),
                DEFAULT_NEAR_PLANE,
            )
            .unwrap()
        };
        let rig = CameraRig::new(vec![cam(0.0), cam(1.0)]);
        let a = FeatureMap::from_fn(4, 4, 1, |_, _, _| 2.0).unwrap();
        let b = FeatureMap::from_fn(4, 4, 1, |_, _, _| 6.0).unwrap();
        let grid = VolumeGrid::new([4.0, -0.5, -0.5], [5.0, 0.5, 0.5], [1.0; 3]).unwrap();
        let vol = lift_dense(&[a, b], &rig, &grid).unwrap();
        assert_eq!(vol.valid, vec![true]);
        assert_eq!(vol.feature(0), &[4.0]);
    }

    #[test]
    fn errors() {
        let grid = VolumeGrid::desk();
        assert_eq!(lift_dense(&[], &CameraRig::new(vec![]), &grid), Err(VolumeError::EmptyRig));
        let fm = FeatureMap::from_fn(2, 2, 1, |_, _, _| 0.0).unwrap();
        assert!(matches!(
            lift_dense(&[fm.clone(), fm], &CameraRig::new(vec![front_camera()]), &grid),
            Err(VolumeError::ViewCount { .. })
        ));
    }
}
