use std::cmp::Ordering;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::{check_maps, lift_frame, sample_semantic, LiftParams, VolumeError, VolumeGrid};
use crate::geometry::{compensate_ego_motion, CameraRig};
use crate::nn::sigmoid;
use crate::scenario::FrameFeatures;

/// Per-voxel gate in `(0, 1)` and whether any frame saw the voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct GateField {
    pub grid: VolumeGrid,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl GateField {
    /// Wrap externally chosen gates (closed `[0, 1]` is accepted here).
    pub fn from_values(grid: VolumeGrid, values: Vec<f64>, valid: Vec<bool>) -> Result<Self, VolumeError> {
        if values.len() != grid.len() || valid.len() != grid.len() || values.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(VolumeError::BadGates);
        }
        Ok(Self { grid, values, valid })
    }
}

/// Largest and smallest representable values strictly inside `(0, 1)`.
const GATE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;
const GATE_MIN: f64 = f64::MIN_POSITIVE;

fn gate(logit: f64) -> f64 {
    sigmoid(logit).clamp(GATE_MIN, GATE_MAX)
}

fn check_frames(frames: &[FrameFeatures], rig: &CameraRig, params: &LiftParams) -> Result<(), VolumeError> {
    if frames.len() != params.frames() {
        return Err(VolumeError::FrameCount { expected: params.frames(), found: frames.len() });
    }
    if !frames[0].pose.is_identity(1e-12) {
        return Err(VolumeError::FirstPoseNotIdentity);
    }
    for f in frames {
        check_maps(&f.maps, rig, Some(params.channels()))?;
    }
    Ok(())
}

/// Reduce every frame's maps to gate channels, lift each frame into the
/// current ego grid, concatenate frames channel-wise (current frame
/// first) and squash the gate MLP output through a logistic.
pub fn compute_gate_field(
    frames: &[FrameFeatures],
    rig: &CameraRig,
    grid: &VolumeGrid,
    params: &LiftParams,
) -> Result<GateField, VolumeError> {
    check_frames(frames, rig, params)?;
    let reduced_channels = params.gate_channels();
    let volumes = frames
        .iter()
        .map(|f| {
            let reduced: Vec<_> = f
                .maps
                .iter()
                .map(|m| m.map_cells(reduced_channels, |x, out| params.gate_fc.forward_into(x, out)))
                .collect();
            lift_frame(&reduced, &f.pose, rig, grid)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (values, valid): (Vec<f64>, Vec<bool>) = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let concat: Vec<f64> = volumes.iter().flat_map(|v| v.feature(i).iter().copied()).collect();
            let logit = params.gate_mlp.forward(&concat)[0];
            (gate(logit), volumes.iter().any(|v| v.valid[i]))
        })
        .unzip();
    Ok(GateField { grid: grid.clone(), values, valid })
}

/// Linear indices of the `m` highest-gated voxels, sorted ascending.
///
/// Voxels no view has seen rank below every seen voxel. Equal gates are
/// broken by ascending linear index.
pub fn select_top_m(gates: &GateField, m: usize) -> Result<Vec<usize>, VolumeError> {
    let n = gates.values.len();
    if m == 0 || m > n {
        return Err(VolumeError::TopMOutOfRange { m, voxels: n });
    }
    let rank = |a: &usize, b: &usize| -> Ordering {
        gates.valid[*b]
            .cmp(&gates.valid[*a])
            .then_with(|| gates.values[*b].total_cmp(&gates.values[*a]))
            .then_with(|| a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..n).collect();
    if m < n {
        idx.select_nth_unstable_by(m - 1, rank);
        idx.truncate(m);
    }
    idx.sort_unstable();
    Ok(idx)
}

/// `g * f_sem + (1 - g) * f_vac`.
pub fn blend_vacant(f_sem: &[f64], g: f64, f_vac: &[f64]) -> Vec<f64> {
    f_sem.iter().zip(f_vac).map(|(s, v)| g * s + (1.0 - g) * v).collect()
}

/// Derivative of [`blend_vacant`] with respect to the gate.
pub fn blend_vacant_grad_gate(f_sem: &[f64], f_vac: &[f64]) -> Vec<f64> {
    f_sem.iter().zip(f_vac).map(|(s, v)| s - v).collect()
}

/// `[sin(2^k pi c), cos(2^k pi c)]` for `k = 0..levels` on each axis of a
/// coordinate normalized to `[-1, 1]`.
pub fn fourier_features(norm: [f64; 3], levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * levels);
    for c in norm {
        for k in 0..levels {
            let (s, co) = (f64::from(1u32 << k) * PI * c).sin_cos();
            out.push(s);
            out.push(co);
        }
    }
    out
}

pub(crate) fn normalize_coord(coord: [f64; 3], grid: &VolumeGrid) -> Result<[f64; 3], VolumeError> {
    if !grid.contains(coord) {
        return Err(VolumeError::OutOfRange(coord));
    }
    let (lo, hi) = (grid.min(), grid.max());
    Ok(std::array::from_fn(|a| 2.0 * (coord[a] - lo[a]) / (hi[a] - lo[a]) - 1.0))
}

pub fn pos_embed(coord: [f64; 3], grid: &VolumeGrid, params: &LiftParams) -> Result<Vec<f64>, VolumeError> {
    let norm = normalize_coord(coord, grid)?;
    Ok(params.posemb.forward(&fourier_features(norm, params.fourier_levels)))
}

/// The selected voxels with their gates and fused features.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVolumeSet {
    pub grid: VolumeGrid,
    pub channels: usize,
    pub indices: Vec<usize>,
    pub coords: Vec<[f64; 3]>,
    pub gates: Vec<f64>,
    /// `M x C`, row-major.
    pub features: Vec<f64>,
    pub valid: Vec<bool>,
}

impl SparseVolumeSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }
}

/// Gate, select, blend with the vacant feature, add the position
/// embedding per frame and fuse frames.
pub fn build_sparse_tokens(
    frames: &[FrameFeatures],
    rig: &CameraRig,
    grid: &VolumeGrid,
    params: &LiftParams,
    m: usize,
) -> Result<SparseVolumeSet, VolumeError> {
    let gates = compute_gate_field(frames, rig, grid, params)?;
    build_sparse_from_gates(frames, rig, params, &gates, m)
}

/// [`build_sparse_tokens`] with a precomputed (or overridden) gate field.
pub fn build_sparse_from_gates(
    frames: &[FrameFeatures],
    rig: &CameraRig,
    params: &LiftParams,
    gates: &GateField,
    m: usize,
) -> Result<SparseVolumeSet, VolumeError> {
    check_frames(frames, rig, params)?;
    let grid = &gates.grid;
    let indices = select_top_m(gates, m)?;
    let c = params.channels();

    let tokens = indices
        .par_iter()
        .map(|&i| {
            let center = grid.center(i);
            let g = gates.values[i];
            let pe = pos_embed(center, grid, params)?;
            let mut concat = Vec::with_capacity(frames.len() * c);
            let mut sem = vec![0.0; c];
            for f in frames {
                sample_semantic(&f.maps, rig, compensate_ego_motion(center, &f.pose), &mut sem);
                concat.extend(blend_vacant(&sem, g, &params.vacant).iter().zip(&pe).map(|(b, p)| b + p));
            }
            Ok(params.temporal_fc.forward(&concat))
        })
        .collect::<Result<Vec<_>, VolumeError>>()?;

    Ok(SparseVolumeSet {
        grid: grid.clone(),
        channels: c,
        coords: indices.iter().map(|&i| grid.center(i)).collect(),
        gates: indices.iter().map(|&i| gates.values[i]).collect(),
        valid: indices.iter().map(|&i| gates.valid[i]).collect(),
        features: tokens.concat(),
        indices,
    })
}
