//! Reference implementations written from the rule definitions with plain
//! loops, plus random fixture generators. Shared by several test targets.
#![allow(dead_code)]
// Index loops are the point of the naive oracles.
#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use rand::Rng;
use voxplan::geometry::{CameraModel, CameraRig, FeatureMap, Intrinsics, RigidPose};
use voxplan::nn::{Linear, Mlp};
use voxplan::scenario::{Behavior, BehaviorCommand, FrameFeatures, MetaDecision};
use voxplan::volume::{LiftParams, VolumeGrid};

// ---------------------------------------------------------------- lifting

/// Bilinear interpolation as a sum of tent weights over every cell, after
/// clamping the coordinate to the grid.
pub fn naive_bilinear(fm: &FeatureMap, u: f64, v: f64) -> Vec<f64> {
    let u = u.clamp(0.0, (fm.width() - 1) as f64);
    let v = v.clamp(0.0, (fm.height() - 1) as f64);
    let mut out = vec![0.0; fm.channels()];
    for y in 0..fm.height() {
        for x in 0..fm.width() {
            let w = (1.0 - (u - x as f64).abs()).max(0.0) * (1.0 - (v - y as f64).abs()).max(0.0);
            if w == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * fm.cell(x, y)[c];
            }
        }
    }
    out
}

/// Pinhole projection with explicit matrix arithmetic.
pub fn naive_project(p: [f64; 3], cam: &CameraModel) -> Option<[f64; 2]> {
    let r = cam.extrinsic().rotation();
    let t = cam.extrinsic().translation();
    let mut pc = [0.0; 3];
    for i in 0..3 {
        pc[i] = t[i];
        for j in 0..3 {
            pc[i] += r[(i, j)] * p[j];
        }
    }
    if pc[2] <= cam.near_plane() {
        return None;
    }
    let k = cam.intrinsics();
    let u = k.fx * pc[0] / pc[2] + k.cx;
    let v = k.fy * pc[1] / pc[2] + k.cy;
    let [w, h] = cam.image_size();
    if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
        return None;
    }
    Some([u, v])
}

/// `R^T (p - t)`: current-frame point in the coordinates of a pose's frame.
pub fn naive_inverse_apply(pose: &RigidPose, p: [f64; 3]) -> [f64; 3] {
    let r = pose.rotation();
    let t = pose.translation();
    let mut out = [0.0; 3];
    for j in 0..3 {
        for i in 0..3 {
            out[j] += r[(i, j)] * (p[i] - t[i]);
        }
    }
    out
}

/// Mean over seeing views of the sampled feature, and the number of views.
pub fn naive_semantic(maps: &[FeatureMap], rig: &CameraRig, p: [f64; 3]) -> (Vec<f64>, usize) {
    let c = maps[0].channels();
    let mut sum = vec![0.0; c];
    let mut seen = 0;
    for (fm, cam) in maps.iter().zip(&rig.cameras) {
        let Some([px, py]) = naive_project(p, cam) else {
            continue;
        };
        let [iw, ih] = cam.image_size();
        let u = (px + 0.5) * fm.width() as f64 / iw as f64 - 0.5;
        let v = (py + 0.5) * fm.height() as f64 / ih as f64 - 0.5;
        for (s, x) in sum.iter_mut().zip(naive_bilinear(fm, u, v)) {
            *s += x;
        }
        seen += 1;
    }
    if seen > 0 {
        for s in &mut sum {
            *s /= seen as f64;
        }
    }
    (sum, seen)
}

/// Voxel centers in x-major, then y, then z order.
pub fn naive_centers(grid: &VolumeGrid) -> Vec<[f64; 3]> {
    let [nx, ny, nz] = grid.counts();
    let (lo, res) = (grid.min(), grid.resolution());
    let mut out = Vec::with_capacity(nx * ny * nz);
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..nz {
                out.push([
                    lo[0] + (ix as f64 + 0.5) * res[0],
                    lo[1] + (iy as f64 + 0.5) * res[1],
                    lo[2] + (iz as f64 + 0.5) * res[2],
                ]);
            }
        }
    }
    out
}

/// Per-voxel features (row-major `N x C`) and validity of one frame.
pub fn naive_lift(maps: &[FeatureMap], rig: &CameraRig, grid: &VolumeGrid, pose: &RigidPose) -> (Vec<f64>, Vec<bool>) {
    let mut feats = Vec::new();
    let mut valid = Vec::new();
    for center in naive_centers(grid) {
        let (f, seen) = naive_semantic(maps, rig, naive_inverse_apply(pose, center));
        feats.extend(f);
        valid.push(seen > 0);
    }
    (feats, valid)
}

pub fn naive_linear(l: &Linear, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), l.in_dim());
    (0..l.out_dim())
        .map(|o| {
            let mut acc = l.bias[o];
            for i in 0..l.in_dim() {
                acc += l.weight[o * l.in_dim() + i] * x[i];
            }
            acc
        })
        .collect()
}

pub fn naive_mlp(m: &Mlp, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = naive_linear(&m.hidden, x).into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect();
    naive_linear(&m.output, &h)
}

fn reduce_map(fm: &FeatureMap, l: &Linear) -> FeatureMap {
    let mut data = Vec::new();
    for y in 0..fm.height() {
        for x in 0..fm.width() {
            data.extend(naive_linear(l, fm.cell(x, y)));
        }
    }
    FeatureMap::new(fm.height(), fm.width(), l.out_dim(), data).unwrap()
}

/// Gate values and validity per voxel.
pub fn naive_gates(
    frames: &[FrameFeatures],
    rig: &CameraRig,
    grid: &VolumeGrid,
    params: &LiftParams,
) -> (Vec<f64>, Vec<bool>) {
    let lifted: Vec<(Vec<f64>, Vec<bool>)> = frames
        .iter()
        .map(|f| {
            let reduced: Vec<FeatureMap> = f.maps.iter().map(|m| reduce_map(m, &params.gate_fc)).collect();
            naive_lift(&reduced, rig, grid, &f.pose)
        })
        .collect();
    let c = params.gate_fc.out_dim();
    let n = grid.len();
    let mut gates = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for i in 0..n {
        let mut concat = Vec::new();
        let mut any = false;
        for (f, v) in &lifted {
            concat.extend_from_slice(&f[i * c..(i + 1) * c]);
            any |= v[i];
        }
        let logit = naive_mlp(&params.gate_mlp, &concat)[0];
        gates.push(1.0 / (1.0 + (-logit).exp()));
        valid.push(any);
    }
    (gates, valid)
}

/// Full sort: seen voxels before unseen, then gate descending, then index
/// ascending; the first `m` returned in ascending index order.
pub fn oracle_top_m(values: &[f64], valid: &[bool], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| valid[b].cmp(&valid[a]).then(values[b].partial_cmp(&values[a]).unwrap()).then(a.cmp(&b)));
    let mut top = idx[..m].to_vec();
    top.sort();
    top
}

pub fn naive_fourier(norm: [f64; 3], levels: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for c in norm {
        let mut freq = 1.0;
        for _ in 0..levels {
            out.push((freq * PI * c).sin());
            out.push((freq * PI * c).cos());
            freq *= 2.0;
        }
    }
    out
}

pub fn naive_pos_embed(center: [f64; 3], grid: &VolumeGrid, params: &LiftParams) -> Vec<f64> {
    let (lo, hi) = (grid.min(), grid.max());
    let norm = [0, 1, 2].map(|a| (center[a] - lo[a]) / (hi[a] - lo[a]) * 2.0 - 1.0);
    naive_mlp(&params.posemb, &naive_fourier(norm, params.fourier_levels))
}

/// Selected indices and their fused `M x C` token features.
pub fn naive_sparse(
    frames: &[FrameFeatures],
    rig: &CameraRig,
    params: &LiftParams,
    grid: &VolumeGrid,
    gates: &[f64],
    valid: &[bool],
    m: usize,
) -> (Vec<usize>, Vec<f64>) {
    let centers = naive_centers(grid);
    let idx = oracle_top_m(gates, valid, m);
    let mut feats = Vec::new();
    for &i in &idx {
        let pe = naive_pos_embed(centers[i], grid, params);
        let g = gates[i];
        let mut concat = Vec::new();
        for f in frames {
            let (sem, _) = naive_semantic(&f.maps, rig, naive_inverse_apply(&f.pose, centers[i]));
            for c in 0..sem.len() {
                concat.push(g * sem[c] + (1.0 - g) * params.vacant[c] + pe[c]);
            }
        }
        feats.extend(naive_linear(&params.temporal_fc, &concat));
    }
    (idx, feats)
}

// ---------------------------------------------------------------- fixtures

pub fn random_rig<R: Rng>(rng: &mut R, views: usize) -> CameraRig {
    let cameras = (0..views)
        .map(|i| {
            let size = [rng.random_range(64..400u32), rng.random_range(64..300u32)];
            let yaw = i as f64 * std::f64::consts::TAU / views as f64 + rng.random_range(-0.3..0.3);
            let pitch = rng.random_range(-0.2..0.3);
            let pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.0..2.0)];
            let base = CameraModel::mounted(yaw, pitch, pos, 100.0, size).unwrap();
            let intr = Intrinsics {
                fx: rng.random_range(50.0..300.0),
                fy: rng.random_range(50.0..300.0),
                cx: size[0] as f64 * rng.random_range(0.3..0.7),
                cy: size[1] as f64 * rng.random_range(0.3..0.7),
            };
            CameraModel::new(intr, size, base.extrinsic().clone(), rng.random_range(0.05..0.5)).unwrap()
        })
        .collect();
    CameraRig::new(cameras)
}

pub fn random_map<R: Rng>(rng: &mut R, w: usize, h: usize, c: usize) -> FeatureMap {
    FeatureMap::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

/// Frame 0 has the identity pose; older frames are displaced and yawed.
pub fn random_frames<R: Rng>(rng: &mut R, rig: &CameraRig, frames: usize, c: usize) -> Vec<FrameFeatures> {
    let (w, h) = (rng.random_range(2..12), rng.random_range(2..10));
    (0..frames)
        .map(|t| FrameFeatures {
            pose: if t == 0 {
                RigidPose::identity()
            } else {
                RigidPose::from_yaw_translation(
                    rng.random_range(-0.3..0.3),
                    [-(t as f64) * rng.random_range(0.0..5.0), rng.random_range(-1.0..1.0), 0.0],
                )
            },
            maps: (0..rig.len()).map(|_| random_map(rng, w, h, c)).collect(),
        })
        .collect()
}

/// Grids of up to 12 x 12 x 6 voxels around the ego vehicle.
pub fn random_grid<R: Rng>(rng: &mut R) -> VolumeGrid {
    let counts = [rng.random_range(1..=12), rng.random_range(1..=12), rng.random_range(1..=6)];
    let res = [rng.random_range(0.5..4.0), rng.random_range(0.5..4.0), rng.random_range(0.5..2.0)];
    let min = [-(counts[0] as f64) * res[0] * rng.random_range(0.2..0.8), -(counts[1] as f64) * res[1] * 0.5, -1.0];
    let max = [0, 1, 2].map(|a| min[a] + counts[a] as f64 * res[a]);
    VolumeGrid::new(min, max, res).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- labels

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Final heading in degrees by accumulating signed turning angles between
/// consecutive displacement vectors; steps under 1 cm keep the previous
/// direction.
pub fn oracle_final_heading_deg(pos: &[[f64; 2]]) -> f64 {
    let mut dir = [1.0, 0.0];
    let mut total = 0.0;
    for w in pos.windows(2) {
        let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        if dist(w[0], w[1]) < 0.01 {
            continue;
        }
        let cross = dir[0] * d[1] - dir[1] * d[0];
        let dot = dir[0] * d[0] + dir[1] * d[1];
        total += cross.atan2(dot);
        dir = d;
    }
    total * 180.0 / PI
}

/// The seven behavior rules as an ordered table of predicates.
pub fn oracle_behavior(pos: &[[f64; 2]], dt: f64) -> Behavior {
    let start = pos[0];
    let end = pos[pos.len() - 1];
    let movement = pos.iter().map(|p| dist(*p, start)).fold(0.0, f64::max);
    let max_speed = pos.windows(2).map(|w| dist(w[0], w[1]) / dt).fold(0.0, f64::max);
    let heading = oracle_final_heading_deg(pos);
    let (fx, fy) = (end[0] - start[0], end[1] - start[1]);
    let stopped = movement < 5.0 && max_speed < 2.0;
    let straight = (-30.0..=30.0).contains(&heading);
    let table: [(Behavior, bool); 7] = [
        (Behavior::Stop, stopped),
        (Behavior::LeftTurn, !stopped && heading > 30.0 && fx >= -5.0),
        (Behavior::LeftUTurn, !stopped && heading > 30.0 && fx < -5.0),
        (Behavior::RightTurn, !stopped && heading < -30.0),
        (Behavior::StraightLeft, !stopped && straight && fy > 5.0),
        (Behavior::StraightRight, !stopped && straight && fy < -5.0),
        (Behavior::StraightForward, !stopped && straight && (-5.0..=5.0).contains(&fy)),
    ];
    let hits: Vec<Behavior> = table.iter().filter(|r| r.1).map(|r| r.0).collect();
    assert_eq!(hits.len(), 1, "rules must be mutually exclusive and exhaustive: {hits:?}");
    hits[0]
}

/// 8 s window, prolonged by 2 s while the window reads as a stop; falls
/// back to going straight once the recording is exhausted.
pub fn oracle_command(pos: &[[f64; 2]], dt: f64) -> BehaviorCommand {
    let mut seconds = 8.0;
    loop {
        let n = ((seconds / dt).round() as usize + 1).min(pos.len());
        let label = oracle_behavior(&pos[..n], dt);
        let cmd = match label {
            Behavior::Stop => None,
            Behavior::StraightForward => Some(BehaviorCommand::GoStraightForward),
            Behavior::StraightLeft => Some(BehaviorCommand::GoStraightLeft),
            Behavior::StraightRight => Some(BehaviorCommand::GoStraightRight),
            Behavior::LeftTurn => Some(BehaviorCommand::LeftTurn),
            Behavior::RightTurn => Some(BehaviorCommand::RightTurn),
            Behavior::LeftUTurn => Some(BehaviorCommand::LeftUTurn),
        };
        if let Some(c) = cmd {
            return c;
        }
        if n == pos.len() {
            return BehaviorCommand::GoStraightForward;
        }
        seconds += 2.0;
    }
}

/// The four meta-decision rules. Speeds come from finite differences, with
/// `start_speed` (when given) as the speed at the first sample.
pub fn oracle_meta(pos: &[[f64; 2]], dt: f64, start_speed: Option<f64>) -> MetaDecision {
    let mut speeds = Vec::new();
    for i in 1..pos.len() {
        speeds.push(dist(pos[i - 1], pos[i]) / dt);
    }
    let v0 = match (start_speed, speeds.first()) {
        (Some(v), _) => v,
        (None, Some(v)) => *v,
        (None, None) => 0.0,
    };
    let v1 = *speeds.last().unwrap_or(&v0);
    let max_speed = speeds.iter().copied().fold(v0, f64::max);
    let displacement = dist(pos[0], pos[pos.len() - 1]);
    if max_speed < 2.0 && displacement < 1.5 {
        return MetaDecision::KeepStationary;
    }
    let duration = (pos.len() - 1) as f64 * dt;
    let acc = if duration > 0.0 { (v1 - v0) / duration } else { 0.0 };
    if acc > 0.5 {
        MetaDecision::Accelerate
    } else if acc < -0.5 {
        MetaDecision::Decelerate
    } else {
        MetaDecision::KeepSpeed
    }
}

/// A random piecewise motion: a standing start or not, then segments with
/// random speed changes and yaw rates, sometimes a dead stop. Covers all
/// seven behaviors with reasonable frequency.
pub fn random_track<R: Rng>(rng: &mut R, dt: f64, seconds: f64) -> Vec<[f64; 2]> {
    let n = (seconds / dt).round() as usize;
    let mut pos = vec![[0.0, 0.0]];
    let (mut x, mut y, mut h) = (0.0, 0.0, 0.0);
    let mut v: f64 = match rng.random_range(0..4) {
        0 => 0.0,
        1 => rng.random_range(0.0..2.5),
        _ => rng.random_range(0.0..15.0),
    };
    let mut i = 0;
    while i < n {
        let len = rng.random_range(3..20).min(n - i);
        let acc = rng.random_range(-2.0..2.0);
        let yaw_rate = match rng.random_range(0..3) {
            0 => 0.0,
            1 => rng.random_range(-0.15..0.15),
            _ => rng.random_range(-0.9..0.9),
        };
        let halt = rng.random_bool(0.1);
        for _ in 0..len {
            if halt {
                v = 0.0;
            }
            v = (v + acc * dt).max(0.0);
            h += yaw_rate * dt;
            x += v * dt * h.cos();
            y += v * dt * h.sin();
            pos.push([x, y]);
        }
        i += len;
    }
    pos
}

pub fn mirror(pos: &[[f64; 2]]) -> Vec<[f64; 2]> {
    pos.iter().map(|p| [p[0], -p[1]]).collect()
}
