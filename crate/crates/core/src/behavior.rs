//! Rule-based labels derived from ego kinematics: the 7-way driving
//! behavior of a recorded future, the 6-way command given to the planner,
//! and the per-stage meta-decision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Behavior, BehaviorCommand, EgoStateHistory, MetaDecision, PlanTrajectory, PlanningProfile};

pub const STOP_MAX_MOVEMENT_M: f64 = 5.0;
pub const STOP_MAX_SPEED_MPS: f64 = 2.0;
pub const TURN_HEADING_DEG: f64 = 30.0;
pub const U_TURN_MAX_X_M: f64 = -5.0;
pub const LATERAL_SHIFT_M: f64 = 5.0;

pub const STATIONARY_MAX_SPEED_MPS: f64 = 2.0;
pub const STATIONARY_MAX_DISPLACEMENT_M: f64 = 1.5;
pub const ACCEL_THRESHOLD_MPS2: f64 = 0.5;

pub const COMMAND_BASE_HORIZON_S: f64 = 8.0;
pub const COMMAND_HORIZON_STEP_S: f64 = 2.0;

/// Steps shorter than this keep the previous heading.
const HEADING_MIN_STEP_M: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("a track needs at least two samples")]
    TooShort,
    #[error("positions and headings differ in length")]
    LengthMismatch,
    #[error("non-finite value in track")]
    NonFinite,
    #[error("time step must be positive")]
    BadStep,
}

/// Ego positions (meters, current ego frame) and unwrapped headings
/// (radians) sampled every `dt` seconds, starting at the current pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureTrack {
    positions: Vec<[f64; 2]>,
    headings: Vec<f64>,
    dt: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

impl FutureTrack {
    pub fn new(positions: Vec<[f64; 2]>, headings: Vec<f64>, dt: f64) -> Result<Self, TrackError> {
        if positions.len() < 2 {
            return Err(TrackError::TooShort);
        }
        if positions.len() != headings.len() {
            return Err(TrackError::LengthMismatch);
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(TrackError::BadStep);
        }
        if positions.iter().flatten().chain(&headings).any(|v| !v.is_finite()) {
            return Err(TrackError::NonFinite);
        }
        Ok(Self { positions, headings, dt })
    }

    /// Headings from displacement direction, unwrapped so that a U-turn
    /// reads as roughly +180 degrees rather than flipping sign. The start
    /// heading is 0 (ego frame).
    pub fn from_positions(positions: Vec<[f64; 2]>, dt: f64) -> Result<Self, TrackError> {
        let mut headings = Vec::with_capacity(positions.len());
        let mut h = 0.0;
        headings.push(h);
        for w in positions.windows(2) {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            if dx.hypot(dy) >= HEADING_MIN_STEP_M {
                h += wrap_angle(dy.atan2(dx) - h);
            }
            headings.push(h);
        }
        Self::new(positions, headings, dt)
    }

    /// Track of a planned or recorded trajectory, starting at the origin.
    pub fn from_trajectory(traj: &PlanTrajectory) -> Result<Self, TrackError> {
        let mut pts = Vec::with_capacity(traj.len() + 1);
        pts.push([0.0, 0.0]);
        pts.extend_from_slice(traj.waypoints());
        Self::from_positions(pts, 1.0 / traj.frequency_hz())
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn headings(&self) -> &[f64] {
        &self.headings
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn duration_s(&self) -> f64 {
        (self.positions.len() - 1) as f64 * self.dt
    }

    /// The first `seconds` of the track (the whole track if shorter).
    pub fn window(&self, seconds: f64) -> FutureTrack {
        let n = ((seconds / self.dt).round() as usize + 1).clamp(2, self.positions.len());
        FutureTrack { positions: self.positions[..n].to_vec(), headings: self.headings[..n].to_vec(), dt: self.dt }
    }

    /// Largest distance from the start position.
    pub fn max_displacement(&self) -> f64 {
        let p0 = self.positions[0];
        self.positions.iter().map(|p| (p[0] - p0[0]).hypot(p[1] - p0[1])).fold(0.0, f64::max)
    }

    /// Largest finite-difference speed.
    pub fn max_speed(&self) -> f64 {
        self.positions.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / self.dt).fold(0.0, f64::max)
    }

    pub fn final_displacement(&self) -> [f64; 2] {
        let (a, b) = (self.positions[0], self.positions[self.positions.len() - 1]);
        [b[0] - a[0], b[1] - a[1]]
    }

    pub fn final_heading_deg(&self) -> f64 {
        self.headings[self.headings.len() - 1].to_degrees()
    }
}

pub fn is_stop(track: &FutureTrack) -> bool {
    track.max_displacement() < STOP_MAX_MOVEMENT_M && track.max_speed() < STOP_MAX_SPEED_MPS
}

/// Rules are evaluated in order: stop, left turn / left U-turn, right
/// turn, then straight variants split on lateral displacement.
pub fn classify_behavior(track: &FutureTrack) -> Behavior {
    if is_stop(track) {
        return Behavior::Stop;
    }
    let heading = track.final_heading_deg();
    let [dx, dy] = track.final_displacement();
    if heading > TURN_HEADING_DEG {
        if dx >= U_TURN_MAX_X_M {
            Behavior::LeftTurn
        } else {
            Behavior::LeftUTurn
        }
    } else if heading < -TURN_HEADING_DEG {
        Behavior::RightTurn
    } else if dy > LATERAL_SHIFT_M {
        Behavior::StraightLeft
    } else if dy < -LATERAL_SHIFT_M {
        Behavior::StraightRight
    } else {
        Behavior::StraightForward
    }
}

/// Command from the recorded future: classify the first `base_horizon_s`
/// seconds and, while that reads as a stop, extend the window by
/// `step_s`. A vehicle that never leaves the stop rule gets
/// `GoStraightForward`.
pub fn derive_command(full_future: &FutureTrack, base_horizon_s: f64, step_s: f64) -> BehaviorCommand {
    let mut horizon = base_horizon_s;
    loop {
        let label = classify_behavior(&full_future.window(horizon));
        if let Some(cmd) = label.as_command() {
            return cmd;
        }
        if horizon >= full_future.duration_s() - 1e-9 || step_s <= 0.0 {
            return BehaviorCommand::GoStraightForward;
        }
        horizon += step_s;
    }
}

/// A stretch of future motion with the speed at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSegment {
    pub positions: Vec<[f64; 2]>,
    pub speeds: Vec<f64>,
    pub duration_s: f64,
}

impl MotionSegment {
    /// Speeds from finite differences; the first sample uses `start_speed`
    /// when given, else the first difference.
    pub fn from_positions(positions: Vec<[f64; 2]>, dt: f64, start_speed: Option<f64>) -> Self {
        let diffs: Vec<f64> = positions.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / dt).collect();
        let first = start_speed.or_else(|| diffs.first().copied()).unwrap_or(0.0);
        let mut speeds = Vec::with_capacity(positions.len());
        speeds.push(first);
        speeds.extend(diffs);
        Self { duration_s: (positions.len().saturating_sub(1)) as f64 * dt, positions, speeds }
    }

    /// `(v_end - v_start) / duration`, on speed magnitudes.
    pub fn mean_acceleration(&self) -> f64 {
        if self.duration_s <= 0.0 {
            return 0.0;
        }
        (self.speeds[self.speeds.len() - 1] - self.speeds[0]) / self.duration_s
    }
}

pub fn label_meta_decision(segment: &MotionSegment) -> MetaDecision {
    let max_speed = segment.speeds.iter().copied().fold(0.0, f64::max);
    let (a, b) = (segment.positions[0], segment.positions[segment.positions.len() - 1]);
    let displacement = (b[0] - a[0]).hypot(b[1] - a[1]);
    if max_speed < STATIONARY_MAX_SPEED_MPS && displacement < STATIONARY_MAX_DISPLACEMENT_M {
        return MetaDecision::KeepStationary;
    }
    let acc = segment.mean_acceleration();
    if acc > ACCEL_THRESHOLD_MPS2 {
        MetaDecision::Accelerate
    } else if acc < -ACCEL_THRESHOLD_MPS2 {
        MetaDecision::Decelerate
    } else {
        MetaDecision::KeepSpeed
    }
}

/// Ground-truth meta-decision of every planning stage of `future`.
pub fn stage_decisions(
    future: &PlanTrajectory,
    history: &EgoStateHistory,
    profile: &PlanningProfile,
) -> Vec<MetaDecision> {
    let dt = 1.0 / future.frequency_hz();
    let mut pts = Vec::with_capacity(future.len() + 1);
    pts.push([0.0, 0.0]);
    pts.extend_from_slice(future.waypoints());
    let segment = MotionSegment::from_positions(pts, dt, Some(history.latest().speed()));
    profile
        .stage_ranges()
        .into_iter()
        .map(|r| {
            let end = r.end.min(segment.positions.len() - 1);
            let start = r.start.min(end.saturating_sub(1));
            label_meta_decision(&MotionSegment {
                positions: segment.positions[start..=end].to_vec(),
                speeds: segment.speeds[start..=end].to_vec(),
                duration_s: (end - start) as f64 * dt,
            })
        })
        .collect()
}
