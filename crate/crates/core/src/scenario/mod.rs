//! Scenario domain types: ego kinematics, commands, meta-decisions and
//! planned trajectories, plus the text codec and the JSONL corpus format.

pub mod codec;
pub mod corpus;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraRig, FeatureMap, RigidPose};
use crate::scene::ProceduralScene;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("history must contain at least one step")]
    EmptyHistory,
    #[error("history timestamps must be strictly increasing (step {0})")]
    NonMonotonicHistory(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("trajectory must contain at least one waypoint")]
    EmptyTrajectory,
    #[error("frequency must be positive, got {0}")]
    BadFrequency(f64),
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("ground truth covers {have_s:.2} s, planning horizon needs {need_s:.2} s")]
    ShortGroundTruth { have_s: f64, need_s: f64 },
    #[error("frame count {frames} does not match pose count {poses}")]
    FramePoseMismatch { frames: usize, poses: usize },
    #[error("pose of the current frame must be the identity")]
    CurrentPoseNotIdentity,
    #[error("frame {0} references procedural features but the scenario has no scene")]
    MissingScene(usize),
}

/// Position, velocity and acceleration of the ego vehicle at one past
/// timestamp, all expressed in the current ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    /// Seconds relative to the current frame (negative for the past).
    pub t: f64,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
}

impl EgoState {
    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.position.iter().chain(&self.velocity).chain(&self.acceleration).all(|v| v.is_finite())
    }
}

/// Past ego states ordered oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHistory", into = "RawHistory")]
pub struct EgoStateHistory {
    steps: Vec<EgoState>,
    frequency_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct RawHistory {
    steps: Vec<EgoState>,
    frequency_hz: f64,
}

impl TryFrom<RawHistory> for EgoStateHistory {
    type Error = ScenarioError;
    fn try_from(raw: RawHistory) -> Result<Self, Self::Error> {
        EgoStateHistory::new(raw.steps, raw.frequency_hz)
    }
}

impl From<EgoStateHistory> for RawHistory {
    fn from(h: EgoStateHistory) -> Self {
        RawHistory { steps: h.steps, frequency_hz: h.frequency_hz }
    }
}

impl EgoStateHistory {
    pub fn new(steps: Vec<EgoState>, frequency_hz: f64) -> Result<Self, ScenarioError> {
        if steps.is_empty() {
            return Err(ScenarioError::EmptyHistory);
        }
        if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
            return Err(ScenarioError::BadFrequency(frequency_hz));
        }
        if steps.iter().any(|s| !s.is_finite()) {
            return Err(ScenarioError::NonFinite("history"));
        }
        if let Some(i) = steps.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(ScenarioError::NonMonotonicHistory(i + 1));
        }
        Ok(Self { steps, frequency_hz })
    }

    pub fn steps(&self) -> &[EgoState] {
        &self.steps
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    /// The most recent past state.
    pub fn latest(&self) -> &EgoState {
        self.steps.last().expect("history is non-empty")
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Future ego waypoints at `t = 1..T_f` steps of `1 / frequency_hz` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory", into = "RawTrajectory")]
pub struct PlanTrajectory {
    waypoints: Vec<[f64; 2]>,
    frequency_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTrajectory {
    waypoints: Vec<[f64; 2]>,
    frequency_hz: f64,
}

impl TryFrom<RawTrajectory> for PlanTrajectory {
    type Error = ScenarioError;
    fn try_from(raw: RawTrajectory) -> Result<Self, Self::Error> {
        PlanTrajectory::new(raw.waypoints, raw.frequency_hz)
    }
}

impl From<PlanTrajectory> for RawTrajectory {
    fn from(t: PlanTrajectory) -> Self {
        RawTrajectory { waypoints: t.waypoints, frequency_hz: t.frequency_hz }
    }
}

impl PlanTrajectory {
    pub fn new(waypoints: Vec<[f64; 2]>, frequency_hz: f64) -> Result<Self, ScenarioError> {
        if waypoints.is_empty() {
            return Err(ScenarioError::EmptyTrajectory);
        }
        if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
            return Err(ScenarioError::BadFrequency(frequency_hz));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ScenarioError::NonFinite("trajectory"));
        }
        Ok(Self { waypoints, frequency_hz })
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.waypoints
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn horizon_s(&self) -> f64 {
        self.waypoints.len() as f64 / self.frequency_hz
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The first `steps` waypoints, if the trajectory is that long.
    pub fn truncated(&self, steps: usize) -> Option<PlanTrajectory> {
        (steps >= 1 && steps <= self.waypoints.len())
            .then(|| PlanTrajectory { waypoints: self.waypoints[..steps].to_vec(), frequency_hz: self.frequency_hz })
    }

    pub fn translated(&self, offset: [f64; 2]) -> PlanTrajectory {
        PlanTrajectory {
            waypoints: self.waypoints.iter().map(|w| [w[0] + offset[0], w[1] + offset[1]]).collect(),
            frequency_hz: self.frequency_hz,
        }
    }
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ScenarioError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(ScenarioError::UnknownName { kind: $kind, name: other.to_string() }),
                }
            }
        }
    };
}

named_enum!(
    /// High-level navigation command given to the planner. There is no
    /// `stop` command: it would leak the future.
    BehaviorCommand, "command" {
        GoStraightForward => "go_straight_forward",
        GoStraightLeft => "go_straight_left",
        GoStraightRight => "go_straight_right",
        LeftTurn => "left_turn",
        RightTurn => "right_turn",
        LeftUTurn => "left_u_turn",
    }
);

named_enum!(
    /// Coarse acceleration intent emitted before the waypoints.
    MetaDecision, "meta-decision" {
        KeepStationary => "keep_stationary",
        KeepSpeed => "keep_speed",
        Accelerate => "accelerate",
        Decelerate => "decelerate",
    }
);

named_enum!(
    /// Ground-truth behavior of a scenario, derived from its future.
    Behavior, "behavior" {
        Stop => "stop",
        StraightForward => "straight_forward",
        StraightLeft => "straight_left",
        StraightRight => "straight_right",
        LeftTurn => "left_turn",
        RightTurn => "right_turn",
        LeftUTurn => "left_u_turn",
    }
);

impl Behavior {
    /// The command equivalent of a moving behavior; `None` for `Stop`.
    pub fn as_command(self) -> Option<BehaviorCommand> {
        Some(match self {
            Behavior::Stop => return None,
            Behavior::StraightForward => BehaviorCommand::GoStraightForward,
            Behavior::StraightLeft => BehaviorCommand::GoStraightLeft,
            Behavior::StraightRight => BehaviorCommand::GoStraightRight,
            Behavior::LeftTurn => BehaviorCommand::LeftTurn,
            Behavior::RightTurn => BehaviorCommand::RightTurn,
            Behavior::LeftUTurn => BehaviorCommand::LeftUTurn,
        })
    }
}

/// Dataset-dependent planning horizon, sampling rate and decision stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningProfile {
    pub horizon_s: f64,
    pub frequency_hz: f64,
    pub history_s: f64,
    pub decision_stages: usize,
}

impl PlanningProfile {
    /// 5 s of future at 5 Hz, two 2.5 s decision stages.
    pub const fn womd() -> Self {
        Self { horizon_s: 5.0, frequency_hz: 5.0, history_s: 1.0, decision_stages: 2 }
    }

    /// 3 s of future at 2 Hz, a single decision stage.
    pub const fn nuscenes() -> Self {
        Self { horizon_s: 3.0, frequency_hz: 2.0, history_s: 1.0, decision_stages: 1 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "womd" => Some(Self::womd()),
            "nuscenes" => Some(Self::nuscenes()),
            _ => None,
        }
    }

    pub fn waypoint_count(&self) -> usize {
        (self.horizon_s * self.frequency_hz).round() as usize
    }

    pub fn history_steps(&self) -> usize {
        (self.history_s * self.frequency_hz).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    /// Waypoint index ranges `[start, end)` of each decision stage.
    pub fn stage_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.waypoint_count();
        let s = self.decision_stages.max(1);
        (0..s).map(|i| (i * n / s)..((i + 1) * n / s)).collect()
    }
}

/// Where the per-view feature maps of one sensor frame come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSource {
    /// Rendered on demand from the scenario's procedural scene.
    Procedural,
    /// Maps stored in the corpus, one per camera view.
    Inline { maps: Vec<FeatureMap> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    /// Seconds relative to the current frame (0, -0.5, ...).
    pub timestamp_s: f64,
    pub features: FeatureSource,
}

/// Per-frame features with the pose mapping that frame's ego coordinates
/// into the current ego frame. Frame 0 is the current frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub pose: RigidPose,
    pub maps: Vec<FeatureMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub history: EgoStateHistory,
    pub command: BehaviorCommand,
    /// Recorded future, typically 8 s, used both as planning target and
    /// for behavior labelling.
    pub ground_truth: PlanTrajectory,
    pub rig: CameraRig,
    /// Current frame first, then progressively older frames.
    pub frames: Vec<SensorFrame>,
    /// Frame-t ego to current ego, aligned with `frames`.
    pub ego_poses: Vec<RigidPose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<ProceduralScene>,
}

impl Scenario {
    pub fn validate(&self, profile: &PlanningProfile) -> Result<(), ScenarioError> {
        let need = profile.horizon_s;
        let have = self.ground_truth.horizon_s();
        if have + 1e-9 < need {
            return Err(ScenarioError::ShortGroundTruth { have_s: have, need_s: need });
        }
        if self.frames.len() != self.ego_poses.len() {
            return Err(ScenarioError::FramePoseMismatch { frames: self.frames.len(), poses: self.ego_poses.len() });
        }
        if let Some(p) = self.ego_poses.first() {
            if !p.is_identity(1e-12) {
                return Err(ScenarioError::CurrentPoseNotIdentity);
            }
        }
        Ok(())
    }

    /// Resolve every frame to concrete feature maps.
    pub fn frame_features(&self) -> Result<Vec<FrameFeatures>, ScenarioError> {
        self.frames
            .iter()
            .zip(&self.ego_poses)
            .enumerate()
            .map(|(i, (frame, pose))| {
                let maps = match &frame.features {
                    FeatureSource::Inline { maps } => maps.clone(),
                    FeatureSource::Procedural => {
                        self.scene.as_ref().ok_or(ScenarioError::MissingScene(i))?.render(&self.rig, pose)
                    }
                };
                Ok(FrameFeatures { pose: pose.clone(), maps })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(t: f64) -> EgoState {
        EgoState { t, position: [t, 0.0], velocity: [1.0, 0.0], acceleration: [0.0, 0.0] }
    }

    #[test]
    fn history_rejects_bad_input() {
        assert_eq!(EgoStateHistory::new(vec![], 5.0), Err(ScenarioError::EmptyHistory));
        assert_eq!(EgoStateHistory::new(vec![step(-0.2), step(-0.4)], 5.0), Err(ScenarioError::NonMonotonicHistory(1)));
        let mut s = step(-0.2);
        s.velocity[1] = f64::NAN;
        assert!(EgoStateHistory::new(vec![s], 5.0).is_err());
    }

    #[test]
    fn enum_names_round_trip() {
        for c in BehaviorCommand::ALL {
            assert_eq!(c.as_str().parse::<BehaviorCommand>().unwrap(), *c);
        }
        for d in MetaDecision::ALL {
            assert_eq!(d.as_str().parse::<MetaDecision>().unwrap(), *d);
        }
        assert!("stop".parse::<BehaviorCommand>().is_err());
        assert_eq!(Behavior::Stop.as_command(), None);
    }

    #[test]
    fn profiles() {
        let w = PlanningProfile::womd();
        assert_eq!(w.waypoint_count(), 25);
        assert_eq!(w.history_steps(), 5);
        assert_eq!(w.stage_ranges(), vec![0..12, 12..25]);
        let n = PlanningProfile::nuscenes();
        assert_eq!(n.waypoint_count(), 6);
        assert_eq!(n.stage_ranges(), vec![0..6]);
    }
}
