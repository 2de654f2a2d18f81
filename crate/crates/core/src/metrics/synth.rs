//! Deterministic desk-scale scenario generator. Each scenario's future is
//! rolled out from a behavior-specific template and kept only if the
//! rule-based classifier agrees with the requested behavior, so labels
//! are exact by construction.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{classify_behavior, derive_command, FutureTrack, COMMAND_BASE_HORIZON_S, COMMAND_HORIZON_STEP_S};
use crate::geometry::{CameraRig, RigidPose};
use crate::planner::{rollout, Maneuver};
use crate::scenario::{
    Behavior, EgoState, EgoStateHistory, FeatureSource, PlanTrajectory, PlanningProfile, Scenario, SensorFrame,
};
use crate::scene::{Blob, ProceduralScene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("behavior mix must be non-negative and sum to 1 (sum {0})")]
    InvalidMix(f64),
    #[error("could not produce a `{0}` scenario within the attempt budget")]
    Exhausted(Behavior),
    #[error("invalid generator setting: {0}")]
    Config(String),
}

/// Target share of each behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorMix(pub BTreeMap<Behavior, f64>);

impl Default for BehaviorMix {
    /// Skewed toward straight driving and stops, turns rare.
    fn default() -> Self {
        use Behavior::*;
        Self(BTreeMap::from([
            (StraightForward, 0.45),
            (Stop, 0.27),
            (LeftTurn, 0.09),
            (RightTurn, 0.10),
            (StraightLeft, 0.04),
            (StraightRight, 0.04),
            (LeftUTurn, 0.01),
        ]))
    }
}

impl BehaviorMix {
    pub fn only(b: Behavior) -> Self {
        Self(BTreeMap::from([(b, 1.0)]))
    }

    pub fn uniform() -> Self {
        Self(Behavior::ALL.iter().map(|&b| (b, 1.0 / 7.0)).collect())
    }

    pub fn weight(&self, b: Behavior) -> f64 {
        self.0.get(&b).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let sum: f64 = self.0.values().sum();
        if self.0.values().any(|w| !(w.is_finite() && *w >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(SynthError::InvalidMix(sum));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Behavior {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = Behavior::StraightForward;
        for (&b, &w) in &self.0 {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = b;
            if u < acc {
                return b;
            }
        }
        last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub mix: BehaviorMix,
    pub profile: PlanningProfile,
    /// Length of the stored ground truth.
    pub future_s: f64,
    /// Length of the future used for command derivation.
    pub lookahead_s: f64,
    pub views: usize,
    pub image_size: [u32; 2],
    pub focal_px: f64,
    pub camera_height_m: f64,
    /// `[width, height]` of each feature map.
    pub feature_size: [usize; 2],
    pub channels: usize,
    pub history_frames: usize,
    pub frame_interval_s: f64,
    pub blobs: [usize; 2],
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mix: BehaviorMix::default(),
            profile: PlanningProfile::womd(),
            future_s: 8.0,
            lookahead_s: 12.0,
            views: 4,
            image_size: [448, 448],
            focal_px: 224.0,
            camera_height_m: 1.6,
            feature_size: [16, 16],
            channels: 64,
            history_frames: 1,
            frame_interval_s: 0.5,
            blobs: [6, 12],
            max_attempts: 2000,
        }
    }
}

/// Kinematic recipe of one candidate future.
struct Recipe {
    speed0: f64,
    /// Acceleration before and after the stage boundary.
    accel: [f64; 2],
    maneuver: Maneuver,
    radius: f64,
    /// Stationary vehicles may pull away after this time.
    departure_s: Option<f64>,
}

fn recipe<R: Rng + ?Sized>(b: Behavior, rng: &mut R) -> Recipe {
    let moving = |rng: &mut R, maneuver, radius| Recipe {
        speed0: rng.random_range(3.0..12.0),
        accel: [rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)],
        maneuver,
        radius,
        departure_s: None,
    };
    match b {
        Behavior::Stop => Recipe {
            speed0: rng.random_range(0.0..0.3),
            accel: [0.0, 0.0],
            maneuver: match rng.random_range(0..3) {
                0 => Maneuver::Forward,
                1 => Maneuver::Turn { target_heading: PI / 2.0 },
                _ => Maneuver::Turn { target_heading: -PI / 2.0 },
            },
            radius: 10.0,
            departure_s: rng.random_bool(0.5).then(|| rng.random_range(8.4..11.0)),
        },
        Behavior::StraightForward => moving(rng, Maneuver::Forward, 12.0),
        Behavior::StraightLeft | Behavior::StraightRight => {
            let side = if b == Behavior::StraightLeft { 1.0 } else { -1.0 };
            let target_y = side * rng.random_range(6.5..11.0);
            let r = rng.random_range(10.0..20.0);
            moving(rng, Maneuver::LateralShift { target_y }, r)
        }
        Behavior::LeftTurn | Behavior::RightTurn => {
            let side = if b == Behavior::LeftTurn { 1.0 } else { -1.0 };
            let target_heading = side * rng.random_range(0.8..1.1) * PI / 2.0;
            let r = rng.random_range(8.0..20.0);
            moving(rng, Maneuver::Turn { target_heading }, r)
        }
        Behavior::LeftUTurn => Recipe {
            speed0: rng.random_range(3.0..7.0),
            accel: [rng.random_range(-0.3..0.6), rng.random_range(-0.3..0.6)],
            maneuver: Maneuver::Turn { target_heading: PI },
            radius: rng.random_range(4.0..8.0),
            departure_s: None,
        },
    }
}

fn make_history(profile: &PlanningProfile, speed0: f64, accel: f64) -> EgoStateHistory {
    let dt = profile.dt();
    let n = profile.history_steps().max(1);
    let steps = (1..=n)
        .rev()
        .map(|k| {
            let t = -(k as f64) * dt;
            let v = (speed0 + accel * t).max(0.0);
            EgoState {
                t,
                position: [speed0 * t + 0.5 * accel * t * t, 0.0],
                velocity: [v, 0.0],
                acceleration: [accel, 0.0],
            }
        })
        .collect();
    EgoStateHistory::new(steps, profile.frequency_hz).expect("generated history is valid")
}

fn make_scene<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> ProceduralScene {
    let count = rng.random_range(cfg.blobs[0]..=cfg.blobs[1].max(cfg.blobs[0]));
    ProceduralScene {
        channels: cfg.channels,
        feature_size: cfg.feature_size,
        background_seed: rng.random(),
        blobs: (0..count)
            .map(|_| Blob {
                center: [rng.random_range(-20.0..60.0), rng.random_range(-25.0..25.0), rng.random_range(0.0..3.0)],
                radius: rng.random_range(1.0..3.0),
                embedding_seed: rng.random(),
            })
            .collect(),
    }
}

fn one_scenario(cfg: &SynthConfig, rig: &CameraRig, seed: u64, index: usize) -> Result<Scenario, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let behavior = cfg.mix.draw(&mut rng);
    let profile = &cfg.profile;
    let dt = profile.dt();
    let steps = (cfg.lookahead_s / dt).round() as usize;
    let stored = (cfg.future_s / dt).round() as usize;
    let boundary = profile.stage_ranges().first().map_or(0, |r| r.end);

    for _ in 0..cfg.max_attempts {
        let r = recipe(behavior, &mut rng);
        let accels: Vec<f64> = (0..steps)
            .map(|i| match r.departure_s {
                Some(t0) if (i as f64 + 0.5) * dt >= t0 => 2.0,
                _ => r.accel[usize::from(i >= boundary)],
            })
            .collect();
        let path = rollout(r.speed0, r.maneuver, r.radius, &accels, dt);
        let mut pts = Vec::with_capacity(steps + 1);
        pts.push([0.0, 0.0]);
        pts.extend_from_slice(&path);
        let track = FutureTrack::from_positions(pts, dt).map_err(|e| SynthError::Config(e.to_string()))?;
        if classify_behavior(&track.window(cfg.future_s)) != behavior {
            continue;
        }
        let command = derive_command(&track, COMMAND_BASE_HORIZON_S, COMMAND_HORIZON_STEP_S);
        let history = make_history(profile, r.speed0, r.accel[0]);

        let mut frames = Vec::with_capacity(cfg.history_frames + 1);
        let mut poses = Vec::with_capacity(cfg.history_frames + 1);
        for f in 0..=cfg.history_frames {
            let t = -(f as f64) * cfg.frame_interval_s;
            let x = r.speed0 * t + 0.5 * r.accel[0] * t * t;
            frames.push(SensorFrame { timestamp_s: t, features: FeatureSource::Procedural });
            poses.push(if f == 0 {
                RigidPose::identity()
            } else {
                RigidPose::from_yaw_translation(0.0, [x, 0.0, 0.0])
            });
        }
        return Ok(Scenario {
            id: format!("synth-{seed}-{index:06}"),
            history,
            command,
            ground_truth: PlanTrajectory::new(path[..stored].to_vec(), profile.frequency_hz)
                .map_err(|e| SynthError::Config(e.to_string()))?,
            rig: rig.clone(),
            frames,
            ego_poses: poses,
            scene: Some(make_scene(cfg, &mut rng)),
        });
    }
    Err(SynthError::Exhausted(behavior))
}

/// `n` scenarios drawn from `cfg.mix`; scenario `i` depends only on
/// `(cfg, seed, i)`.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64, n: usize) -> Result<Vec<Scenario>, SynthError> {
    cfg.mix.validate()?;
    if cfg.lookahead_s < cfg.future_s || cfg.future_s < cfg.profile.horizon_s {
        return Err(SynthError::Config("need lookahead >= future >= planning horizon".into()));
    }
    if cfg.views == 0 || cfg.feature_size.iter().any(|&s| s < 2) || cfg.channels == 0 {
        return Err(SynthError::Config("empty rig or feature maps".into()));
    }
    let rig = CameraRig::surround(cfg.views, cfg.camera_height_m, cfg.focal_px, cfg.image_size);
    (0..n).into_par_iter().map(|i| one_scenario(cfg, &rig, seed, i)).collect()
}
