//! Kinematic rollout used by the toy planner's trajectory head and by the
//! synthetic scenario generator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::scenario::BehaviorCommand;

/// Steering intent of a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Maneuver {
    Forward,
    /// Drift sideways to `target_y` meters, then straighten out.
    LateralShift {
        target_y: f64,
    },
    /// Turn until the heading reaches `target_heading` radians.
    Turn {
        target_heading: f64,
    },
}

/// Geometry of the maneuver chosen for each command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManeuverGeometry {
    pub lateral_shift_m: f64,
    pub turn_radius_m: f64,
    pub u_turn_radius_m: f64,
}

impl Default for ManeuverGeometry {
    fn default() -> Self {
        Self { lateral_shift_m: 7.0, turn_radius_m: 12.0, u_turn_radius_m: 7.0 }
    }
}

impl ManeuverGeometry {
    /// Maneuver and turning radius for a command.
    pub fn for_command(&self, command: BehaviorCommand) -> (Maneuver, f64) {
        use BehaviorCommand::*;
        match command {
            GoStraightForward => (Maneuver::Forward, self.turn_radius_m),
            GoStraightLeft => (Maneuver::LateralShift { target_y: self.lateral_shift_m }, self.turn_radius_m),
            GoStraightRight => (Maneuver::LateralShift { target_y: -self.lateral_shift_m }, self.turn_radius_m),
            LeftTurn => (Maneuver::Turn { target_heading: PI / 2.0 }, self.turn_radius_m),
            RightTurn => (Maneuver::Turn { target_heading: -PI / 2.0 }, self.turn_radius_m),
            LeftUTurn => (Maneuver::Turn { target_heading: PI }, self.u_turn_radius_m),
        }
    }
}

/// Largest heading used while drifting sideways.
const SHIFT_MAX_HEADING: f64 = 0.35;
/// Heading per meter of remaining lateral offset while drifting.
const SHIFT_GAIN: f64 = 0.15;

/// Integrate a unicycle from the origin with heading 0 and speed `speed0`.
/// `accels[i]` is applied over step `i`; speed never goes negative and
/// the heading turns at most `v / radius` per second toward the maneuver's
/// target. Returns one position per step, excluding the start.
pub fn rollout(speed0: f64, maneuver: Maneuver, radius_m: f64, accels: &[f64], dt: f64) -> Vec<[f64; 2]> {
    let (mut x, mut y, mut heading, mut v) = (0.0f64, 0.0f64, 0.0f64, speed0.max(0.0));
    let mut out = Vec::with_capacity(accels.len());
    for &a in accels {
        let v_next = (v + a * dt).max(0.0);
        let ds = 0.5 * (v + v_next) * dt;
        let target = match maneuver {
            Maneuver::Forward => 0.0,
            Maneuver::Turn { target_heading } => target_heading,
            Maneuver::LateralShift { target_y } => {
                (SHIFT_GAIN * (target_y - y)).clamp(-SHIFT_MAX_HEADING, SHIFT_MAX_HEADING)
            }
        };
        let max_turn = ds / radius_m.max(1e-6);
        let next_heading = heading + (target - heading).clamp(-max_turn, max_turn);
        let mid = 0.5 * (heading + next_heading);
        x += ds * mid.cos();
        y += ds * mid.sin();
        heading = next_heading;
        v = v_next;
        out.push([x, y]);
    }
    out
}
