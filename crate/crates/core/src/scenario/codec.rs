//! Line-oriented text format for planner prompts and targets.
//!
//! Prompt:
//!
//! ```text
//! command: go_straight_forward
//! history[-1.00]: p=(-5.00,0.00) v=(5.00,0.00) a=(0.00,0.00)
//! history[-0.80]: p=(-4.00,0.00) v=(5.00,0.00) a=(0.00,0.00)
//! ```
//!
//! Target:
//!
//! ```text
//! decision[0]: keep_speed
//! decision[1]: accelerate
//! waypoints: (1.00,0.00);(2.00,0.00);...
//! ```
//!
//! Every number is written with exactly two decimals, rounded half away
//! from zero on its shortest decimal representation, with `.` as the
//! separator regardless of locale.

use std::fmt::Write as _;

use thiserror::Error;

use super::{BehaviorCommand, EgoStateHistory, MetaDecision, PlanTrajectory, PlanningProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("expected {expected} decision stages, got {found}")]
    StageCount { expected: usize, found: usize },
    #[error("expected {expected} waypoints, got {found}")]
    WaypointCount { expected: usize, found: usize },
    #[error("malformed number `{0}`")]
    MalformedNumber(String),
    #[error("malformed waypoint `{0}`")]
    MalformedPair(String),
    #[error("unknown decision token `{0}`")]
    UnknownDecision(String),
    #[error("decision line `{0}` is out of order or has a bad index")]
    DecisionIndex(String),
    #[error("no waypoints line")]
    MissingWaypoints,
    #[error("unexpected line `{0}`")]
    UnexpectedLine(String),
}

/// Shape of a target text: how many decision stages and waypoints to
/// expect, and the sampling rate of the decoded trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetFormat {
    pub stages: usize,
    pub waypoints: usize,
    pub frequency_hz: f64,
}

impl From<&PlanningProfile> for TargetFormat {
    fn from(p: &PlanningProfile) -> Self {
        Self { stages: p.decision_stages, waypoints: p.waypoint_count(), frequency_hz: p.frequency_hz }
    }
}

/// Format `x` with two decimals, rounding half away from zero.
///
/// Rounding is done on the shortest round-trip decimal string of `x`, so
/// `1.005` becomes `1.01` even though its binary value is slightly below.
pub fn format_fixed2(x: f64) -> String {
    assert!(x.is_finite(), "cannot format non-finite value {x}");
    // `Display` for f64 never uses exponent notation.
    let repr = format!("{}", x.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    digits.push(frac.first().copied().unwrap_or(0));
    digits.push(frac.get(1).copied().unwrap_or(0));
    if frac.get(2).copied().unwrap_or(0) >= 5 {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 2;
    let mut out = String::with_capacity(digits.len() + 2);
    if x < 0.0 && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    for d in &digits[..split] {
        out.push((b'0' + d) as char);
    }
    out.push('.');
    for d in &digits[split..] {
        out.push((b'0' + d) as char);
    }
    out
}

/// The value the codec will reproduce after an encode/decode round trip.
pub fn quantize(x: f64) -> f64 {
    format_fixed2(x).parse().expect("formatted number parses")
}

fn pair(out: &mut String, v: [f64; 2]) {
    let _ = write!(out, "({},{})", format_fixed2(v[0]), format_fixed2(v[1]));
}

pub fn encode_prompt(history: &EgoStateHistory, command: BehaviorCommand) -> String {
    let mut out = format!("command: {}\n", command.as_str());
    for s in history.steps() {
        let _ = write!(out, "history[{}]: p=", format_fixed2(s.t));
        pair(&mut out, s.position);
        out.push_str(" v=");
        pair(&mut out, s.velocity);
        out.push_str(" a=");
        pair(&mut out, s.acceleration);
        out.push('\n');
    }
    out
}

pub fn encode_target(
    decisions: &[MetaDecision],
    traj: &PlanTrajectory,
    format: &TargetFormat,
) -> Result<String, CodecError> {
    if decisions.len() != format.stages {
        return Err(CodecError::StageCount { expected: format.stages, found: decisions.len() });
    }
    let mut out = String::new();
    for (i, d) in decisions.iter().enumerate() {
        let _ = writeln!(out, "decision[{i}]: {}", d.as_str());
    }
    out.push_str("waypoints: ");
    for (i, w) in traj.waypoints().iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        pair(&mut out, *w);
    }
    out.push('\n');
    Ok(out)
}

fn parse_number(s: &str) -> Result<f64, CodecError> {
    let t = s.trim();
    let ok = !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+');
    match t.parse::<f64>() {
        Ok(v) if ok && v.is_finite() => Ok(v),
        _ => Err(CodecError::MalformedNumber(t.to_string())),
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], CodecError> {
    let t = s.trim();
    let inner = t
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| CodecError::MalformedPair(t.to_string()))?;
    let (a, b) = inner.split_once(',').ok_or_else(|| CodecError::MalformedPair(t.to_string()))?;
    Ok([parse_number(a)?, parse_number(b)?])
}

/// Parse a target text produced by [`encode_target`] (or by a sampled
/// decoder). Blank lines and surrounding whitespace are ignored.
pub fn decode_plan(text: &str, format: &TargetFormat) -> Result<(Vec<MetaDecision>, PlanTrajectory), CodecError> {
    let mut decisions = Vec::new();
    let mut waypoints = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("decision[") {
            let (idx, tok) = rest.split_once("]:").ok_or_else(|| CodecError::UnexpectedLine(line.to_string()))?;
            if idx.trim().parse::<usize>().ok() != Some(decisions.len()) {
                return Err(CodecError::DecisionIndex(line.to_string()));
            }
            let tok = tok.trim();
            let d = tok.parse::<MetaDecision>().map_err(|_| CodecError::UnknownDecision(tok.to_string()))?;
            decisions.push(d);
        } else if let Some(rest) = line.strip_prefix("waypoints:") {
            let rest = rest.trim();
            let pts = if rest.is_empty() {
                Vec::new()
            } else {
                rest.split(';').map(parse_pair).collect::<Result<Vec<_>, _>>()?
            };
            waypoints = Some(pts);
        } else {
            return Err(CodecError::UnexpectedLine(line.to_string()));
        }
    }
    if decisions.len() != format.stages {
        return Err(CodecError::StageCount { expected: format.stages, found: decisions.len() });
    }
    let pts = waypoints.ok_or(CodecError::MissingWaypoints)?;
    if pts.len() != format.waypoints {
        return Err(CodecError::WaypointCount { expected: format.waypoints, found: pts.len() });
    }
    let traj = PlanTrajectory::new(pts, format.frequency_hz).expect("non-empty finite waypoints at positive frequency");
    Ok((decisions, traj))
}
