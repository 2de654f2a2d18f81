//! Open-loop displacement metrics, behavior-wise averaging and the
//! evaluation harness that produces [`EvalReport`].

mod report;
mod synth;

use rayon::prelude::*;
use thiserror::Error;

use crate::behavior::{classify_behavior, stage_decisions, FutureTrack};
use crate::planner::{derive_seed, Planner};
use crate::scenario::{Behavior, PlanTrajectory, Scenario};

pub use report::{
    BehaviorRow, EvalReport, FailedSample, HorizonRow, InvariantCheck, SampleCounts, REPORT_SCHEMA_VERSION,
};
pub use synth::{generate_synthetic, BehaviorMix, SynthConfig, SynthError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectories sampled at different rates ({0} Hz vs {1} Hz)")]
    FrequencyMismatch(f64, f64),
    #[error("horizon {horizon_s} s needs {steps} steps but a trajectory has {available}")]
    HorizonTooLong { horizon_s: f64, steps: usize, available: usize },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("no samples")]
    Empty,
    #[error("scenario {id}: {reason}")]
    BadScenario { id: String, reason: String },
}

/// Sum with pairwise (cascade) splitting; the result depends only on the
/// order of `xs`, never on how work was scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| pairwise_sum(xs) / xs.len() as f64)
}

/// Number of waypoints covering `horizon_s` at `frequency_hz`.
pub fn horizon_steps(horizon_s: f64, frequency_hz: f64) -> usize {
    (horizon_s * frequency_hz).round() as usize
}

/// Mean Euclidean distance over the waypoints up to `horizon_s`.
pub fn ade(pred: &PlanTrajectory, gt: &PlanTrajectory, horizon_s: f64) -> Result<f64, MetricsError> {
    if pred.frequency_hz() != gt.frequency_hz() {
        return Err(MetricsError::FrequencyMismatch(pred.frequency_hz(), gt.frequency_hz()));
    }
    if !(horizon_s > 0.0 && horizon_s.is_finite()) {
        return Err(MetricsError::BadHorizon(horizon_s));
    }
    let steps = horizon_steps(horizon_s, gt.frequency_hz());
    let available = pred.len().min(gt.len());
    if steps == 0 || steps > available {
        return Err(MetricsError::HorizonTooLong { horizon_s, steps, available });
    }
    let d: Vec<f64> = pred.waypoints()[..steps]
        .iter()
        .zip(&gt.waypoints()[..steps])
        .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
        .collect();
    Ok(pairwise_sum(&d) / steps as f64)
}

/// How the per-behavior means are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadeDivisor {
    /// Average over the behaviors present in the sample.
    Present,
    /// Always divide by all seven behaviors; absent ones contribute zero.
    Strict7,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BadeSummary {
    pub value: f64,
    /// `ADE_b` for every behavior, `None` when absent.
    pub per_behavior: Vec<(Behavior, Option<f64>)>,
    pub absent: Vec<Behavior>,
}

/// Mean of per-behavior mean ADE.
pub fn bade(samples: &[(f64, Behavior)], divisor: BadeDivisor) -> Result<BadeSummary, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let per_behavior: Vec<(Behavior, Option<f64>)> = Behavior::ALL
        .iter()
        .map(|&b| {
            let xs: Vec<f64> = samples.iter().filter(|s| s.1 == b).map(|s| s.0).collect();
            (b, mean(&xs))
        })
        .collect();
    let present: Vec<f64> = per_behavior.iter().filter_map(|(_, m)| *m).collect();
    let denom = match divisor {
        BadeDivisor::Present => present.len(),
        BadeDivisor::Strict7 => Behavior::ALL.len(),
    };
    Ok(BadeSummary {
        value: pairwise_sum(&present) / denom as f64,
        absent: per_behavior.iter().filter(|(_, m)| m.is_none()).map(|(b, _)| *b).collect(),
        per_behavior,
    })
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub horizons_s: Vec<f64>,
    pub seed: u64,
    pub divisor: BadeDivisor,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { horizons_s: vec![1.0, 3.0, 5.0], seed: 0, divisor: BadeDivisor::Present }
    }
}

/// Outcome of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    Scored { behavior: Behavior, ade: Vec<f64>, decisions_correct: usize, decisions_total: usize, dropped: usize },
    Failed { behavior: Option<Behavior>, error: String },
}

/// Ground-truth behavior over the whole recorded future.
pub fn ground_truth_behavior(scenario: &Scenario) -> Result<Behavior, MetricsError> {
    FutureTrack::from_trajectory(&scenario.ground_truth)
        .map(|t| classify_behavior(&t))
        .map_err(|e| MetricsError::BadScenario { id: scenario.id.clone(), reason: e.to_string() })
}

/// Plan and score a single scenario.
pub fn evaluate_one(scenario: &Scenario, planner: &dyn Planner, horizons_s: &[f64], seed: u64) -> SampleOutcome {
    let behavior = match ground_truth_behavior(scenario) {
        Ok(b) => b,
        Err(e) => return SampleOutcome::Failed { behavior: None, error: e.to_string() },
    };
    let fail = |error: String| SampleOutcome::Failed { behavior: Some(behavior), error };
    let profile = planner.profile();
    if let Err(e) = scenario.validate(profile) {
        return fail(e.to_string());
    }
    let out = match planner.plan(scenario, seed) {
        Ok(o) => o,
        Err(e) => return fail(e.to_string()),
    };
    let ade = match horizons_s
        .iter()
        .map(|&h| ade(&out.trajectory, &scenario.ground_truth, h))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(v) => v,
        Err(e) => return fail(e.to_string()),
    };
    let Some(truth) = scenario.ground_truth.truncated(profile.waypoint_count()) else {
        return fail("ground truth shorter than the planning horizon".into());
    };
    let expected = stage_decisions(&truth, &scenario.history, profile);
    SampleOutcome::Scored {
        behavior,
        decisions_correct: expected.iter().zip(&out.decisions).filter(|(a, b)| a == b).count(),
        decisions_total: expected.len(),
        ade,
        dropped: out.dropped,
    }
}

/// Run `planner` over `corpus` and aggregate ADE / bADE per horizon.
///
/// Scenarios are planned in parallel, each with a seed derived from
/// `opts.seed` and its corpus position; all sums run in corpus order, so
/// the report does not depend on the thread count.
pub fn evaluate(corpus: &[Scenario], planner: &dyn Planner, opts: &EvalOptions) -> Result<EvalReport, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&h) = opts.horizons_s.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(MetricsError::BadHorizon(h));
    }
    let outcomes: Vec<SampleOutcome> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| evaluate_one(s, planner, &opts.horizons_s, derive_seed(opts.seed, i as u64)))
        .collect();
    Ok(EvalReport::from_outcomes(corpus, &outcomes, planner, opts))
}
