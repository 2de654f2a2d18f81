use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{bade, mean, BadeDivisor, EvalOptions, SampleOutcome};
use crate::planner::Planner;
use crate::scenario::{Behavior, PlanningProfile, Scenario};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub total: usize,
    pub scored: usize,
    pub failed: usize,
    /// Candidate samples dropped for failing to decode, summed over scenarios.
    pub dropped_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon_s: f64,
    pub ade: Option<f64>,
    pub bade: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRow {
    pub behavior: Behavior,
    /// Scored samples with this ground-truth behavior.
    pub count: usize,
    pub failed: usize,
    /// ADE per configured horizon.
    pub ade: Vec<Option<f64>>,
    pub meta_decision_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSample {
    pub id: String,
    pub behavior: Option<Behavior>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Versioned, deterministic evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub planner: String,
    pub profile: PlanningProfile,
    pub seed: u64,
    pub horizons_s: Vec<f64>,
    pub divisor: BadeDivisor,
    pub counts: SampleCounts,
    pub horizons: Vec<HorizonRow>,
    pub behaviors: Vec<BehaviorRow>,
    pub absent_behaviors: Vec<Behavior>,
    pub meta_decision_accuracy: Option<f64>,
    pub failures: Vec<FailedSample>,
    pub invariants: Vec<InvariantCheck>,
    /// Echo of the run configuration, filled in by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    horizon_s: f64,
    metric: &'a str,
    behavior: &'a str,
    count: usize,
    value: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub(super) fn from_outcomes(
        corpus: &[Scenario],
        outcomes: &[SampleOutcome],
        planner: &dyn Planner,
        opts: &EvalOptions,
    ) -> Self {
        let nh = opts.horizons_s.len();
        let mut failures = Vec::new();
        let mut scored: Vec<(Behavior, &[f64])> = Vec::new();
        let mut dropped = 0;
        let (mut correct, mut total_decisions) = ([0usize; 7], [0usize; 7]);
        let mut failed_by_behavior = [0usize; 7];
        for (s, o) in corpus.iter().zip(outcomes) {
            match o {
                SampleOutcome::Scored { behavior, ade, decisions_correct, decisions_total, dropped: d } => {
                    scored.push((*behavior, ade));
                    correct[behavior.index()] += decisions_correct;
                    total_decisions[behavior.index()] += decisions_total;
                    dropped += d;
                }
                SampleOutcome::Failed { behavior, error } => {
                    if let Some(b) = behavior {
                        failed_by_behavior[b.index()] += 1;
                    }
                    failures.push(FailedSample { id: s.id.clone(), behavior: *behavior, error: error.clone() });
                }
            }
        }

        let horizons: Vec<HorizonRow> = (0..nh)
            .map(|h| {
                let samples: Vec<(f64, Behavior)> = scored.iter().map(|(b, a)| (a[h], *b)).collect();
                let ades: Vec<f64> = samples.iter().map(|s| s.0).collect();
                HorizonRow {
                    horizon_s: opts.horizons_s[h],
                    ade: mean(&ades),
                    bade: bade(&samples, opts.divisor).ok().map(|s| s.value),
                }
            })
            .collect();
        let behaviors: Vec<BehaviorRow> = Behavior::ALL
            .iter()
            .map(|&b| {
                let rows: Vec<&[f64]> = scored.iter().filter(|s| s.0 == b).map(|s| s.1).collect();
                BehaviorRow {
                    behavior: b,
                    count: rows.len(),
                    failed: failed_by_behavior[b.index()],
                    ade: (0..nh).map(|h| mean(&rows.iter().map(|r| r[h]).collect::<Vec<_>>())).collect(),
                    meta_decision_accuracy: ratio(correct[b.index()], total_decisions[b.index()]),
                }
            })
            .collect();

        let mut report = Self {
            schema_version: REPORT_SCHEMA_VERSION,
            planner: planner.name().to_string(),
            profile: *planner.profile(),
            seed: opts.seed,
            horizons_s: opts.horizons_s.clone(),
            divisor: opts.divisor,
            counts: SampleCounts {
                total: corpus.len(),
                scored: scored.len(),
                failed: failures.len(),
                dropped_candidates: dropped,
            },
            absent_behaviors: behaviors.iter().filter(|r| r.count == 0).map(|r| r.behavior).collect(),
            meta_decision_accuracy: ratio(correct.iter().sum(), total_decisions.iter().sum()),
            horizons,
            behaviors,
            failures,
            invariants: Vec::new(),
            config: None,
        };
        report.invariants = report.self_check();
        report
    }

    /// Consistency checks recorded in the report itself.
    pub fn self_check(&self) -> Vec<InvariantCheck> {
        let mut checks = Vec::new();
        let per_behavior: usize = self.behaviors.iter().map(|r| r.count).sum();
        checks.push(InvariantCheck {
            name: "counts_sum_to_corpus".into(),
            passed: per_behavior + self.counts.failed == self.counts.total && self.counts.scored == per_behavior,
            detail: format!("{per_behavior} scored + {} failed of {}", self.counts.failed, self.counts.total),
        });
        let values = self
            .horizons
            .iter()
            .flat_map(|h| [h.ade, h.bade])
            .chain(self.behaviors.iter().flat_map(|r| r.ade.iter().copied()))
            .flatten();
        let bad = values.filter(|v| !(v.is_finite() && *v >= 0.0)).count();
        checks.push(InvariantCheck {
            name: "metrics_finite_nonnegative".into(),
            passed: bad == 0,
            detail: format!("{bad} offending values"),
        });
        let present = self.behaviors.iter().filter(|r| r.count > 0).count();
        if present == 1 && self.divisor == BadeDivisor::Present {
            let ok = self.horizons.iter().all(|h| match (h.ade, h.bade) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                _ => false,
            });
            checks.push(InvariantCheck {
                name: "single_behavior_bade_equals_ade".into(),
                passed: ok,
                detail: String::new(),
            });
        }
        checks.push(InvariantCheck {
            name: "absent_behaviors_listed".into(),
            passed: self.absent_behaviors.len() + present == Behavior::ALL.len(),
            detail: format!("{} absent", self.absent_behaviors.len()),
        });
        checks
    }

    pub fn invariants_hold(&self) -> bool {
        self.invariants.iter().all(|c| c.passed)
    }

    pub fn horizon(&self, horizon_s: f64) -> Option<&HorizonRow> {
        self.horizons.iter().find(|h| (h.horizon_s - horizon_s).abs() < 1e-9)
    }

    pub fn behavior(&self, b: Behavior) -> &BehaviorRow {
        &self.behaviors[b.index()]
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per (horizon, metric, behavior), long format.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (h, row) in self.horizons.iter().enumerate() {
            for (metric, value) in [("ade", row.ade), ("bade", row.bade)] {
                w.serialize(CsvRow {
                    horizon_s: row.horizon_s,
                    metric,
                    behavior: "all",
                    count: self.counts.scored,
                    value,
                })?;
            }
            for b in &self.behaviors {
                w.serialize(CsvRow {
                    horizon_s: row.horizon_s,
                    metric: "ade",
                    behavior: b.behavior.as_str(),
                    count: b.count,
                    value: b.ade[h],
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
