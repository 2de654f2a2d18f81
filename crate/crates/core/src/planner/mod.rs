//! Two-stage planning interface, multi-decoding aggregation and a few
//! planners: ground-truth oracles for harness tests and a toy network
//! that exercises the whole lifting and attention stack.

mod template;
mod toy;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::stage_decisions;
use crate::scenario::{MetaDecision, PlanTrajectory, PlanningProfile, Scenario, ScenarioError};
use crate::volume::VolumeError;

pub use template::{rollout, Maneuver, ManeuverGeometry};
pub use toy::{Aggregation, SamplingConfig, ToyPlanner, ToyPlannerConfig};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("probabilities must be finite, non-negative and sum to 1 (sum {0})")]
    InvalidDistribution(f64),
    #[error("top-p must lie in (0, 1], got {0}")]
    InvalidTopP(f64),
    #[error("candidate count must be at least 1")]
    ZeroCandidates,
    #[error("no candidates to aggregate")]
    EmptyCandidates,
    #[error("candidates disagree in length or frequency")]
    HorizonMismatch,
    #[error("every one of the {0} sampled candidates failed to decode")]
    AllCandidatesDropped(usize),
    #[error("ground truth shorter than the planning horizon")]
    ShortGroundTruth,
    #[error("planner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

const DIST_SUM_TOL: f64 = 1e-6;
const NUCLEUS_MASS_TOL: f64 = 1e-12;

fn check_dist(dist: &[f64]) -> Result<(), PlannerError> {
    let sum: f64 = dist.iter().sum();
    if dist.is_empty() || dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > DIST_SUM_TOL {
        return Err(PlannerError::InvalidDistribution(sum));
    }
    Ok(())
}

/// Indices kept by top-p truncation, most probable first. Equal
/// probabilities are ordered by ascending index.
pub fn nucleus_support(dist: &[f64], p: f64) -> Result<Vec<usize>, PlannerError> {
    check_dist(dist)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(PlannerError::InvalidTopP(p));
    }
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    let mut keep = 0;
    for &i in &order {
        mass += dist[i];
        keep += 1;
        if mass >= p - NUCLEUS_MASS_TOL {
            break;
        }
    }
    order.truncate(keep);
    Ok(order)
}

/// Draw from the renormalized top-p prefix of `dist`.
pub fn nucleus_sample<R: Rng + ?Sized>(dist: &[f64], p: f64, rng: &mut R) -> Result<usize, PlannerError> {
    let support = nucleus_support(dist, p)?;
    let mass: f64 = support.iter().map(|&i| dist[i]).sum();
    let mut u = rng.random::<f64>() * mass;
    for &i in &support {
        u -= dist[i];
        if u < 0.0 {
            return Ok(i);
        }
    }
    // Rounding left a sliver of mass; fall back to the least probable kept entry.
    Ok(*support.last().expect("support is non-empty"))
}

/// Softmax of `logits / temperature`.
pub fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// K sampled trajectories with the log-likelihood of each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub trajectories: Vec<PlanTrajectory>,
    pub log_likelihoods: Vec<f64>,
}

impl CandidateSet {
    pub fn new(trajectories: Vec<PlanTrajectory>, log_likelihoods: Vec<f64>) -> Result<Self, PlannerError> {
        if trajectories.is_empty() {
            return Err(PlannerError::EmptyCandidates);
        }
        if trajectories.len() != log_likelihoods.len() {
            return Err(PlannerError::HorizonMismatch);
        }
        let first = &trajectories[0];
        if trajectories.iter().any(|t| t.len() != first.len() || t.frequency_hz() != first.frequency_hz()) {
            return Err(PlannerError::HorizonMismatch);
        }
        Ok(Self { trajectories, log_likelihoods })
    }

    /// Candidates with equal (zero) log-likelihood.
    pub fn unscored(trajectories: Vec<PlanTrajectory>) -> Result<Self, PlannerError> {
        let n = trajectories.len();
        Self::new(trajectories, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

fn weighted_mean(cands: &CandidateSet, weights: &[f64]) -> Result<PlanTrajectory, PlannerError> {
    let first = cands.trajectories.first().ok_or(PlannerError::EmptyCandidates)?;
    let mut out = vec![[0.0; 2]; first.len()];
    for (t, w) in cands.trajectories.iter().zip(weights) {
        for (o, p) in out.iter_mut().zip(t.waypoints()) {
            o[0] += w * p[0];
            o[1] += w * p[1];
        }
    }
    Ok(PlanTrajectory::new(out, first.frequency_hz())?)
}

/// Per-timestep unweighted mean of the candidates.
pub fn aggregate_candidates(cands: &CandidateSet) -> Result<PlanTrajectory, PlannerError> {
    let k = cands.len();
    if k == 0 {
        return Err(PlannerError::EmptyCandidates);
    }
    if k == 1 {
        return Ok(cands.trajectories[0].clone());
    }
    let first = &cands.trajectories[0];
    let mut out = vec![[0.0; 2]; first.len()];
    for t in &cands.trajectories {
        for (o, p) in out.iter_mut().zip(t.waypoints()) {
            o[0] += p[0];
            o[1] += p[1];
        }
    }
    for o in &mut out {
        o[0] /= k as f64;
        o[1] /= k as f64;
    }
    Ok(PlanTrajectory::new(out, first.frequency_hz())?)
}

/// Mean weighted by the softmax of the candidates' log-likelihoods.
/// Not used by default; kept for comparison.
pub fn aggregate_weighted(cands: &CandidateSet) -> Result<PlanTrajectory, PlannerError> {
    if cands.is_empty() {
        return Err(PlannerError::EmptyCandidates);
    }
    weighted_mean(cands, &softmax(&cands.log_likelihoods, 1.0))
}

/// Result of planning one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub decisions: Vec<MetaDecision>,
    pub candidates: CandidateSet,
    pub trajectory: PlanTrajectory,
    /// Samples that failed to decode and were dropped.
    pub dropped: usize,
}

pub trait Planner: Sync {
    fn name(&self) -> &str;
    fn profile(&self) -> &PlanningProfile;
    /// Plan one scenario; the output must depend only on `(scenario, seed)`.
    fn plan(&self, scenario: &Scenario, seed: u64) -> Result<PlanOutput, PlannerError>;
}

/// Independent per-item seed derived from a run seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Returns the recorded future, optionally shifted by a constant offset
/// and perturbed with iid Gaussian noise per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlanner {
    name: String,
    profile: PlanningProfile,
    pub offset: [f64; 2],
    pub noise_sigma: f64,
}

impl OraclePlanner {
    pub fn exact(profile: PlanningProfile) -> Self {
        Self::with_noise(profile, [0.0, 0.0], 0.0, "oracle")
    }

    pub fn offset(profile: PlanningProfile, offset: [f64; 2]) -> Self {
        Self::with_noise(profile, offset, 0.0, "oracle_offset")
    }

    pub fn noisy(profile: PlanningProfile, sigma: f64) -> Self {
        Self::with_noise(profile, [0.0, 0.0], sigma, "oracle_noisy")
    }

    fn with_noise(profile: PlanningProfile, offset: [f64; 2], noise_sigma: f64, name: &str) -> Self {
        Self { name: name.to_string(), profile, offset, noise_sigma }
    }
}

impl Planner for OraclePlanner {
    fn name(&self) -> &str {
        &self.name
    }

    fn profile(&self) -> &PlanningProfile {
        &self.profile
    }

    fn plan(&self, scenario: &Scenario, seed: u64) -> Result<PlanOutput, PlannerError> {
        let truth =
            scenario.ground_truth.truncated(self.profile.waypoint_count()).ok_or(PlannerError::ShortGroundTruth)?;
        let decisions = stage_decisions(&truth, &scenario.history, &self.profile);
        let mut traj = truth.translated(self.offset);
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).map_err(|e| PlannerError::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy = traj
                .waypoints()
                .iter()
                .map(|p| [p[0] + normal.sample(&mut rng), p[1] + normal.sample(&mut rng)])
                .collect();
            traj = PlanTrajectory::new(noisy, traj.frequency_hz())?;
        }
        Ok(PlanOutput {
            decisions,
            candidates: CandidateSet::unscored(vec![traj.clone()])?,
            trajectory: traj,
            dropped: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(pts: &[[f64; 2]]) -> PlanTrajectory {
        PlanTrajectory::new(pts.to_vec(), 5.0).unwrap()
    }

    #[test]
    fn midpoint_aggregation() {
        let c = CandidateSet::unscored(vec![traj(&[[0.0, 0.0], [2.0, 2.0]]), traj(&[[2.0, 0.0], [4.0, 2.0]])]).unwrap();
        assert_eq!(aggregate_candidates(&c).unwrap().waypoints(), &[[1.0, 0.0], [3.0, 2.0]]);
        // Equal likelihoods make the weighted mean the plain mean.
        assert_eq!(aggregate_weighted(&c).unwrap().waypoints(), &[[1.0, 0.0], [3.0, 2.0]]);
    }

    #[test]
    fn single_candidate_is_identity() {
        let t = traj(&[[0.1, 0.7], [0.3, -1.1]]);
        let c = CandidateSet::new(vec![t.clone()], vec![-3.0]).unwrap();
        assert_eq!(aggregate_candidates(&c).unwrap(), t);
    }

    #[test]
    fn empty_and_mismatched_sets_are_rejected() {
        assert!(matches!(CandidateSet::unscored(vec![]), Err(PlannerError::EmptyCandidates)));
        assert!(matches!(
            CandidateSet::unscored(vec![traj(&[[0.0, 0.0]]), traj(&[[0.0, 0.0], [1.0, 1.0]])]),
            Err(PlannerError::HorizonMismatch)
        ));
    }

    #[test]
    fn nucleus_prefix_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(nucleus_support(&[0.6, 0.3, 0.1], 0.6).unwrap(), vec![0]);
        assert_eq!(nucleus_support(&[0.6, 0.3, 0.1], 0.9).unwrap(), vec![0, 1]);
        assert_eq!(nucleus_support(&[0.25; 4], 0.5).unwrap(), vec![0, 1]);
        for _ in 0..1000 {
            assert_eq!(nucleus_sample(&[0.6, 0.3, 0.1], 0.6, &mut rng).unwrap(), 0);
            assert_eq!(nucleus_sample(&[0.0, 0.0, 1.0], 0.9, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn nucleus_rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(nucleus_sample(&[0.5, 0.4], 0.9, &mut rng), Err(PlannerError::InvalidDistribution(_))));
        assert!(matches!(nucleus_sample(&[1.0], 0.0, &mut rng), Err(PlannerError::InvalidTopP(_))));
        assert!(nucleus_sample(&[f64::NAN, 1.0], 1.0, &mut rng).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
