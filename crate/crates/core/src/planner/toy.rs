use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::{rollout, ManeuverGeometry};
use super::{
    aggregate_candidates, aggregate_weighted, argmax, nucleus_sample, softmax, CandidateSet, PlanOutput, Planner,
    PlannerError,
};
use crate::attention::{BiasedEncoder, EncoderConfig, TokenLayout};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::nn::Linear;
use crate::scenario::codec::{decode_plan, encode_target, quantize, TargetFormat};
use crate::scenario::{BehaviorCommand, EgoStateHistory, MetaDecision, PlanningProfile, Scenario};
use crate::volume::{build_sparse_tokens, LiftConfig, LiftParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    LikelihoodWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Candidates per scenario.
    pub k: usize,
    pub top_p: f64,
    pub temperature: f64,
    /// Take the most likely token everywhere and emit a single candidate.
    pub greedy: bool,
    pub aggregation: Aggregation,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { k: 16, top_p: 0.9, temperature: 1.0, greedy: false, aggregation: Aggregation::Mean }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.k == 0 {
            return Err(PlannerError::ZeroCandidates);
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(PlannerError::InvalidTopP(self.top_p));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(PlannerError::Config(format!("temperature {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyPlannerConfig {
    pub lift: LiftConfig,
    pub encoder: EncoderConfig,
    pub sampling: SamplingConfig,
    pub geometry: ManeuverGeometry,
    /// Seed of the randomly initialized weights.
    pub param_seed: u64,
    /// Bound of the uniform init of the decision and offset heads, so the
    /// network nudges rather than overrides the kinematic prior.
    pub head_scale: f64,
    /// Logit added to the kinematic prior's preferred decision.
    pub prior_gain: f64,
    /// Logit added to `keep_stationary` in every stage.
    pub stationary_bias: f64,
    /// History speed below which the prior favours standing still.
    pub stationary_speed_mps: f64,
    pub accel_mps2: f64,
    pub brake_mps2: f64,
    /// Acceleration corrections selectable per stage.
    pub accel_offsets: Vec<f64>,
    /// Width of the Gaussian prior over `accel_offsets`.
    pub offset_sigma: f64,
    /// Probability that a sample's text is garbled before decoding.
    pub corrupt_prob: f64,
}

impl Default for ToyPlannerConfig {
    fn default() -> Self {
        Self {
            lift: LiftConfig::desk(),
            encoder: EncoderConfig::default(),
            sampling: SamplingConfig::default(),
            geometry: ManeuverGeometry::default(),
            param_seed: 0,
            head_scale: 0.05,
            prior_gain: 3.0,
            stationary_bias: 0.0,
            stationary_speed_mps: 1.0,
            accel_mps2: 1.0,
            brake_mps2: 3.0,
            accel_offsets: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            offset_sigma: 0.5,
            corrupt_prob: 0.0,
        }
    }
}

const HISTORY_FEATURES: usize = 6;
const DECISIONS: usize = 4;

/// Stand-in for the language model: lifts the scene into sparse voxel
/// tokens, encodes them together with history and command tokens, and
/// decodes per-stage meta-decisions plus acceleration corrections that
/// drive a kinematic rollout. Every sample goes through the text codec.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPlanner {
    pub config: ToyPlannerConfig,
    profile: PlanningProfile,
    pub lift: LiftParams,
    pub encoder: BiasedEncoder,
    pub visual_proj: Linear,
    pub history_proj: Linear,
    pub command_embed: Linear,
    pub decision_head: Linear,
    pub offset_head: Linear,
}

/// Per-stage token distributions from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDistributions {
    pub decisions: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
}

struct Sample {
    decisions: Vec<MetaDecision>,
    accels: Vec<f64>,
    log_likelihood: f64,
}

fn speed_and_accel(history: &EgoStateHistory) -> (f64, f64) {
    let s = history.latest();
    let dt = 1.0 / history.frequency_hz();
    let v = [s.velocity[0] + s.acceleration[0] * dt, s.velocity[1] + s.acceleration[1] * dt];
    let speed = v[0].hypot(v[1]);
    // Acceleration along the direction of travel.
    let along = if speed > 1e-9 { (s.acceleration[0] * v[0] + s.acceleration[1] * v[1]) / speed } else { 0.0 };
    (speed, along)
}

impl ToyPlanner {
    pub fn new(config: ToyPlannerConfig, profile: PlanningProfile) -> Result<Self, PlannerError> {
        config.sampling.validate()?;
        if config.accel_offsets.is_empty() {
            return Err(PlannerError::Config("accel_offsets is empty".into()));
        }
        if config.encoder.heads == 0 || !config.encoder.dim.is_multiple_of(config.encoder.heads) {
            return Err(PlannerError::Config("encoder dim must be a multiple of heads".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.param_seed);
        let d = config.encoder.dim;
        let stages = profile.decision_stages;
        let lift = LiftParams::init(&config.lift, &mut rng);
        let encoder = BiasedEncoder::init(config.encoder.clone(), &mut rng);
        Ok(Self {
            visual_proj: Linear::random(config.lift.channels, d, &mut rng),
            history_proj: Linear::random(HISTORY_FEATURES, d, &mut rng),
            command_embed: Linear::random(BehaviorCommand::ALL.len(), d, &mut rng),
            decision_head: Linear::random_scaled(d, DECISIONS * stages, config.head_scale, &mut rng),
            offset_head: Linear::random_scaled(d, config.accel_offsets.len() * stages, config.head_scale, &mut rng),
            lift,
            encoder,
            profile,
            config,
        })
    }

    /// Same architecture with weights taken from a checkpoint.
    pub fn from_checkpoint(
        config: ToyPlannerConfig,
        profile: PlanningProfile,
        ckpt: &Checkpoint,
    ) -> Result<Self, CheckpointError> {
        let mut p = Self::new(config.clone(), profile).map_err(|e| CheckpointError::Shape(e.to_string()))?;
        p.lift = LiftParams::import("planner.lift", ckpt)?;
        p.encoder = BiasedEncoder::import("planner.encoder", config.encoder, ckpt)?;
        p.visual_proj = Linear::import("planner.visual_proj", ckpt)?;
        p.history_proj = Linear::import("planner.history_proj", ckpt)?;
        p.command_embed = Linear::import("planner.command_embed", ckpt)?;
        p.decision_head = Linear::import("planner.decision_head", ckpt)?;
        p.offset_head = Linear::import("planner.offset_head", ckpt)?;
        let fresh = Self::new(p.config.clone(), profile).map_err(|e| CheckpointError::Shape(e.to_string()))?;
        let shapes_match = p.lift.channels() == fresh.lift.channels()
            && p.lift.frames() == fresh.lift.frames()
            && p.visual_proj.in_dim() == fresh.visual_proj.in_dim()
            && p.decision_head.out_dim() == fresh.decision_head.out_dim()
            && p.offset_head.out_dim() == fresh.offset_head.out_dim();
        if !shapes_match {
            return Err(CheckpointError::Shape("planner".into()));
        }
        Ok(p)
    }

    pub fn export(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        self.lift.export("planner.lift", &mut ckpt);
        self.encoder.export("planner.encoder", &mut ckpt);
        self.visual_proj.export("planner.visual_proj", &mut ckpt);
        self.history_proj.export("planner.history_proj", &mut ckpt);
        self.command_embed.export("planner.command_embed", &mut ckpt);
        self.decision_head.export("planner.decision_head", &mut ckpt);
        self.offset_head.export("planner.offset_head", &mut ckpt);
        ckpt
    }

    /// Stage-1 and stage-2 token distributions for a scenario.
    pub fn distributions(&self, scenario: &Scenario) -> Result<StageDistributions, PlannerError> {
        let frames = scenario.frame_features()?;
        let sparse =
            build_sparse_tokens(&frames, &scenario.rig, &self.config.lift.grid, &self.lift, self.config.lift.top_m)?;
        let d = self.config.encoder.dim;
        let mut tokens = Vec::with_capacity((sparse.len() + scenario.history.len() + 1) * d);
        for i in 0..sparse.len() {
            tokens.extend(self.visual_proj.forward(sparse.feature(i)));
        }
        for s in scenario.history.steps() {
            let x: Vec<f64> = [s.position, s.velocity, s.acceleration].iter().flatten().map(|v| quantize(*v)).collect();
            tokens.extend(self.history_proj.forward(&x));
        }
        let mut one_hot = vec![0.0; BehaviorCommand::ALL.len()];
        one_hot[scenario.command.index()] = 1.0;
        tokens.extend(self.command_embed.forward(&one_hot));

        let text = scenario.history.len() + 1;
        let layout =
            TokenLayout { visual_coords: sparse.coords.clone(), text_positions: (0..text).map(|p| p as f64).collect() };
        let encoded = self.encoder.forward(&tokens, &layout);
        let n = layout.len() as f64;
        let mut pooled = vec![0.0; d];
        for row in encoded.chunks_exact(d) {
            for (p, x) in pooled.iter_mut().zip(row) {
                *p += x / n;
            }
        }

        let stages = self.profile.decision_stages;
        let (speed, accel) = speed_and_accel(&scenario.history);
        let preferred = if speed < self.config.stationary_speed_mps {
            MetaDecision::KeepStationary
        } else if accel > 0.5 {
            MetaDecision::Accelerate
        } else if accel < -0.5 {
            MetaDecision::Decelerate
        } else {
            MetaDecision::KeepSpeed
        };
        let t = self.config.sampling.temperature;
        let dec_logits = self.decision_head.forward(&pooled);
        let off_logits = self.offset_head.forward(&pooled);
        let n_off = self.config.accel_offsets.len();
        let sigma = self.config.offset_sigma.max(1e-6);
        let mut decisions = Vec::with_capacity(stages);
        let mut offsets = Vec::with_capacity(stages);
        for s in 0..stages {
            let mut l = dec_logits[s * DECISIONS..(s + 1) * DECISIONS].to_vec();
            l[preferred.index()] += self.config.prior_gain;
            l[MetaDecision::KeepStationary.index()] += self.config.stationary_bias;
            decisions.push(softmax(&l, t));
            let l: Vec<f64> = off_logits[s * n_off..(s + 1) * n_off]
                .iter()
                .zip(&self.config.accel_offsets)
                .map(|(x, o)| x - 0.5 * (o / sigma).powi(2))
                .collect();
            offsets.push(softmax(&l, t));
        }
        Ok(StageDistributions { decisions, offsets })
    }

    fn draw<R: Rng + ?Sized>(&self, dist: &[f64], rng: &mut R) -> Result<usize, PlannerError> {
        if self.config.sampling.greedy {
            Ok(argmax(dist))
        } else {
            nucleus_sample(dist, self.config.sampling.top_p, rng)
        }
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        dists: &StageDistributions,
        speed0: f64,
        rng: &mut R,
    ) -> Result<Sample, PlannerError> {
        let dt = self.profile.dt();
        let mut decisions = Vec::new();
        let mut accels = vec![0.0; self.profile.waypoint_count()];
        let mut log_likelihood = 0.0;
        let mut v = speed0;
        for (s, range) in self.profile.stage_ranges().into_iter().enumerate() {
            let di = self.draw(&dists.decisions[s], rng)?;
            let oi = self.draw(&dists.offsets[s], rng)?;
            log_likelihood += dists.decisions[s][di].ln();
            let decision = MetaDecision::ALL[di];
            decisions.push(decision);
            let offset = self.config.accel_offsets[oi];
            if decision != MetaDecision::KeepStationary {
                log_likelihood += dists.offsets[s][oi].ln();
            }
            for a in &mut accels[range] {
                *a = match decision {
                    // Brake to a standstill without reversing.
                    MetaDecision::KeepStationary => -(v / dt).min(self.config.brake_mps2),
                    MetaDecision::KeepSpeed => offset,
                    MetaDecision::Accelerate => self.config.accel_mps2 + offset,
                    MetaDecision::Decelerate => -self.config.accel_mps2 + offset,
                };
                v = (v + *a * dt).max(0.0);
            }
        }
        Ok(Sample { decisions, accels, log_likelihood })
    }

    fn corrupt<R: Rng + ?Sized>(text: String, rng: &mut R) -> String {
        match rng.random_range(0..3) {
            0 => text.replacen("(", "(abc", 1),
            1 => match text.rfind(';') {
                Some(i) => text[..i].to_string(),
                None => text,
            },
            _ => text.replacen("decision[0]: ", "decision[0]: hover", 1),
        }
    }
}

/// Most frequent value per stage; ties go to the lower decision index.
fn majority(samples: &[Vec<MetaDecision>], stages: usize) -> Vec<MetaDecision> {
    (0..stages)
        .map(|s| {
            let mut counts = [0usize; DECISIONS];
            for d in samples {
                counts[d[s].index()] += 1;
            }
            let best = (0..DECISIONS).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
            MetaDecision::ALL[best]
        })
        .collect()
}

impl Planner for ToyPlanner {
    fn name(&self) -> &str {
        "toy"
    }

    fn profile(&self) -> &PlanningProfile {
        &self.profile
    }

    fn plan(&self, scenario: &Scenario, seed: u64) -> Result<PlanOutput, PlannerError> {
        let dists = self.distributions(scenario)?;
        let (speed0, _) = speed_and_accel(&scenario.history);
        let (maneuver, radius) = self.config.geometry.for_command(scenario.command);
        let format = TargetFormat::from(&self.profile);
        let k = if self.config.sampling.greedy { 1 } else { self.config.sampling.k };

        let mut trajectories = Vec::with_capacity(k);
        let mut log_likelihoods = Vec::with_capacity(k);
        let mut decided = Vec::with_capacity(k);
        for c in 0..k {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let sample = self.sample(&dists, speed0, &mut rng)?;
            let path = rollout(speed0, maneuver, radius, &sample.accels, self.profile.dt());
            let traj = crate::scenario::PlanTrajectory::new(path, self.profile.frequency_hz)?;
            let mut text =
                encode_target(&sample.decisions, &traj, &format).map_err(|e| PlannerError::Config(e.to_string()))?;
            if self.config.corrupt_prob > 0.0 && rng.random::<f64>() < self.config.corrupt_prob {
                text = Self::corrupt(text, &mut rng);
            }
            if let Ok((decisions, decoded)) = decode_plan(&text, &format) {
                trajectories.push(decoded);
                log_likelihoods.push(sample.log_likelihood);
                decided.push(decisions);
            }
        }
        if trajectories.is_empty() {
            return Err(PlannerError::AllCandidatesDropped(k));
        }
        let dropped = k - trajectories.len();
        let candidates = CandidateSet::new(trajectories, log_likelihoods)?;
        let trajectory = match self.config.sampling.aggregation {
            Aggregation::Mean => aggregate_candidates(&candidates)?,
            Aggregation::LikelihoodWeighted => aggregate_weighted(&candidates)?,
        };
        Ok(PlanOutput { decisions: majority(&decided, self.profile.decision_stages), candidates, trajectory, dropped })
    }
}
