//! Run configuration shared by the CLI and the examples, loadable from
//! TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::metrics::{BadeDivisor, EvalOptions, SynthConfig};
use crate::planner::{OraclePlanner, Planner, PlannerError, ToyPlanner, ToyPlannerConfig};
use crate::scenario::PlanningProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {0}: {1}")]
    Parse(PathBuf, String),
    #[error("unknown config extension for {0} (expected .toml or .json)")]
    Extension(PathBuf),
    #[error("unknown planning profile `{0}`")]
    UnknownProfile(String),
    #[error("unknown planner `{0}` (expected toy, oracle, oracle_offset or oracle_noisy)")]
    UnknownPlanner(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// A profile given either by name or spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(String),
    Custom(PlanningProfile),
}

impl ProfileSpec {
    pub fn resolve(&self) -> Result<PlanningProfile, ConfigError> {
        match self {
            Self::Named(n) => PlanningProfile::by_name(n).ok_or_else(|| ConfigError::UnknownProfile(n.clone())),
            Self::Custom(p) => Ok(*p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub offset: [f64; 2],
    pub noise_sigma: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { offset: [1.0, 0.0], noise_sigma: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: ProfileSpec,
    pub seed: u64,
    pub horizons_s: Vec<f64>,
    pub strict_divisor_7: bool,
    /// Toy planner weights; freshly initialized from `toy.param_seed` when unset.
    pub checkpoint: Option<PathBuf>,
    pub oracle: OracleConfig,
    pub toy: ToyPlannerConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: ProfileSpec::Named("womd".into()),
            seed: 0,
            horizons_s: vec![1.0, 3.0, 5.0],
            strict_divisor_7: false,
            checkpoint: None,
            oracle: OracleConfig::default(),
            toy: ToyPlannerConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

pub const PLANNERS: [&str; 4] = ["toy", "oracle", "oracle_offset", "oracle_noisy"];

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn from_json_str(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Format is picked from the extension.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let parse_err = |e: String| ConfigError::Parse(path.to_path_buf(), e);
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text).map_err(|e| parse_err(e.to_string())),
            Some("json") => Self::from_json_str(&text).map_err(|e| parse_err(e.to_string())),
            _ => Err(ConfigError::Extension(path.to_path_buf())),
        }
    }

    pub fn planning_profile(&self) -> Result<PlanningProfile, ConfigError> {
        self.profile.resolve()
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            horizons_s: self.horizons_s.clone(),
            seed: self.seed,
            divisor: if self.strict_divisor_7 { BadeDivisor::Strict7 } else { BadeDivisor::Present },
        }
    }

    pub fn toy_planner(&self) -> Result<ToyPlanner, ConfigError> {
        let profile = self.planning_profile()?;
        Ok(match &self.checkpoint {
            Some(path) => ToyPlanner::from_checkpoint(self.toy.clone(), profile, &Checkpoint::load(path)?)?,
            None => ToyPlanner::new(self.toy.clone(), profile)?,
        })
    }

    pub fn build_planner(&self, name: &str) -> Result<Box<dyn Planner>, ConfigError> {
        let profile = self.planning_profile()?;
        Ok(match name {
            "toy" => Box::new(self.toy_planner()?),
            "oracle" => Box::new(OraclePlanner::exact(profile)),
            "oracle_offset" => Box::new(OraclePlanner::offset(profile, self.oracle.offset)),
            "oracle_noisy" => Box::new(OraclePlanner::noisy(profile, self.oracle.noise_sigma)),
            other => return Err(ConfigError::UnknownPlanner(other.to_string())),
        })
    }
}
