//! Named-tensor parameter checkpoints stored as JSON.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "voxplan-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("missing tensor `{0}`")]
    Missing(String),
    #[error("tensor `{0}` has an unexpected shape")]
    Shape(String),
    #[error("unsupported checkpoint format `{0}` v{1}")]
    Format(String, u32),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    tensors: BTreeMap<String, Tensor>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self { format: FORMAT.to_string(), version: VERSION, tensors: BTreeMap::new() }
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: String, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}");
        self.tensors.insert(name, Tensor { shape, data });
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f64]), CheckpointError> {
        let t = self.tensors.get(name).ok_or_else(|| CheckpointError::Missing(name.to_string()))?;
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(CheckpointError::Shape(name.to_string()));
        }
        Ok((&t.shape, &t.data))
    }

    pub fn get_shaped(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>, CheckpointError> {
        let (s, d) = self.get(name)?;
        if s != shape {
            return Err(CheckpointError::Shape(name.to_string()));
        }
        Ok(d.to_vec())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let c: Checkpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(CheckpointError::Format(c.format, c.version));
        }
        Ok(c)
    }
}
