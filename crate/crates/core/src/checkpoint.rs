//! Shared checkpoint format: a versioned JSON map from parameter-path
//! strings to shape + row-major values. Used by the detector, predictor,
//! pose basis, and the VAE baseline.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: BTreeMap<String, CheckpointEntry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self { version: CHECKPOINT_VERSION, params: BTreeMap::new() }
    }

    pub fn insert(&mut self, path: &str, tensor: &Tensor) {
        self.params.insert(
            path.to_string(),
            CheckpointEntry { shape: tensor.shape().to_vec(), values: tensor.values().to_vec() },
        );
    }

    pub fn get(&self, path: &str) -> Result<Tensor> {
        let entry = self.params.get(path).ok_or_else(|| CoreError::Checkpoint {
            reason: format!("missing parameter {path:?}"),
        })?;
        Tensor::new(entry.shape.clone(), entry.values.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&data)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CoreError::SchemaVersion {
                expected: CHECKPOINT_VERSION,
                found: ckpt.version,
            });
        }
        Ok(ckpt)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self::new()
    }
}
