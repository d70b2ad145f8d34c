//! Versioned JSON parameter files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttentionClassifier, NeuralError, Result};
use crate::num::Real;

pub const CHECKPOINT_FORMAT: &str = "rationale-attention-classifier";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub model: AttentionClassifier<T>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(model: AttentionClassifier<T>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model,
        }
    }

    /// Checks the header and tensor shapes against `vocab`, `dim` and `num_classes`.
    pub fn into_model(self) -> Result<AttentionClassifier<T>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NeuralError::Checkpoint(format!(
                "unknown format {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let m = self.model;
        let (v, d, c) = (m.vocab.len(), m.dim, m.num_classes);
        let expected = [v * d, d * d, d, d, c * d, c, 2 * d, 2];
        for ((name, tensor), want) in super::ParamTensors::<T>::NAMES
            .iter()
            .zip(m.params.tensors())
            .zip(expected)
        {
            if tensor.len() != want {
                return Err(NeuralError::Checkpoint(format!(
                    "{name} has {} values, expected {want}",
                    tensor.len()
                )));
            }
        }
        if d < 2 || !m.params.is_finite() {
            return Err(NeuralError::Checkpoint(
                "degenerate or non-finite parameters".into(),
            ));
        }
        Ok(m)
    }
}

pub fn save_checkpoint<T: Real>(
    model: &AttentionClassifier<T>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::new(model.clone()))
        .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<AttentionClassifier<T>> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint<T> =
        serde_json::from_str(&text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    ckpt.into_model()
}
