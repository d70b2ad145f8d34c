//! Predictions on dataset instances.

use super::train::model_input;
use super::{AttentionClassifier, Result, Vocab};
use crate::corpus::{Dataset, Instance};
use crate::num::Real;

impl<T: Real> AttentionClassifier<T> {
    /// Predicted class for an instance.
    pub fn predict_class(&self, inst: &Instance) -> Result<usize> {
        let (tokens, _) = model_input(inst);
        Ok(self.forward(&tokens)?.predicted_class())
    }

    /// Predicted rationale mask aligned with `inst.tokens` (the separator
    /// position of paired inputs is dropped).
    pub fn predict_rationale(&self, inst: &Instance) -> Result<Vec<u8>> {
        let (tokens, _) = model_input(inst);
        let preds = self.forward(&tokens)?.token_predictions();
        Ok(tokens
            .iter()
            .zip(preds)
            .enumerate()
            .filter(|(i, (t, _))| {
                !(Some(*i) == inst.segment_boundary && t.as_str() == Vocab::SEP_TOKEN)
            })
            .map(|(_, (_, p))| p)
            .collect())
    }

    pub fn predict_classes(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        dataset
            .instances
            .iter()
            .map(|i| self.predict_class(i))
            .collect()
    }

    pub fn predict_rationales(&self, dataset: &Dataset) -> Result<Vec<Vec<u8>>> {
        dataset
            .instances
            .iter()
            .map(|i| self.predict_rationale(i))
            .collect()
    }
}
