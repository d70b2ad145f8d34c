use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    MaskStrategy, ModelInput, ProbabilityDistribution, ProbabilityProvider, ProviderError, Result,
};
use crate::neural::{AttentionClassifier, Vocab};
use crate::num::Real;

/// The attention classifier as a probability provider.
#[derive(Debug, Clone)]
pub struct AttentionProvider<T> {
    name: String,
    model: AttentionClassifier<T>,
    strategy: MaskStrategy,
    /// Fixed vector used for the mask symbol under [`MaskStrategy::RandomVector`].
    mask_vector: Option<Vec<T>>,
}

impl<T: Real> AttentionProvider<T> {
    pub fn new(
        name: impl Into<String>,
        model: AttentionClassifier<T>,
        strategy: MaskStrategy,
        seed: u64,
    ) -> Self {
        let mask_vector = match strategy {
            MaskStrategy::ReservedSymbol => None,
            MaskStrategy::RandomVector => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Some(
                    (0..model.dim)
                        .map(|_| T::lit(rng.gen_range(-0.5..=0.5)))
                        .collect(),
                )
            }
        };
        AttentionProvider {
            name: name.into(),
            model,
            strategy,
            mask_vector,
        }
    }

    pub fn model(&self) -> &AttentionClassifier<T> {
        &self.model
    }

    pub fn strategy(&self) -> MaskStrategy {
        self.strategy
    }
}

fn with_separator(input: &ModelInput) -> Vec<String> {
    match input.segments() {
        (a, Some(b)) if !a.is_empty() && !b.is_empty() => a
            .iter()
            .cloned()
            .chain(std::iter::once(Vocab::SEP_TOKEN.to_string()))
            .chain(b.iter().cloned())
            .collect(),
        _ => input.tokens.clone(),
    }
}

impl<T: Real> ProbabilityProvider<T> for AttentionProvider<T> {
    fn id(&self) -> String {
        format!("{}:toy_attention:{}", self.name, self.strategy)
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes
    }

    fn predict(&self, input: &ModelInput) -> Result<ProbabilityDistribution<T>> {
        if input.tokens.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let tokens = with_separator(input);
        let out = match &self.mask_vector {
            Some(v) => self.model.forward_with_mask_vector(&tokens, v)?,
            None => self.model.forward(&tokens)?,
        };
        ProbabilityDistribution::new(out.seq_probs())
    }
}
