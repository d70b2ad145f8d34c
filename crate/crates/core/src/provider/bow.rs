//! Bag-of-words softmax regression: `logits = b + mean_t W[token_t]`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    MaskStrategy, ModelInput, ProbabilityDistribution, ProbabilityProvider, ProviderError, Result,
};
use crate::corpus::Dataset;
use crate::neural::train::model_input;
use crate::neural::Vocab;
use crate::num::{softmax, Real};

pub const BOW_FORMAT: &str = "rationale-bag-of-words";
pub const BOW_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BagOfWords<T> {
    pub format: String,
    pub version: u32,
    pub vocab: Vocab,
    pub num_classes: usize,
    /// `vocab × num_classes`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    #[serde(default)]
    pub mask_strategy: MaskStrategy,
    /// Row used for the mask symbol under [`MaskStrategy::RandomVector`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_row: Option<Vec<T>>,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowConfig<T> {
    pub learning_rate: T,
    pub epochs: usize,
    pub seed: u64,
}

impl<T: Real> Default for BowConfig<T> {
    fn default() -> Self {
        BowConfig {
            learning_rate: T::lit(1.0),
            epochs: 10,
            seed: 0,
        }
    }
}

impl<T: Real> BagOfWords<T> {
    /// All-zero parameters: predicts the uniform distribution.
    pub fn untrained(vocab: Vocab, num_classes: usize) -> Self {
        let v = vocab.len();
        BagOfWords {
            format: BOW_FORMAT.into(),
            version: BOW_VERSION,
            vocab,
            num_classes,
            weights: vec![T::zero(); v * num_classes],
            bias: vec![T::zero(); num_classes],
            mask_strategy: MaskStrategy::ReservedSymbol,
            mask_row: None,
            name: "bow".into(),
        }
    }

    /// Sets the masking strategy; a random row is drawn once from `seed`.
    pub fn with_mask_strategy(mut self, strategy: MaskStrategy, seed: u64) -> Self {
        self.mask_strategy = strategy;
        self.mask_row = match strategy {
            MaskStrategy::ReservedSymbol => None,
            MaskStrategy::RandomVector => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Some(
                    (0..self.num_classes)
                        .map(|_| T::lit(rng.gen_range(-0.5..=0.5)))
                        .collect(),
                )
            }
        };
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn row(&self, id: usize) -> &[T] {
        if id == Vocab::MASK {
            if let Some(r) = &self.mask_row {
                return r;
            }
        }
        &self.weights[id * self.num_classes..(id + 1) * self.num_classes]
    }

    pub fn logits<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<T> {
        let n = T::from_usize_lossy(tokens.len());
        let mut logits = self.bias.clone();
        for t in tokens {
            for (l, &w) in logits.iter_mut().zip(self.row(self.vocab.id(t.as_ref()))) {
                *l += w / n;
            }
        }
        logits
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| ProviderError::Config(e.to_string()))?;
        fs::write(path, json).map_err(|e| ProviderError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ProviderError::Config(e.to_string()))?;
        let model: Self =
            serde_json::from_str(&text).map_err(|e| ProviderError::Config(e.to_string()))?;
        if model.format != BOW_FORMAT || model.version != BOW_VERSION {
            return Err(ProviderError::Config(format!(
                "unsupported parameter file {} v{}",
                model.format, model.version
            )));
        }
        if model.weights.len() != model.vocab.len() * model.num_classes
            || model.bias.len() != model.num_classes
        {
            return Err(ProviderError::Config(
                "parameter shapes do not match vocabulary".into(),
            ));
        }
        Ok(model)
    }
}

/// Per-instance SGD on cross-entropy, instances shuffled by `seed`.
pub fn train_bow<T: Real>(dataset: &Dataset, config: &BowConfig<T>) -> BagOfWords<T> {
    let vocab = Vocab::from_tokens(dataset.instances.iter().flat_map(|i| i.tokens.iter()));
    let mut model = BagOfWords::untrained(vocab, dataset.num_classes);
    let c = model.num_classes;
    let encoded: Vec<(Vec<usize>, usize)> = dataset
        .instances
        .iter()
        .map(|inst| {
            let (tokens, _) = model_input(inst);
            (
                tokens.iter().map(|t| model.vocab.id(t)).collect(),
                inst.label,
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (ids, label) = &encoded[i];
            let n = T::from_usize_lossy(ids.len());
            let mut logits = model.bias.clone();
            for &id in ids {
                for k in 0..c {
                    logits[k] += model.weights[id * c + k] / n;
                }
            }
            let mut grad = softmax(&logits);
            grad[*label] -= T::one();
            for k in 0..c {
                let g = config.learning_rate * grad[k];
                model.bias[k] -= g;
                for &id in ids {
                    model.weights[id * c + k] -= g / n;
                }
            }
        }
    }
    model.name = dataset.name.clone();
    model
}

impl<T: Real> ProbabilityProvider<T> for BagOfWords<T> {
    fn id(&self) -> String {
        format!("{}:toy_bow:{}", self.name, self.mask_strategy)
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, input: &ModelInput) -> Result<ProbabilityDistribution<T>> {
        if input.tokens.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let tokens: Vec<&str> = match input.segments() {
            (a, Some(b)) if !a.is_empty() && !b.is_empty() => a
                .iter()
                .map(String::as_str)
                .chain(std::iter::once(Vocab::SEP_TOKEN))
                .chain(b.iter().map(String::as_str))
                .collect(),
            _ => input.tokens.iter().map(String::as_str).collect(),
        };
        ProbabilityDistribution::new(softmax(&self.logits(&tokens)))
    }
}
