//! Probability providers: anything that maps a token sequence to a class
//! distribution. Contextual impact is computed against this trait only.

pub mod attention;
pub mod bow;
pub mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::NeuralError;
use crate::num::Real;

pub use attention::AttentionProvider;
pub use bow::{train_bow, BagOfWords, BowConfig};
pub use remote::RemoteProvider;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty input")]
    EmptyInput,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] NeuralError),
}

pub type Result<T> = std::result::Result<T, ProviderError>;

/// Per-class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ProbabilityDistribution<T> {
    probs: Vec<T>,
}

impl<T: Real> ProbabilityDistribution<T> {
    /// Tolerance on `|Σp − 1|`: 1e-9, or a few ulps for low-precision scalars.
    pub fn tolerance() -> T {
        T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
    }

    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(ProviderError::InvalidDistribution("no classes".into()));
        }
        if let Some(p) = probs
            .iter()
            .find(|p| !(**p >= T::zero() && **p <= T::one()))
        {
            return Err(ProviderError::InvalidDistribution(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > Self::tolerance() {
            return Err(ProviderError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(ProbabilityDistribution { probs })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn prob(&self, class: usize) -> Option<T> {
        self.probs.get(class).copied()
    }

    pub fn argmax(&self) -> usize {
        crate::neural::argmax(&self.probs)
    }
}

/// A pre-tokenised input, optionally a premise/hypothesis pair split at
/// `segment_boundary`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub tokens: Vec<String>,
    pub segment_boundary: Option<usize>,
}

impl ModelInput {
    pub fn single<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        ModelInput {
            tokens: tokens.into_iter().map(Into::into).collect(),
            segment_boundary: None,
        }
    }

    pub fn paired(tokens: Vec<String>, boundary: Option<usize>) -> Self {
        ModelInput {
            tokens,
            segment_boundary: boundary,
        }
    }

    /// Splits into `(a, b)` at the boundary, if any.
    pub fn segments(&self) -> (&[String], Option<&[String]>) {
        match self.segment_boundary {
            Some(b) if b <= self.tokens.len() => (&self.tokens[..b], Some(&self.tokens[b..])),
            _ => (&self.tokens, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    ToyBow,
    ToyAttention,
    Remote,
}

/// How masked context positions are represented to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    /// The model's own reserved mask symbol.
    #[default]
    ReservedSymbol,
    /// A fixed random vector drawn once from the provider seed.
    RandomVector,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::ToyBow => "toy_bow",
            ProviderKind::ToyAttention => "toy_attention",
            ProviderKind::Remote => "remote",
        })
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskStrategy::ReservedSymbol => "reserved_symbol",
            MaskStrategy::RandomVector => "random_vector",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub kind: ProviderKind,
    #[serde(default)]
    pub mask_strategy: MaskStrategy,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl ProviderDescriptor {
    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.endpoint) {
            (ProviderKind::Remote, None) => Err(ProviderError::Config(
                "remote provider requires an endpoint".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Any model that yields a class distribution for a token sequence.
pub trait ProbabilityProvider<T: Real>: Send + Sync {
    fn id(&self) -> String;

    fn num_classes(&self) -> usize;

    /// Token used in place of masked context positions.
    fn mask_token(&self) -> &str {
        crate::neural::Vocab::MASK_TOKEN
    }

    /// Serial providers are never called concurrently by the engine.
    fn is_serial(&self) -> bool {
        false
    }

    fn predict(&self, input: &ModelInput) -> Result<ProbabilityDistribution<T>>;

    /// Element-wise [`predict`](Self::predict); failures stay per element.
    fn predict_batch(&self, inputs: &[ModelInput]) -> Vec<Result<ProbabilityDistribution<T>>> {
        inputs.iter().map(|i| self.predict(i)).collect()
    }
}

impl<T: Real, P: ProbabilityProvider<T> + ?Sized> ProbabilityProvider<T> for Box<P> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn mask_token(&self) -> &str {
        (**self).mask_token()
    }
    fn is_serial(&self) -> bool {
        (**self).is_serial()
    }
    fn predict(&self, input: &ModelInput) -> Result<ProbabilityDistribution<T>> {
        (**self).predict(input)
    }
    fn predict_batch(&self, inputs: &[ModelInput]) -> Vec<Result<ProbabilityDistribution<T>>> {
        (**self).predict_batch(inputs)
    }
}
