//! Single-layer attention-pooling classifier with a sequence head and a
//! per-token head.
//!
//! ```text
//! e_t   = E[token_t]
//! s_t   = q · tanh(W e_t + b)
//! â     = softmax(s)              (padding positions excluded)
//! z     = Σ_t â_t e_t
//! y     = W_seq z + b_seq         (sequence logits)
//! k_t   = W_tok e_t + b_tok       (token logits, 2 classes)
//! ```
//!
//! Gradients are derived by hand in [`loss`]; [`grad_check`] compares them to
//! central finite differences.

pub mod checkpoint;
pub mod eval;
pub mod grad_check;
pub mod loss;
pub mod train;
pub mod vocab;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{softmax, Real};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use grad_check::grad_check;
pub use loss::{loss_joint, AttentionLossMode, Objective};
pub use train::{
    train, train_token_classifier, train_with_history, TrainingConfig, TrainingHistory,
};
pub use vocab::Vocab;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("empty token sequence")]
    EmptyInput,
    #[error("mask length {mask} does not match {tokens} tokens")]
    LengthMismatch { mask: usize, tokens: usize },
    #[error("label {label} outside [0, {num_classes})")]
    BadLabel { label: usize, num_classes: usize },
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        value: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// All trainable tensors, flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ParamTensors<T> {
    /// `vocab × dim`
    pub embedding: Vec<T>,
    /// `dim × dim`
    pub attn_proj: Vec<T>,
    pub attn_bias: Vec<T>,
    pub query: Vec<T>,
    /// `num_classes × dim`
    pub seq_weight: Vec<T>,
    pub seq_bias: Vec<T>,
    /// `2 × dim`
    pub tok_weight: Vec<T>,
    pub tok_bias: Vec<T>,
}

impl<T: Real> ParamTensors<T> {
    pub const NAMES: [&'static str; 8] = [
        "embedding",
        "attn_proj",
        "attn_bias",
        "query",
        "seq_weight",
        "seq_bias",
        "tok_weight",
        "tok_bias",
    ];

    pub fn zeros(vocab: usize, dim: usize, num_classes: usize) -> Self {
        ParamTensors {
            embedding: vec![T::zero(); vocab * dim],
            attn_proj: vec![T::zero(); dim * dim],
            attn_bias: vec![T::zero(); dim],
            query: vec![T::zero(); dim],
            seq_weight: vec![T::zero(); num_classes * dim],
            seq_bias: vec![T::zero(); num_classes],
            tok_weight: vec![T::zero(); 2 * dim],
            tok_bias: vec![T::zero(); 2],
        }
    }

    pub fn tensors(&self) -> [&[T]; 8] {
        [
            &self.embedding,
            &self.attn_proj,
            &self.attn_bias,
            &self.query,
            &self.seq_weight,
            &self.seq_bias,
            &self.tok_weight,
            &self.tok_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 8] {
        [
            &mut self.embedding,
            &mut self.attn_proj,
            &mut self.attn_bias,
            &mut self.query,
            &mut self.seq_weight,
            &mut self.seq_bias,
            &mut self.tok_weight,
            &mut self.tok_bias,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub seq_logits: Vec<T>,
    /// One weight per token; zero at padding positions; sums to one.
    pub attention: Vec<T>,
    pub token_logits: Vec<[T; 2]>,
    /// `true` where the input token was the padding symbol.
    pub padding: Vec<bool>,
}

impl<T: Real> ForwardOutput<T> {
    pub fn seq_probs(&self) -> Vec<T> {
        softmax(&self.seq_logits)
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.seq_logits)
    }

    /// Per-token argmax of the token head (0 at padding).
    pub fn token_predictions(&self) -> Vec<u8> {
        self.token_logits
            .iter()
            .zip(&self.padding)
            .map(|(l, &pad)| u8::from(!pad && l[1] > l[0]))
            .collect()
    }

    pub fn active_len(&self) -> usize {
        self.padding.iter().filter(|&&p| !p).count()
    }
}

pub(crate) fn argmax<T: Real>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Trace<T> {
    pub ids: Vec<usize>,
    /// Rows are token embeddings as actually used (mask override applied).
    pub embedded: Vec<Vec<T>>,
    /// `tanh(W e_t + b)` per token.
    pub hidden: Vec<Vec<T>>,
    pub pooled: Vec<T>,
    pub output: ForwardOutput<T>,
}

/// The miniature attention classifier and its vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AttentionClassifier<T> {
    pub vocab: Vocab,
    pub dim: usize,
    pub num_classes: usize,
    pub params: ParamTensors<T>,
}

impl<T: Real> AttentionClassifier<T> {
    /// Training initialisation: small random embeddings and scorer, zero heads,
    /// so the untrained model predicts the uniform distribution.
    pub fn init(vocab: Vocab, dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        let mut model = Self::random(vocab, dim, num_classes, seed, 0.5)?;
        model
            .params
            .seq_weight
            .iter_mut()
            .for_each(|w| *w = T::zero());
        model
            .params
            .seq_bias
            .iter_mut()
            .for_each(|w| *w = T::zero());
        model
            .params
            .tok_weight
            .iter_mut()
            .for_each(|w| *w = T::zero());
        model
            .params
            .tok_bias
            .iter_mut()
            .for_each(|w| *w = T::zero());
        Ok(model)
    }

    /// Every parameter drawn uniformly from `[-scale, scale]`.
    pub fn random(
        vocab: Vocab,
        dim: usize,
        num_classes: usize,
        seed: u64,
        scale: f64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(NeuralError::Config(format!(
                "embedding dim must be >= 2, got {dim}"
            )));
        }
        if num_classes < 2 {
            return Err(NeuralError::Config(format!(
                "need >= 2 classes, got {num_classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamTensors::zeros(vocab.len(), dim, num_classes);
        for t in params.tensors_mut() {
            for x in t.iter_mut() {
                *x = T::lit(rng.gen_range(-scale..=scale));
            }
        }
        Ok(AttentionClassifier {
            vocab,
            dim,
            num_classes,
            params,
        })
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.vocab.id(t.as_ref())).collect()
    }

    pub fn embedding_row(&self, id: usize) -> &[T] {
        &self.params.embedding[id * self.dim..(id + 1) * self.dim]
    }

    pub fn forward<S: AsRef<str>>(&self, tokens: &[S]) -> Result<ForwardOutput<T>> {
        Ok(self.trace(&self.encode(tokens), None)?.output)
    }

    /// Forward pass where the mask symbol is embedded as `mask_vector`.
    pub fn forward_with_mask_vector<S: AsRef<str>>(
        &self,
        tokens: &[S],
        mask_vector: &[T],
    ) -> Result<ForwardOutput<T>> {
        Ok(self.trace(&self.encode(tokens), Some(mask_vector))?.output)
    }

    pub fn forward_ids(&self, ids: &[usize]) -> Result<ForwardOutput<T>> {
        Ok(self.trace(ids, None)?.output)
    }

    pub(crate) fn trace(&self, ids: &[usize], mask_vector: Option<&[T]>) -> Result<Trace<T>> {
        if ids.is_empty() {
            return Err(NeuralError::EmptyInput);
        }
        let padding: Vec<bool> = ids.iter().map(|&id| id == Vocab::PAD).collect();
        if padding.iter().all(|&p| p) {
            return Err(NeuralError::EmptyInput);
        }
        let d = self.dim;
        let p = &self.params;
        let embedded: Vec<Vec<T>> = ids
            .iter()
            .map(|&id| match mask_vector {
                Some(v) if id == Vocab::MASK => v.to_vec(),
                _ => self.embedding_row(id).to_vec(),
            })
            .collect();

        let mut hidden = Vec::with_capacity(ids.len());
        let mut scores = Vec::with_capacity(ids.len());
        for e in &embedded {
            let h: Vec<T> = (0..d)
                .map(|i| {
                    let row = &p.attn_proj[i * d..(i + 1) * d];
                    (dot(row, e) + p.attn_bias[i]).tanh()
                })
                .collect();
            scores.push(dot(&p.query, &h));
            hidden.push(h);
        }

        let active: Vec<T> = scores
            .iter()
            .zip(&padding)
            .filter(|(_, &pad)| !pad)
            .map(|(&s, _)| s)
            .collect();
        let mut normalised = softmax(&active).into_iter();
        let attention: Vec<T> = padding
            .iter()
            .map(|&pad| {
                if pad {
                    T::zero()
                } else {
                    normalised.next().expect("one weight per active token")
                }
            })
            .collect();

        let mut pooled = vec![T::zero(); d];
        for (a, e) in attention.iter().zip(&embedded) {
            for (z, &x) in pooled.iter_mut().zip(e) {
                *z += *a * x;
            }
        }
        let seq_logits: Vec<T> = (0..self.num_classes)
            .map(|c| dot(&p.seq_weight[c * d..(c + 1) * d], &pooled) + p.seq_bias[c])
            .collect();
        let token_logits: Vec<[T; 2]> = embedded
            .iter()
            .map(|e| {
                [
                    dot(&p.tok_weight[..d], e) + p.tok_bias[0],
                    dot(&p.tok_weight[d..], e) + p.tok_bias[1],
                ]
            })
            .collect();

        Ok(Trace {
            ids: ids.to_vec(),
            embedded,
            hidden,
            pooled,
            output: ForwardOutput {
                seq_logits,
                attention,
                token_logits,
                padding,
            },
        })
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> AttentionClassifier<f64> {
        let vocab = Vocab::from_tokens(["good", "bad", "film"]);
        AttentionClassifier::random(vocab, 4, 2, 7, 0.5).unwrap()
    }

    #[test]
    fn single_token_attention_is_one() {
        let out = model().forward(&["good"]).unwrap();
        assert_eq!(out.attention, vec![1.0]);
    }

    #[test]
    fn identical_tokens_share_attention() {
        let out = model().forward(&["film", "film"]).unwrap();
        assert_eq!(out.attention, vec![0.5, 0.5]);
    }

    #[test]
    fn attention_is_a_distribution() {
        let out = model().forward(&["good", "bad", "film", "unseen"]).unwrap();
        let total: f64 = out.attention.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(out.attention.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn padding_is_excluded() {
        let m = model();
        let padded = m.forward(&["good", Vocab::PAD_TOKEN, "bad"]).unwrap();
        let plain = m.forward(&["good", "bad"]).unwrap();
        assert_eq!(padded.attention[1], 0.0);
        assert!((padded.attention[0] - plain.attention[0]).abs() < 1e-15);
        assert_eq!(padded.seq_logits, plain.seq_logits);
        assert!(m.forward(&[Vocab::PAD_TOKEN]).is_err());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            model().forward::<&str>(&[]),
            Err(NeuralError::EmptyInput)
        ));
    }

    #[test]
    fn untrained_init_is_uniform() {
        let m = AttentionClassifier::<f32>::init(Vocab::from_tokens(["a"]), 8, 2, 1).unwrap();
        assert_eq!(m.forward(&["a", "b"]).unwrap().seq_probs(), vec![0.5, 0.5]);
    }

    #[test]
    fn tiny_dim_rejected() {
        assert!(
            AttentionClassifier::<f64>::random(Vocab::from_tokens(["a"]), 1, 2, 0, 0.1).is_err()
        );
    }
}
