//! Deterministic mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    AttentionClassifier, AttentionLossMode, NeuralError, Objective, ParamTensors, Result, Vocab,
};
use crate::corpus::{Dataset, Instance};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig<T> {
    pub learning_rate: T,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the attention term for the regularised model.
    pub attention_loss_weight: T,
    pub dim: usize,
    /// Clip for â inside the binary cross-entropy, in `(0, 0.5)`.
    pub eps: T,
    /// Decoupled weight decay applied after every step.
    pub weight_decay: T,
    pub attention_mode: AttentionLossMode,
}

impl<T: Real> Default for TrainingConfig<T> {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: T::lit(0.5),
            epochs: 20,
            batch_size: 16,
            seed: 0,
            attention_loss_weight: T::one(),
            dim: 16,
            eps: T::lit(1e-7),
            weight_decay: T::lit(1e-2),
            attention_mode: AttentionLossMode::Bce,
        }
    }
}

impl<T: Real> TrainingConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NeuralError::Config(m));
        if !(self.learning_rate > T::zero()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.eps > T::zero() && self.eps < T::lit(0.5)) {
            return bad(format!("eps must lie in (0, 0.5), got {}", self.eps));
        }
        if self.attention_loss_weight < T::zero() || self.weight_decay < T::zero() {
            return bad("loss weight and weight decay must be non-negative".into());
        }
        if self.dim < 2 {
            return bad(format!("embedding dim must be >= 2, got {}", self.dim));
        }
        Ok(())
    }
}

/// Per-epoch evaluation losses (index 0 is the initial model).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub eval_losses: Vec<f64>,
    /// Epoch whose parameters were returned (0 = initial).
    pub best_epoch: usize,
}

/// Model input for an instance: paired inputs get the separator inserted at
/// the segment boundary, with a zero rationale entry.
pub fn model_input(inst: &Instance) -> (Vec<String>, Vec<u8>) {
    match inst.segment_boundary {
        Some(b) if b > 0 && b < inst.tokens.len() => {
            let mut tokens = inst.tokens.clone();
            let mut mask = inst.rationale_mask.clone();
            tokens.insert(b, Vocab::SEP_TOKEN.to_string());
            mask.insert(b, 0);
            (tokens, mask)
        }
        _ => (inst.tokens.clone(), inst.rationale_mask.clone()),
    }
}

struct Encoded {
    ids: Vec<usize>,
    mask: Vec<u8>,
    label: usize,
}

fn mean_loss<T: Real>(
    model: &AttentionClassifier<T>,
    data: &[Encoded],
    objective: &Objective<T>,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in data {
        let out = model.forward_ids(&ex.ids)?;
        total += objective.loss(&out, ex.label, &ex.mask)?.as_f64();
    }
    Ok(total / data.len() as f64)
}

fn fit<T: Real>(
    dataset: &Dataset,
    config: &TrainingConfig<T>,
    objective: Objective<T>,
) -> Result<(AttentionClassifier<T>, TrainingHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(NeuralError::EmptyTrainingSet);
    }
    let vocab = Vocab::from_tokens(dataset.instances.iter().flat_map(|i| i.tokens.iter()));
    let mut model = AttentionClassifier::init(vocab, config.dim, dataset.num_classes, config.seed)?;
    let data: Vec<Encoded> = dataset
        .instances
        .iter()
        .map(|inst| {
            let (tokens, mask) = model_input(inst);
            Encoded {
                ids: model.encode(&tokens),
                mask,
                label: inst.label,
            }
        })
        .collect();

    let mut history = TrainingHistory {
        eval_losses: vec![mean_loss(&model, &data, &objective)?],
        best_epoch: 0,
    };
    let mut best = model.clone();
    let mut best_loss = history.eval_losses[0];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let decay = T::one() - config.learning_rate * config.weight_decay;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = ParamTensors::zeros(model.vocab.len(), model.dim, model.num_classes);
            for &i in batch {
                let ex = &data[i];
                let trace = model.trace(&ex.ids, None)?;
                let loss = objective.loss(&trace.output, ex.label, &ex.mask)?;
                if !loss.is_finite() {
                    return Err(NeuralError::NonFinite {
                        epoch,
                        batch: batch_idx,
                        value: loss.as_f64(),
                    });
                }
                model.backward(&trace, ex.label, &ex.mask, &objective, &mut grads);
            }
            let step = -config.learning_rate / T::from_usize_lossy(batch.len());
            if config.weight_decay != T::zero() {
                model.params.scale(decay);
            }
            model.params.add_scaled(&grads, step);
        }
        let loss = mean_loss(&model, &data, &objective)?;
        if !loss.is_finite() || !model.params.is_finite() {
            return Err(NeuralError::NonFinite {
                epoch,
                batch: usize::MAX,
                value: loss,
            });
        }
        history.eval_losses.push(loss);
        if epoch == 1 || loss < best_loss {
            best_loss = loss;
            best = model.clone();
            history.best_epoch = epoch;
        }
    }
    if config.epochs == 0 {
        best = model;
    }
    Ok((best, history))
}

/// Sequence classifier: the baseline when `regularised` is false, the
/// attention-regularised model otherwise.
pub fn train<T: Real>(
    dataset: &Dataset,
    config: &TrainingConfig<T>,
    regularised: bool,
) -> Result<AttentionClassifier<T>> {
    train_with_history(dataset, config, regularised).map(|(m, _)| m)
}

pub fn train_with_history<T: Real>(
    dataset: &Dataset,
    config: &TrainingConfig<T>,
    regularised: bool,
) -> Result<(AttentionClassifier<T>, TrainingHistory)> {
    let weight = if regularised {
        config.attention_loss_weight
    } else {
        T::zero()
    };
    let mut objective = Objective::joint(weight, config.eps);
    objective.mode = config.attention_mode;
    fit(dataset, config, objective)
}

/// Binary token classifier with the rationale mask as token labels.
pub fn train_token_classifier<T: Real>(
    dataset: &Dataset,
    config: &TrainingConfig<T>,
) -> Result<AttentionClassifier<T>> {
    fit(dataset, config, Objective::token_classification(config.eps)).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn tiny() -> Dataset {
        let insts = vec![
            Instance::new("a", vec!["great", "film"], vec![1, 0], 1),
            Instance::new("b", vec!["awful", "film"], vec![1, 0], 0),
            Instance::new("c", vec!["the", "great", "plot"], vec![0, 1, 0], 1),
            Instance::new("d", vec!["the", "awful", "plot"], vec![0, 1, 0], 0),
        ];
        Dataset::new("tiny", 2, Split::Train, insts).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let cfg = TrainingConfig::<f64> {
            epochs: 0,
            ..Default::default()
        };
        let ds = tiny();
        let trained = train(&ds, &cfg, true).unwrap();
        let vocab = Vocab::from_tokens(ds.instances.iter().flat_map(|i| i.tokens.iter()));
        let init = AttentionClassifier::init(vocab, cfg.dim, 2, cfg.seed).unwrap();
        assert_eq!(trained, init);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = TrainingConfig::<f64> {
            epochs: 5,
            batch_size: 2,
            seed: 9,
            ..Default::default()
        };
        let a = train(&tiny(), &cfg, true).unwrap();
        let b = train(&tiny(), &cfg, true).unwrap();
        assert_eq!(a, b);
        let t1 = train_token_classifier(&tiny(), &cfg).unwrap();
        let t2 = train_token_classifier(&tiny(), &cfg).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn fits_tiny_corpus() {
        let cfg = TrainingConfig::<f64> {
            epochs: 60,
            batch_size: 2,
            ..Default::default()
        };
        let m = train(&tiny(), &cfg, false).unwrap();
        assert_eq!(m.forward(&["great"]).unwrap().predicted_class(), 1);
        assert_eq!(m.forward(&["awful", "plot"]).unwrap().predicted_class(), 0);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TrainingConfig::<f64> {
            eps: 0.5,
            ..Default::default()
        };
        assert!(train(&tiny(), &cfg, false).is_err());
        let empty = Dataset::new("e", 2, Split::Train, vec![]).unwrap();
        assert!(matches!(
            train(&empty, &TrainingConfig::<f64>::default(), false),
            Err(NeuralError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn separator_inserted_at_boundary() {
        let inst =
            Instance::new("p", vec!["a", "b", "c"], vec![1, 0, 1], 0).with_segment_boundary(2);
        let (tokens, mask) = model_input(&inst);
        assert_eq!(tokens, vec!["a", "b", "[SEP]", "c"]);
        assert_eq!(mask, vec![1, 0, 0, 1]);
    }
}
