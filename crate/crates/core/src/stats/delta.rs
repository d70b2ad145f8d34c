//! ΔPred: prediction performance on top-CI instances minus bottom-CI instances.

use serde::{Deserialize, Serialize};

use super::{Result, StatsError};
use crate::num::Real;

/// Correctness of one prediction: binary for sequence models, an instance
/// token-f1 in `[0, 1]` for the token classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum PredictionOutcome<T> {
    Binary { instance_id: String, correct: bool },
    Continuous { instance_id: String, f1: T },
}

impl<T: Real> PredictionOutcome<T> {
    pub fn value(&self) -> T {
        match self {
            PredictionOutcome::Binary { correct, .. } => {
                if *correct {
                    T::one()
                } else {
                    T::zero()
                }
            }
            PredictionOutcome::Continuous { f1, .. } => *f1,
        }
    }

    pub fn instance_id(&self) -> &str {
        match self {
            PredictionOutcome::Binary { instance_id, .. }
            | PredictionOutcome::Continuous { instance_id, .. } => instance_id,
        }
    }
}

/// `100 · Σ value / n`.
pub fn percent_correct<T: Real>(outcomes: &[PredictionOutcome<T>]) -> Result<T> {
    if outcomes.is_empty() {
        return Err(StatsError::Empty);
    }
    let total: T = outcomes.iter().map(PredictionOutcome::value).sum();
    Ok(T::lit(100.0) * total / T::from_usize_lossy(outcomes.len()))
}

/// Percentage correct on `top` minus percentage correct on `bottom`.
pub fn delta_pred<T: Real>(
    top: &[PredictionOutcome<T>],
    bottom: &[PredictionOutcome<T>],
) -> Result<T> {
    Ok(percent_correct(top)? - percent_correct(bottom)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn binary(correct: usize, total: usize) -> Vec<PredictionOutcome<f64>> {
        (0..total)
            .map(|i| PredictionOutcome::Binary {
                instance_id: format!("i{i}"),
                correct: i < correct,
            })
            .collect()
    }

    #[test]
    fn reported_deltas() {
        assert_eq!(
            delta_pred(&binary(95, 100), &binary(33, 100)).unwrap(),
            62.0
        );
        assert_eq!(
            delta_pred(&binary(67, 100), &binary(74, 100)).unwrap(),
            -7.0
        );
        let same = binary(3, 7);
        assert_eq!(delta_pred(&same, &same).unwrap(), 0.0);
    }

    #[test]
    fn continuous_outcomes_use_mean_f1() {
        let top = vec![
            PredictionOutcome::Continuous {
                instance_id: "a".into(),
                f1: 0.5,
            },
            PredictionOutcome::Continuous {
                instance_id: "b".into(),
                f1: 1.0,
            },
        ];
        assert_eq!(percent_correct(&top).unwrap(), 75.0);
        assert!(delta_pred::<f64>(&[], &top).is_err());
    }
}
