//! Learnability ratios and the f1 variants behind them.
//!
//! * `TC = token-f1(T) / token-f1(B)` where `B` predicts the dataset-wide
//!   majority token label and token-f1 is computed per instance, then averaged.
//! * `AR = f1(R) / f1(M)` with macro-f1 over classes.
//!
//! Both are also reported as normalised improvement
//! `(ratio·bl − bl) / (1 − bl)`, which places the baseline at 0 and a perfect
//! model at 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Dataset;
use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("baseline f1 must be positive, got {0}")]
    ZeroBaseline(f64),
    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LearnabilityKind {
    #[serde(rename = "TC")]
    TokenClassification,
    #[serde(rename = "AR")]
    AttentionRegularisation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LearnabilityScore<T> {
    pub kind: LearnabilityKind,
    pub ratio: T,
    pub baseline_f1: T,
    pub model_f1: T,
    /// Undefined when the baseline is already perfect.
    pub normalised: Option<T>,
}

/// `(ratio·baseline − baseline) / (1 − baseline)`; `None` when `baseline == 1`.
pub fn normalise_improvement<T: Real>(ratio: T, baseline: T) -> Option<T> {
    let headroom = T::one() - baseline;
    (headroom != T::zero()).then(|| (ratio * baseline - baseline) / headroom)
}

/// f1 of one class given confusion counts; 0 when precision and recall are both 0.
fn f1_from_counts<T: Real>(tp: usize, predicted: usize, actual: usize) -> T {
    if tp == 0 {
        return T::zero();
    }
    let tp = T::from_usize_lossy(tp);
    let precision = tp / T::from_usize_lossy(predicted);
    let recall = tp / T::from_usize_lossy(actual);
    let two = T::one() + T::one();
    two * precision * recall / (precision + recall)
}

/// Per-class f1 for the two token classes, as `[f1(0), f1(1)]`.
pub fn per_class_token_f1<T: Real>(pred: &[u8], gold: &[u8]) -> Result<[T; 2]> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    let mut out = [T::zero(); 2];
    for (c, slot) in out.iter_mut().enumerate() {
        let c = c as u8;
        let tp = pred
            .iter()
            .zip(gold)
            .filter(|(&p, &g)| p == c && g == c)
            .count();
        let predicted = pred.iter().filter(|&&p| p == c).count();
        let actual = gold.iter().filter(|&&g| g == c).count();
        *slot = f1_from_counts(tp, predicted, actual);
    }
    Ok(out)
}

/// Instance-level token f1: per-class f1 weighted by gold class frequency.
/// A class absent from the gold mask has weight zero.
pub fn token_f1<T: Real>(pred: &[u8], gold: &[u8]) -> Result<T> {
    let per_class = per_class_token_f1::<T>(pred, gold)?;
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = T::from_usize_lossy(gold.len());
    let ones = T::from_usize_lossy(gold.iter().filter(|&&g| g == 1).count());
    Ok(per_class[0] * (n - ones) / n + per_class[1] * ones / n)
}

/// Mean instance token f1 over paired prediction/gold masks.
pub fn mean_token_f1<T: Real>(preds: &[Vec<u8>], golds: &[Vec<u8>]) -> Result<T> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = T::zero();
    for (p, g) in preds.iter().zip(golds) {
        total += token_f1::<T>(p, g)?;
    }
    Ok(total / T::from_usize_lossy(preds.len()))
}

/// The token label held by the majority of all tokens in the dataset (ties go to 0).
pub fn majority_token_label(dataset: &Dataset) -> u8 {
    let (ones, total) = dataset
        .instances
        .iter()
        .fold((0usize, 0usize), |(o, t), inst| {
            (o + inst.rationale_len(), t + inst.tokens.len())
        });
    u8::from(2 * ones > total)
}

/// token-f1 of the all-majority predictor, averaged over instances.
pub fn majority_token_baseline<T: Real>(dataset: &Dataset) -> Result<T> {
    if dataset.is_empty() {
        return Err(MetricError::Empty);
    }
    let label = majority_token_label(dataset);
    let mut total = T::zero();
    for inst in &dataset.instances {
        let pred = vec![label; inst.tokens.len()];
        total += token_f1::<T>(&pred, &inst.rationale_mask)?;
    }
    Ok(total / T::from_usize_lossy(dataset.len()))
}

/// Macro-f1 over the classes occurring in either gold or predicted labels.
pub fn macro_f1<T: Real>(pred: &[usize], gold: &[usize]) -> Result<T> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    let classes: std::collections::BTreeSet<usize> = pred.iter().chain(gold).copied().collect();
    let mut total = T::zero();
    for &c in &classes {
        let tp = pred
            .iter()
            .zip(gold)
            .filter(|(&p, &g)| p == c && g == c)
            .count();
        let predicted = pred.iter().filter(|&&p| p == c).count();
        let actual = gold.iter().filter(|&&g| g == c).count();
        total += f1_from_counts(tp, predicted, actual);
    }
    Ok(total / T::from_usize_lossy(classes.len()))
}

pub fn accuracy<T: Real>(pred: &[usize], gold: &[usize]) -> Result<T> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(T::from_usize_lossy(hits) / T::from_usize_lossy(gold.len()))
}

fn score<T: Real>(
    kind: LearnabilityKind,
    model_f1: T,
    baseline_f1: T,
) -> Result<LearnabilityScore<T>> {
    if !(baseline_f1 > T::zero()) {
        return Err(MetricError::ZeroBaseline(baseline_f1.as_f64()));
    }
    let headroom = T::one() - baseline_f1;
    Ok(LearnabilityScore {
        kind,
        ratio: model_f1 / baseline_f1,
        baseline_f1,
        model_f1,
        normalised: (headroom != T::zero()).then(|| (model_f1 - baseline_f1) / headroom),
    })
}

/// `TC = token-f1(T) / token-f1(B)`.
pub fn tc_metric<T: Real>(model_token_f1: T, baseline: T) -> Result<LearnabilityScore<T>> {
    score(
        LearnabilityKind::TokenClassification,
        model_token_f1,
        baseline,
    )
}

/// `AR = f1(R) / f1(M)`.
pub fn ar_metric<T: Real>(regularised_f1: T, baseline_f1: T) -> Result<LearnabilityScore<T>> {
    score(
        LearnabilityKind::AttentionRegularisation,
        regularised_f1,
        baseline_f1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Instance, Split};

    #[test]
    fn token_f1_hand_values() {
        assert_eq!(token_f1::<f64>(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        // class 0: P = 3/4, R = 1 -> 6/7; class 1 absent from predictions -> 0
        let f = token_f1::<f64>(&[0, 0, 0, 0], &[0, 0, 0, 1]).unwrap();
        assert!((f - 0.75 * 6.0 / 7.0).abs() < 1e-15);
        assert!((f - 0.643).abs() < 1e-3);
        assert_eq!(token_f1::<f64>(&[0, 0], &[0, 0]).unwrap(), 1.0);
        assert!(token_f1::<f64>(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn baseline_examples() {
        let zeros = Dataset::new(
            "z",
            2,
            Split::Test,
            vec![Instance::new("a", vec!["x", "y"], vec![0, 0], 0)],
        )
        .unwrap();
        assert_eq!(majority_token_baseline::<f64>(&zeros).unwrap(), 1.0);

        // Majority over 7 tokens is 0 (2 ones). Instance a: [0,0,0,1] -> 0.75·6/7.
        // Instance b: [1,0,0]: class 0 P = 2/3, R = 1 -> 0.8, weight 2/3 -> 8/15.
        let two = Dataset::new(
            "t",
            2,
            Split::Test,
            vec![
                Instance::new("a", vec!["a", "b", "c", "d"], vec![0, 0, 0, 1], 0),
                Instance::new("b", vec!["a", "b", "c"], vec![1, 0, 0], 1),
            ],
        )
        .unwrap();
        let expected = (0.75 * 6.0 / 7.0 + 8.0 / 15.0) / 2.0;
        assert!((majority_token_baseline::<f64>(&two).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn tc_and_ar_values() {
        let same = tc_metric(0.5f64, 0.5).unwrap();
        assert_eq!(same.ratio, 1.0);
        assert_eq!(same.normalised, Some(0.0));
        let tc = tc_metric(0.662f64, 0.463).unwrap();
        assert!((tc.ratio - 1.43).abs() < 5e-3);
        let perfect = tc_metric(1.0f64, 0.5).unwrap();
        assert_eq!((perfect.ratio, perfect.normalised), (2.0, Some(1.0)));
        assert!(tc_metric(0.5f64, 0.0).is_err());

        let ar = ar_metric(1.14f64 * 0.692, 0.692).unwrap();
        assert!((ar.normalised.unwrap() - 0.315).abs() < 1e-3);
        assert!(ar_metric(0.93f64 * 0.741, 0.741).unwrap().ratio < 1.0);
        assert_eq!(ar_metric(0.7f32, 0.7).unwrap().ratio, 1.0);
    }

    #[test]
    fn normalisation_forms_agree() {
        let n = normalise_improvement(1.14f64, 0.692).unwrap();
        assert!((n - (1.14 * 0.692 - 0.692) / (1.0 - 0.692)).abs() < 1e-15);
        assert_eq!(normalise_improvement(1.2f64, 1.0), None);
    }

    #[test]
    fn macro_f1_and_accuracy() {
        let gold = [0, 0, 1, 1];
        let pred = [0, 1, 1, 1];
        // class 0: P=1, R=.5 -> 2/3; class 1: P=2/3, R=1 -> 0.8
        let f = macro_f1::<f64>(&pred, &gold).unwrap();
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
        assert_eq!(accuracy::<f64>(&pred, &gold).unwrap(), 0.75);
        assert_eq!(macro_f1::<f64>(&gold, &gold).unwrap(), 1.0);
    }
}
