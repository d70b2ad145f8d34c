//! Correlations with significance, percentile bootstrap, Fleiss' κ and ΔPred.

pub mod bootstrap;
pub mod correlation;
pub mod delta;
pub mod kappa;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

pub use bootstrap::{bootstrap_ar, BootstrapConfig, BootstrapResult};
pub use correlation::{kendall, pearson, rank, spearman, Correlation, PValueMethod, EXACT_MAX_N};
pub use delta::{delta_pred, percent_correct, PredictionOutcome};
pub use kappa::{fleiss_kappa, RatingMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined: zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("empty input")]
    Empty,
    #[error("invalid rating matrix: {0}")]
    InvalidRatings(String),
    #[error("kappa undefined: expected agreement is 1 but observed agreement is {0}")]
    UndefinedKappa(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// A confidence interval. `point` need not lie inside `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
    pub level: T,
    pub point: T,
}

impl<T: Real> Interval<T> {
    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }
}
