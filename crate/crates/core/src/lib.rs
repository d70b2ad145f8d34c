//! Contextual impact of highlight rationales, rationale learnability, and
//! the statistics used to relate the two.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the command-line
//! pipeline uses.

pub mod ci;
pub mod corpus;
pub mod metrics;
pub mod neural;
pub mod num;
pub mod provider;
pub mod stats;
pub mod synth;

pub use num::Real;

pub type Classifier = neural::AttentionClassifier<f64>;
pub type Classifier32 = neural::AttentionClassifier<f32>;
pub type TrainingConfig = neural::TrainingConfig<f64>;
pub type Objective = neural::Objective<f64>;
pub type ProbabilityDistribution = provider::ProbabilityDistribution<f64>;
pub type AttentionProvider = provider::AttentionProvider<f64>;
pub type BagOfWords = provider::BagOfWords<f64>;
pub type CiRecord = ci::CiRecord<f64>;
pub type CiReport = ci::CiReport<f64>;
pub type LearnabilityScore = metrics::LearnabilityScore<f64>;
pub type Correlation = stats::Correlation<f64>;
pub type Interval = stats::Interval<f64>;
pub type PredictionOutcome = stats::PredictionOutcome<f64>;
