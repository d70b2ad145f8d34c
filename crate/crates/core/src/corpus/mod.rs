//! Rationalised instances and the pipelines that produce them.
//!
//! Every source format ends up as a [`Dataset`] of [`Instance`]s, which
//! serialise to the canonical JSONL layout handled by [`jsonl`].

pub mod align;
pub mod annotations;
pub mod jsonl;
pub mod sentiment;
pub mod spans;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::align_rationale;
pub use annotations::{aggregate_annotations, AnnotationSet, Annotator, RationaleMode};
pub use jsonl::{load_jsonl, read_jsonl, write_jsonl};
pub use sentiment::{flatten_sentiment_tree, LeafConvention, SentimentTree};
pub use spans::{parse_conll, repurpose_spans, SpanCorpusRow, SpanMode};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("instance {id}: {message}")]
    Validation { id: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot align rationale: words normalise to {words:?}, subtokens to {subtokens:?}")]
    Alignment { words: String, subtokens: String },
    #[error("instance {id}: label tie between annotators {labels:?}")]
    LabelTie { id: String, labels: Vec<usize> },
    #[error("dataset is empty")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// A tokenised input with its binary highlight rationale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<String>,
    #[serde(rename = "rationale")]
    pub rationale_mask: Vec<u8>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_boundary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

impl Instance {
    pub fn new<S: Into<String>>(
        id: impl Into<String>,
        tokens: Vec<S>,
        mask: Vec<u8>,
        label: usize,
    ) -> Self {
        Instance {
            id: id.into(),
            tokens: tokens.into_iter().map(Into::into).collect(),
            rationale_mask: mask,
            label,
            segment_boundary: None,
            domain: None,
        }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }

    pub fn with_segment_boundary(mut self, boundary: usize) -> Self {
        self.segment_boundary = Some(boundary);
        self
    }

    /// Checks the structural invariants, including `label < num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let fail = |message: String| {
            Err(CorpusError::Validation {
                id: self.id.clone(),
                message,
            })
        };
        if self.tokens.is_empty() {
            return fail("no tokens".into());
        }
        if self.rationale_mask.len() != self.tokens.len() {
            return fail(format!(
                "rationale length {} does not match token length {}",
                self.rationale_mask.len(),
                self.tokens.len()
            ));
        }
        if let Some(bad) = self.rationale_mask.iter().find(|&&m| m > 1) {
            return fail(format!("rationale value {bad} is not 0 or 1"));
        }
        if self.label >= num_classes {
            return fail(format!("label {} outside [0, {num_classes})", self.label));
        }
        if let Some(b) = self.segment_boundary {
            if b > self.tokens.len() {
                return fail(format!(
                    "segment boundary {b} beyond {} tokens",
                    self.tokens.len()
                ));
            }
        }
        Ok(())
    }

    pub fn rationale_len(&self) -> usize {
        self.rationale_mask.iter().filter(|&&m| m == 1).count()
    }

    /// `|r| / |x|` for this instance.
    pub fn density(&self) -> f64 {
        self.rationale_len() as f64 / self.tokens.len() as f64
    }

    pub fn rationale_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .zip(&self.rationale_mask)
            .filter(|(_, &m)| m == 1)
            .map(|(t, _)| t.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub split: Split,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Builds a dataset, validating every instance and id uniqueness.
    pub fn new(
        name: impl Into<String>,
        num_classes: usize,
        split: Split,
        instances: Vec<Instance>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            num_classes,
            split,
            instances,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(CorpusError::Config(format!(
                "dataset {} needs at least 2 classes, got {}",
                self.name, self.num_classes
            )));
        }
        let mut seen = HashSet::with_capacity(self.instances.len());
        for inst in &self.instances {
            inst.validate(self.num_classes)?;
            if !seen.insert(inst.id.as_str()) {
                return Err(CorpusError::Validation {
                    id: inst.id.clone(),
                    message: format!("duplicate id in {} split", self.split),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Rationale density and class balance of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub density: f64,
    pub class_counts: BTreeMap<usize, usize>,
    pub mean_length: f64,
}

pub fn compute_stats(dataset: &Dataset) -> Result<DatasetStats> {
    if dataset.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let n = dataset.len() as f64;
    let density = dataset.instances.iter().map(Instance::density).sum::<f64>() / n;
    let mean_length = dataset
        .instances
        .iter()
        .map(|i| i.tokens.len() as f64)
        .sum::<f64>()
        / n;
    let mut class_counts = BTreeMap::new();
    for c in 0..dataset.num_classes {
        class_counts.insert(c, 0);
    }
    for inst in &dataset.instances {
        *class_counts.entry(inst.label).or_insert(0) += 1;
    }
    Ok(DatasetStats {
        density,
        class_counts,
        mean_length,
    })
}
