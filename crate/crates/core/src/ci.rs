//! Contextual impact: the probability change at the gold class when an input
//! is reduced to its rationale,
//!
//! ```text
//! CI(x_i) = M(x_i)_j − M(r_i)_j
//! ```
//!
//! averaged over a dataset. `r_i` is built either by removing the context
//! tokens (keeping rationale order) or by masking them in place.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Instance};
use crate::num::{mean, std_dev, Real};
use crate::provider::{ModelInput, ProbabilityProvider, ProviderError};

#[derive(Debug, Error)]
pub enum CiError {
    #[error("instance {id}: {source}")]
    Provider {
        id: String,
        #[source]
        source: ProviderError,
    },
    #[error("instance {id}: gold class {class} outside provider's {num_classes} classes")]
    ClassOutOfRange {
        id: String,
        class: usize,
        num_classes: usize,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("every instance failed; first failure: {0}")]
    NoRecords(String),
    #[error("fraction {0} outside (0, 0.5]")]
    BadFraction(f64),
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Removal,
    Masking,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Removal, Strategy::Masking];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Removal => "removal",
            Strategy::Masking => "masking",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "removal" | "rem" => Ok(Strategy::Removal),
            "masking" | "msk" => Ok(Strategy::Masking),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// The reduced input `r_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastExample {
    pub source_id: String,
    pub strategy: Strategy,
    pub reduced: Vec<String>,
    pub segment_boundary: Option<usize>,
    /// Removal of an all-context instance: `reduced` holds a single mask symbol.
    pub degenerate: bool,
}

impl ContrastExample {
    pub fn input(&self) -> ModelInput {
        ModelInput::paired(self.reduced.clone(), self.segment_boundary)
    }
}

pub fn build_contrast(
    instance: &Instance,
    strategy: Strategy,
    mask_token: &str,
) -> ContrastExample {
    let keep = |i: usize| instance.rationale_mask[i] == 1;
    let (reduced, segment_boundary, degenerate) = match strategy {
        Strategy::Removal => {
            let reduced: Vec<String> = instance.rationale_tokens().map(str::to_string).collect();
            let boundary = instance
                .segment_boundary
                .map(|b| (0..b).filter(|&i| keep(i)).count());
            if reduced.is_empty() {
                (vec![mask_token.to_string()], None, true)
            } else {
                (reduced, boundary, false)
            }
        }
        Strategy::Masking => {
            let reduced = instance
                .tokens
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if keep(i) {
                        t.clone()
                    } else {
                        mask_token.to_string()
                    }
                })
                .collect();
            (reduced, instance.segment_boundary, false)
        }
    };
    ContrastExample {
        source_id: instance.id.clone(),
        strategy,
        reduced,
        segment_boundary,
        degenerate,
    }
}

/// One instance's sufficiency measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CiRecord<T> {
    pub instance_id: String,
    pub class: usize,
    pub p_full: T,
    pub p_reduced: T,
    pub suff: T,
    pub strategy: Strategy,
    pub degenerate: bool,
}

fn gold_prob<T: Real>(
    provider: &dyn ProbabilityProvider<T>,
    input: &ModelInput,
    instance: &Instance,
) -> Result<T> {
    let dist = provider
        .predict(input)
        .map_err(|source| CiError::Provider {
            id: instance.id.clone(),
            source,
        })?;
    dist.prob(instance.label)
        .ok_or_else(|| CiError::ClassOutOfRange {
            id: instance.id.clone(),
            class: instance.label,
            num_classes: dist.probs().len(),
        })
}

/// `suff = M(x)_j − M(r)_j` at the gold class `j`.
pub fn sufficiency<T: Real>(
    provider: &dyn ProbabilityProvider<T>,
    instance: &Instance,
    strategy: Strategy,
) -> Result<CiRecord<T>> {
    let full = ModelInput::paired(instance.tokens.clone(), instance.segment_boundary);
    let contrast = build_contrast(instance, strategy, provider.mask_token());
    let p_full = gold_prob(provider, &full, instance)?;
    let reduced = contrast.input();
    let p_reduced = if reduced == full {
        p_full
    } else {
        gold_prob(provider, &reduced, instance)?
    };
    Ok(CiRecord {
        instance_id: instance.id.clone(),
        class: instance.label,
        p_full,
        p_reduced,
        suff: p_full - p_reduced,
        strategy,
        degenerate: contrast.degenerate,
    })
}

/// Dataset-level contextual impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CiReport<T> {
    pub dataset: String,
    pub provider: String,
    pub strategy: Strategy,
    pub records: Vec<CiRecord<T>>,
    pub mean_suff: T,
    pub std_suff: T,
    /// `(instance id, message)` for instances excluded after a provider failure.
    pub failures: Vec<(String, String)>,
}

impl<T: Real> CiReport<T> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_records_csv(writer, &self.records)
    }
}

pub const RECORD_COLUMNS: [&str; 7] = [
    "instance_id",
    "class",
    "p_full",
    "p_reduced",
    "suff",
    "strategy",
    "degenerate",
];

pub fn write_records_csv<T: Real, W: Write>(writer: W, records: &[CiRecord<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.instance_id.clone(),
            r.class.to_string(),
            r.p_full.to_string(),
            r.p_reduced.to_string(),
            r.suff.to_string(),
            r.strategy.to_string(),
            r.degenerate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Computes a record per instance, fanning out over at most `parallelism`
/// threads unless the provider is serial. Record order follows the dataset.
pub fn dataset_ci<T: Real>(
    provider: &dyn ProbabilityProvider<T>,
    dataset: &Dataset,
    strategy: Strategy,
    parallelism: usize,
) -> Result<CiReport<T>> {
    if dataset.is_empty() {
        return Err(CiError::EmptyDataset);
    }
    let run = |inst: &Instance| sufficiency(provider, inst, strategy);
    let results: Vec<Result<CiRecord<T>>> = if provider.is_serial() || parallelism <= 1 {
        dataset.instances.iter().map(run).collect()
    } else {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
        {
            Ok(pool) => pool.install(|| dataset.instances.par_iter().map(run).collect()),
            Err(_) => dataset.instances.iter().map(run).collect(),
        }
    };

    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (inst, res) in dataset.instances.iter().zip(results) {
        match res {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("contextual impact failed for {}: {e}", inst.id);
                failures.push((inst.id.clone(), e.to_string()));
            }
        }
    }
    if records.is_empty() {
        return Err(CiError::NoRecords(failures[0].1.clone()));
    }
    let values: Vec<T> = records.iter().map(|r| r.suff).collect();
    Ok(CiReport {
        dataset: dataset.name.clone(),
        provider: provider.id(),
        strategy,
        mean_suff: mean(&values).expect("non-empty"),
        std_suff: std_dev(&values).expect("non-empty"),
        records,
        failures,
    })
}

fn by_suff_then_id<T: Real>(a: &CiRecord<T>, b: &CiRecord<T>) -> Ordering {
    a.suff
        .partial_cmp(&b.suff)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.instance_id.cmp(&b.instance_id))
}

/// `(bottom, top)` record groups.
pub type DecileSplit<T> = (Vec<CiRecord<T>>, Vec<CiRecord<T>>);

/// Lowest and highest `⌊fraction·n⌋` records by `suff`; ties broken by
/// instance id. `top` is returned highest first.
pub fn decile_split<T: Real>(records: &[CiRecord<T>], fraction: f64) -> Result<DecileSplit<T>> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(CiError::BadFraction(fraction));
    }
    let needed = (1.0 / fraction - 1e-9).ceil() as usize;
    if records.len() < needed {
        return Err(CiError::TooFewRecords {
            needed,
            got: records.len(),
        });
    }
    let k = (fraction * records.len() as f64 + 1e-9).floor() as usize;
    let mut sorted = records.to_vec();
    sorted.sort_by(by_suff_then_id);
    let bottom = sorted[..k].to_vec();
    let top = sorted[sorted.len() - k..].iter().rev().cloned().collect();
    Ok((bottom, top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ProbabilityDistribution, Result as PResult};

    fn figure_instance() -> Instance {
        Instance::new(
            "fig1",
            vec![
                "the",
                "greatest",
                "family-oriented",
                "fantasy-adventure",
                "movie",
            ],
            vec![1, 1, 1, 0, 0],
            1,
        )
    }

    #[test]
    fn removal_keeps_rationale_in_order() {
        let c = build_contrast(&figure_instance(), Strategy::Removal, "[MASK]");
        assert_eq!(c.reduced, vec!["the", "greatest", "family-oriented"]);
        assert!(!c.degenerate);
    }

    #[test]
    fn masking_substitutes_in_place() {
        let c = build_contrast(&figure_instance(), Strategy::Masking, "[MASK]");
        assert_eq!(
            c.reduced,
            vec!["the", "greatest", "family-oriented", "[MASK]", "[MASK]"]
        );
    }

    #[test]
    fn all_ones_mask_is_identity() {
        let inst = Instance::new("a", vec!["x", "y"], vec![1, 1], 0);
        for s in Strategy::ALL {
            assert_eq!(build_contrast(&inst, s, "[MASK]").reduced, inst.tokens);
        }
    }

    #[test]
    fn all_zero_removal_is_degenerate() {
        let inst = Instance::new("a", vec!["x", "y"], vec![0, 0], 0);
        let c = build_contrast(&inst, Strategy::Removal, "[MASK]");
        assert_eq!(c.reduced, vec!["[MASK]"]);
        assert!(c.degenerate);
    }

    #[test]
    fn removal_shifts_segment_boundary() {
        let inst = Instance::new("p", vec!["a", "b", "c", "d"], vec![1, 0, 1, 1], 0)
            .with_segment_boundary(2);
        let c = build_contrast(&inst, Strategy::Removal, "[MASK]");
        assert_eq!(c.reduced, vec!["a", "c", "d"]);
        assert_eq!(c.segment_boundary, Some(1));
    }

    /// Returns fixed gold-class probabilities for full and reduced inputs.
    struct Fixed {
        full_len: usize,
        full: f64,
        reduced: f64,
    }

    impl ProbabilityProvider<f64> for Fixed {
        fn id(&self) -> String {
            "fixed".into()
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn predict(&self, input: &ModelInput) -> PResult<ProbabilityDistribution<f64>> {
            let p = if input.tokens.len() == self.full_len
                && !input.tokens.iter().any(|t| t == "[MASK]")
            {
                self.full
            } else {
                self.reduced
            };
            ProbabilityDistribution::new(vec![1.0 - p, p])
        }
    }

    #[test]
    fn sufficiency_subtracts_at_gold_class() {
        let provider = Fixed {
            full_len: 5,
            full: 0.7,
            reduced: 0.9,
        };
        let r = sufficiency(&provider, &figure_instance(), Strategy::Removal).unwrap();
        assert_eq!(r.p_full, 0.7);
        assert_eq!(r.p_reduced, 0.9);
        assert!((r.suff - (-0.2)).abs() < 1e-15);
        assert_eq!(r.suff, r.p_full - r.p_reduced);
    }

    #[test]
    fn dataset_mean_and_std() {
        let provider = Fixed {
            full_len: 2,
            full: 0.6,
            reduced: 0.5,
        };
        let insts = vec![
            Instance::new("a", vec!["x", "y"], vec![1, 0], 1),
            Instance::new("b", vec!["x", "y"], vec![1, 0], 0),
        ];
        let ds = Dataset::new("d", 2, crate::corpus::Split::Test, insts).unwrap();
        let rep = dataset_ci(&provider, &ds, Strategy::Removal, 2).unwrap();
        // +0.1 for class 1, −0.1 for class 0
        assert!(rep.mean_suff.abs() < 1e-15);
        assert!((rep.std_suff - 0.1).abs() < 1e-12);

        let single = Dataset::new(
            "s",
            2,
            crate::corpus::Split::Test,
            vec![ds.instances[0].clone()],
        )
        .unwrap();
        let rep = dataset_ci(&provider, &single, Strategy::Masking, 1).unwrap();
        assert_eq!(rep.mean_suff, rep.records[0].suff);
        assert_eq!(rep.std_suff, 0.0);
    }

    fn rec(id: &str, suff: f64) -> CiRecord<f64> {
        CiRecord {
            instance_id: id.into(),
            class: 0,
            p_full: 0.5,
            p_reduced: 0.5 - suff,
            suff,
            strategy: Strategy::Removal,
            degenerate: false,
        }
    }

    #[test]
    fn decile_counts_and_ties() {
        let records: Vec<_> = (0..20).map(|i| rec(&format!("{i:02}"), 0.0)).collect();
        let (bottom, top) = decile_split(&records, 0.10).unwrap();
        assert_eq!(bottom.len(), 2);
        assert_eq!(top.len(), 2);
        assert_eq!(
            bottom
                .iter()
                .map(|r| r.instance_id.as_str())
                .collect::<Vec<_>>(),
            ["00", "01"]
        );
        assert_eq!(
            top.iter()
                .map(|r| r.instance_id.as_str())
                .collect::<Vec<_>>(),
            ["19", "18"]
        );
        assert!(decile_split(&records[..9], 0.10).is_err());
        assert!(decile_split(&records, 0.6).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &[rec("a", 0.25)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "instance_id,class,p_full,p_reduced,suff,strategy,degenerate\na,0,0.5,0.25,0.25,removal,false\n"
        );
    }
}
