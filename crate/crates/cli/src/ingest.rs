//! Conversion of source corpora into canonical JSONL datasets.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rationale_core::corpus::{
    aggregate_annotations, compute_stats, flatten_sentiment_tree, load_jsonl, parse_conll,
    repurpose_spans, write_jsonl, AnnotationSet, CorpusError, Dataset, Instance, LeafConvention,
    RationaleMode, SentimentTree, SpanMode, Split,
};
use serde::Deserialize;

use crate::{io_err, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Jsonl,
    ConllChunk,
    ConllNer,
    MultiAnnotator,
    SentimentTree,
}

impl SourceFormat {
    pub const NAMES: [&'static str; 5] = [
        "jsonl",
        "conll-chunk",
        "conll-ner",
        "multi-annotator",
        "sentiment-tree",
    ];
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(SourceFormat::Jsonl),
            "conll-chunk" => Ok(SourceFormat::ConllChunk),
            "conll-ner" => Ok(SourceFormat::ConllNer),
            "multi-annotator" => Ok(SourceFormat::MultiAnnotator),
            "sentiment-tree" => Ok(SourceFormat::SentimentTree),
            other => Err(format!(
                "unknown format {other:?}; expected one of {}",
                SourceFormat::NAMES.join(", ")
            )),
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx = match self {
            SourceFormat::Jsonl => 0,
            SourceFormat::ConllChunk => 1,
            SourceFormat::ConllNer => 2,
            SourceFormat::MultiAnnotator => 3,
            SourceFormat::SentimentTree => 4,
        };
        f.write_str(SourceFormat::NAMES[idx])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Target chunk or entity type for the CoNLL formats.
    pub tag: Option<String>,
    /// Zero-based CoNLL tag column; the last column when absent.
    pub tag_column: Option<usize>,
    pub aggregate: RationaleMode,
    pub leaves: LeafConvention,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            tag: None,
            tag_column: None,
            aggregate: RationaleMode::Union,
            leaves: LeafConvention::Vacuous,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    /// `(record id, reason)` for records that were skipped.
    pub dropped: Vec<(String, String)>,
}

/// One record of the sentiment-tree format. Without an explicit label the
/// sign of the root score decides it; neutral roots are dropped.
#[derive(Debug, Deserialize)]
struct SentimentRecord {
    id: String,
    tokens: Vec<String>,
    tree: SentimentTree,
    #[serde(default)]
    label: Option<usize>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn corpus_err(path: &Path) -> impl Fn(CorpusError) -> CliError + '_ {
    move |source| CliError::Corpus {
        path: path.to_path_buf(),
        source,
    }
}

/// Non-empty lines of a JSONL file with 1-based line numbers.
fn json_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((idx + 1, line));
        }
    }
    Ok(out)
}

fn parse_record<'a, R: Deserialize<'a>>(path: &Path, line: usize, text: &'a str) -> Result<R> {
    serde_json::from_str(text).map_err(|e| CliError::Record {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

fn build_dataset(path: &Path, instances: Vec<Instance>) -> Result<Dataset> {
    let num_classes = instances
        .iter()
        .map(|i| i.label + 1)
        .max()
        .unwrap_or(0)
        .max(2);
    Dataset::new(stem(path), num_classes, Split::Train, instances).map_err(corpus_err(path))
}

pub fn ingest(format: SourceFormat, path: &Path, options: &IngestOptions) -> Result<IngestOutcome> {
    let mut dropped = Vec::new();
    let dataset = match format {
        SourceFormat::Jsonl => load_jsonl(path).map_err(corpus_err(path))?,
        SourceFormat::ConllChunk | SourceFormat::ConllNer => {
            let tag = options
                .tag
                .as_deref()
                .ok_or_else(|| CliError::Invalid(format!("--tag is required for {format}")))?;
            let mode = if format == SourceFormat::ConllChunk {
                SpanMode::Chunk
            } else {
                SpanMode::Ner
            };
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let rows = parse_conll(&text, options.tag_column).map_err(corpus_err(path))?;
            repurpose_spans(&rows, tag, mode).map_err(corpus_err(path))?
        }
        SourceFormat::MultiAnnotator => {
            let mut instances = Vec::new();
            for (line, text) in json_lines(path)? {
                let set: AnnotationSet = parse_record(path, line, &text)?;
                match aggregate_annotations(&set, options.aggregate) {
                    Ok(inst) => instances.push(inst),
                    Err(e @ CorpusError::LabelTie { .. }) => {
                        log::warn!(
                            "{}:{line}: dropping {}: {e}",
                            path.display(),
                            set.instance_id
                        );
                        dropped.push((set.instance_id, e.to_string()));
                    }
                    Err(e) => {
                        return Err(CliError::Record {
                            path: path.to_path_buf(),
                            line,
                            message: e.to_string(),
                        })
                    }
                }
            }
            build_dataset(path, instances)?
        }
        SourceFormat::SentimentTree => {
            let mut instances = Vec::new();
            for (line, text) in json_lines(path)? {
                let rec: SentimentRecord = parse_record(path, line, &text)?;
                let record_err = |message: String| CliError::Record {
                    path: path.to_path_buf(),
                    line,
                    message,
                };
                if rec.tree.num_tokens() != rec.tokens.len() {
                    return Err(record_err(format!(
                        "tree covers {} tokens, record has {}",
                        rec.tree.num_tokens(),
                        rec.tokens.len()
                    )));
                }
                let mask = flatten_sentiment_tree(&rec.tree, options.leaves)
                    .map_err(|e| record_err(e.to_string()))?;
                let label = match (rec.label, rec.tree.score) {
                    (Some(l), _) => l,
                    (None, s) if s > 0 => 1,
                    (None, s) if s < 0 => 0,
                    (None, _) => {
                        dropped.push((rec.id, "neutral root sentiment".into()));
                        continue;
                    }
                };
                instances.push(Instance::new(rec.id, rec.tokens, mask, label));
            }
            build_dataset(path, instances)?
        }
    };
    Ok(IngestOutcome { dataset, dropped })
}

pub fn write_dataset(dataset: &Dataset, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(out).map_err(io_err(out))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &dataset.instances).map_err(corpus_err(out))?;
    w.flush().map_err(io_err(out))
}

/// Human-readable dataset statistics.
pub fn stats_summary(dataset: &Dataset) -> Result<String> {
    let stats = compute_stats(dataset).map_err(|source| CliError::Corpus {
        path: dataset.name.clone().into(),
        source,
    })?;
    let counts: Vec<String> = stats
        .class_counts
        .iter()
        .map(|(c, n)| format!("{c}:{n}"))
        .collect();
    Ok(format!(
        "dataset={} instances={} density={:.4} mean_length={:.2} class_counts={}",
        dataset.name,
        dataset.len(),
        stats.density,
        stats.mean_length,
        counts.join(",")
    ))
}
