//! Plain-text `key = value` experiment manifests.
//!
//! ```text
//! # comments start with '#'
//! seeds = 0, 1, 2
//! strategies = removal, masking
//! output_dir = report
//! task.planted.train = data/train.jsonl
//! task.planted.test = data/test.jsonl
//! provider.attn.kind = toy_attention
//! provider.attn.mask_strategy = reserved_symbol
//! train.epochs = 20
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rationale_core::ci::Strategy;
use rationale_core::neural::AttentionLossMode;
use rationale_core::provider::{MaskStrategy, ProviderKind};
use rationale_core::stats::BootstrapConfig;
use rationale_core::TrainingConfig;
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub train: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderSpec {
    pub name: String,
    pub kind: ProviderKind,
    pub mask_strategy: MaskStrategy,
    pub endpoint: Option<String>,
    /// Pre-trained model file; when absent the model is trained per seed.
    pub checkpoint: Option<PathBuf>,
    pub timeout_ms: u64,
    /// Seed for the random mask vector.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentManifest {
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub tasks: Vec<TaskSpec>,
    pub providers: Vec<ProviderSpec>,
    pub training: TrainingConfig,
    pub bow_learning_rate: f64,
    pub bow_epochs: usize,
    pub bootstrap: BootstrapConfig,
    pub decile_fraction: f64,
    pub output_dir: PathBuf,
    pub workers: Option<usize>,
}

fn parse_value<V: FromStr>(key: &str, value: &str, line: usize) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value.parse().map_err(|e: V::Err| CliError::Manifest {
        line,
        message: format!("{key}: cannot parse {value:?}: {e}"),
    })
}

fn parse_list<V: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s, line))
        .collect()
}

fn parse_kind(value: &str, line: usize) -> Result<ProviderKind> {
    match value {
        "toy_bow" => Ok(ProviderKind::ToyBow),
        "toy_attention" => Ok(ProviderKind::ToyAttention),
        "remote" => Ok(ProviderKind::Remote),
        other => Err(CliError::Manifest {
            line,
            message: format!("unknown provider kind {other:?} (toy_bow, toy_attention, remote)"),
        }),
    }
}

fn parse_mask_strategy(value: &str, line: usize) -> Result<MaskStrategy> {
    match value {
        "reserved_symbol" => Ok(MaskStrategy::ReservedSymbol),
        "random_vector" => Ok(MaskStrategy::RandomVector),
        other => Err(CliError::Manifest {
            line,
            message: format!("unknown mask strategy {other:?} (reserved_symbol, random_vector)"),
        }),
    }
}

fn parse_attention_mode(value: &str, line: usize) -> Result<AttentionLossMode> {
    match value {
        "bce" => Ok(AttentionLossMode::Bce),
        "distribution" => Ok(AttentionLossMode::Distribution),
        other => Err(CliError::Manifest {
            line,
            message: format!("unknown attention mode {other:?} (bce, distribution)"),
        }),
    }
}

#[derive(Default)]
struct ProviderDraft {
    kind: Option<ProviderKind>,
    mask_strategy: MaskStrategy,
    endpoint: Option<String>,
    checkpoint: Option<PathBuf>,
    timeout_ms: Option<u64>,
    seed: u64,
}

impl ExperimentManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses manifest text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let mut seen = BTreeMap::new();
        let mut m = ExperimentManifest {
            seeds: DEFAULT_SEEDS.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            tasks: Vec::new(),
            providers: Vec::new(),
            training: TrainingConfig::default(),
            bow_learning_rate: 1.0,
            bow_epochs: 10,
            bootstrap: BootstrapConfig::default(),
            decile_fraction: 0.1,
            output_dir: base.join("report"),
            workers: None,
        };
        let mut tasks: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>, usize)> =
            BTreeMap::new();
        let mut providers: BTreeMap<String, ProviderDraft> = BTreeMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::Manifest {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(CliError::Manifest {
                    line,
                    message: format!("duplicate key {key:?} (first set on line {prev})"),
                });
            }
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["seeds"] => m.seeds = parse_list(key, value, line)?,
                ["strategies"] => m.strategies = parse_list(key, value, line)?,
                ["output_dir"] => m.output_dir = resolve(value),
                ["workers"] => m.workers = Some(parse_value(key, value, line)?),
                ["decile_fraction"] => m.decile_fraction = parse_value(key, value, line)?,
                ["train", field] => {
                    let t = &mut m.training;
                    match *field {
                        "learning_rate" => t.learning_rate = parse_value(key, value, line)?,
                        "epochs" => t.epochs = parse_value(key, value, line)?,
                        "batch_size" => t.batch_size = parse_value(key, value, line)?,
                        "dim" => t.dim = parse_value(key, value, line)?,
                        "attention_loss_weight" => {
                            t.attention_loss_weight = parse_value(key, value, line)?
                        }
                        "weight_decay" => t.weight_decay = parse_value(key, value, line)?,
                        "eps" => t.eps = parse_value(key, value, line)?,
                        "attention_mode" => t.attention_mode = parse_attention_mode(value, line)?,
                        _ => return Err(unknown_key(key, line)),
                    }
                }
                ["bow", "learning_rate"] => m.bow_learning_rate = parse_value(key, value, line)?,
                ["bow", "epochs"] => m.bow_epochs = parse_value(key, value, line)?,
                ["bootstrap", field] => match *field {
                    "iterations" => m.bootstrap.iterations = parse_value(key, value, line)?,
                    "sample_size" => m.bootstrap.sample_size = parse_value(key, value, line)?,
                    "level" => m.bootstrap.level = parse_value(key, value, line)?,
                    "seed" => m.bootstrap.seed = parse_value(key, value, line)?,
                    _ => return Err(unknown_key(key, line)),
                },
                ["task", name, field] => {
                    let entry = tasks.entry(name.to_string()).or_insert((None, None, line));
                    match *field {
                        "train" => entry.0 = Some(resolve(value)),
                        "test" => entry.1 = Some(resolve(value)),
                        _ => return Err(unknown_key(key, line)),
                    }
                }
                ["provider", name, field] => {
                    let d = providers.entry(name.to_string()).or_default();
                    match *field {
                        "kind" => d.kind = Some(parse_kind(value, line)?),
                        "mask_strategy" => d.mask_strategy = parse_mask_strategy(value, line)?,
                        "endpoint" => d.endpoint = Some(value.to_string()),
                        "checkpoint" => d.checkpoint = Some(resolve(value)),
                        "timeout_ms" => d.timeout_ms = Some(parse_value(key, value, line)?),
                        "seed" => d.seed = parse_value(key, value, line)?,
                        _ => return Err(unknown_key(key, line)),
                    }
                }
                _ => return Err(unknown_key(key, line)),
            }
        }

        for (name, (train, test, line)) in tasks {
            match (train, test) {
                (Some(train), Some(test)) => m.tasks.push(TaskSpec { name, train, test }),
                _ => {
                    return Err(CliError::Manifest {
                        line,
                        message: format!("task {name:?} needs both a train and a test path"),
                    })
                }
            }
        }
        for (name, d) in providers {
            let kind = d
                .kind
                .ok_or_else(|| CliError::Invalid(format!("provider {name:?} has no kind")))?;
            m.providers.push(ProviderSpec {
                name,
                kind,
                mask_strategy: d.mask_strategy,
                endpoint: d.endpoint,
                checkpoint: d.checkpoint,
                timeout_ms: d.timeout_ms.unwrap_or(30_000),
                seed: d.seed,
            });
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(CliError::Invalid(msg));
        if self.seeds.is_empty() {
            return invalid("at least one seed is required".into());
        }
        let mut distinct = self.seeds.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != self.seeds.len() {
            return invalid("seeds must be distinct".into());
        }
        if self.strategies.is_empty() {
            return invalid("at least one strategy is required".into());
        }
        if self.tasks.is_empty() {
            return invalid("at least one task is required".into());
        }
        if self.providers.is_empty() {
            return invalid("at least one provider is required".into());
        }
        if !(self.decile_fraction > 0.0 && self.decile_fraction <= 0.5) {
            return invalid(format!(
                "decile_fraction {} outside (0, 0.5]",
                self.decile_fraction
            ));
        }
        if self.workers == Some(0) {
            return invalid("workers must be positive".into());
        }
        self.training
            .validate()
            .map_err(|e| CliError::Invalid(format!("training config: {e}")))?;
        for p in &self.providers {
            if p.kind == ProviderKind::Remote && p.endpoint.is_none() {
                return invalid(format!("remote provider {:?} needs an endpoint", p.name));
            }
        }
        Ok(())
    }

    /// Every referenced input file must exist before a run starts.
    pub fn check_paths(&self) -> Result<()> {
        let task_paths = self.tasks.iter().flat_map(|t| [&t.train, &t.test]);
        let ckpt_paths = self.providers.iter().filter_map(|p| p.checkpoint.as_ref());
        for path in task_paths.chain(ckpt_paths) {
            if !path.is_file() {
                return Err(CliError::Invalid(format!(
                    "missing input file {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// Canonical rendering of every setting that affects results. The
    /// output directory and worker count are excluded.
    pub fn canonical(&self) -> String {
        let t = &self.training;
        let mut s = String::new();
        let join = |v: Vec<String>| v.join(",");
        let _ = writeln!(
            s,
            "seeds={}",
            join(self.seeds.iter().map(u64::to_string).collect())
        );
        let _ = writeln!(
            s,
            "strategies={}",
            join(self.strategies.iter().map(Strategy::to_string).collect())
        );
        let _ = writeln!(s, "decile_fraction={}", self.decile_fraction);
        let _ = writeln!(
            s,
            "train=lr:{},epochs:{},batch:{},dim:{},weight:{},decay:{},eps:{},mode:{:?}",
            t.learning_rate,
            t.epochs,
            t.batch_size,
            t.dim,
            t.attention_loss_weight,
            t.weight_decay,
            t.eps,
            t.attention_mode
        );
        let _ = writeln!(
            s,
            "bow=lr:{},epochs:{}",
            self.bow_learning_rate, self.bow_epochs
        );
        let b = &self.bootstrap;
        let _ = writeln!(
            s,
            "bootstrap=iterations:{},sample_size:{},level:{},seed:{}",
            b.iterations, b.sample_size, b.level, b.seed
        );
        for task in &self.tasks {
            let _ = writeln!(
                s,
                "task.{}={},{}",
                task.name,
                task.train.display(),
                task.test.display()
            );
        }
        for p in &self.providers {
            let _ = writeln!(
                s,
                "provider.{}={},{},{},{},{},{}",
                p.name,
                p.kind,
                p.mask_strategy,
                p.endpoint.as_deref().unwrap_or(""),
                p.checkpoint
                    .as_ref()
                    .map(|c| c.display().to_string())
                    .unwrap_or_default(),
                p.timeout_ms,
                p.seed
            );
        }
        s
    }

    /// SHA-256 of the canonical rendering, lowercase hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn unknown_key(key: &str, line: usize) -> CliError {
    CliError::Manifest {
        line,
        message: format!("unknown key {key:?}"),
    }
}
