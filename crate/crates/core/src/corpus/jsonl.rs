//! Canonical JSONL instance files.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{CorpusError, Dataset, Instance, Result, Split};

/// Reads instances from JSONL. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if inst.rationale_mask.len() != inst.tokens.len() {
            return Err(CorpusError::Validation {
                id: inst.id,
                message: format!(
                    "line {}: rationale length {} does not match token length {}",
                    idx + 1,
                    inst.rationale_mask.len(),
                    inst.tokens.len()
                ),
            });
        }
        out.push(inst);
    }
    Ok(out)
}

/// Loads a JSONL file into a dataset named after the file stem.
///
/// `num_classes` is inferred as `max(label) + 1`, with a floor of 2.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let instances = read_jsonl(BufReader::new(File::open(path)?))?;
    let num_classes = instances
        .iter()
        .map(|i| i.label + 1)
        .max()
        .unwrap_or(2)
        .max(2);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    Dataset::new(name, num_classes, Split::Train, instances)
}

pub fn write_jsonl<W: Write>(mut writer: W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        let line = serde_json::to_string(inst).map_err(|e| CorpusError::Validation {
            id: inst.id.clone(),
            message: e.to_string(),
        })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
