//! Presence/absence tasks built from CoNLL chunk and NER column files.

use std::collections::BTreeSet;

use super::{CorpusError, Dataset, Instance, Result, Split};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanCorpusRow {
    pub token: String,
    pub tag: String,
    pub sentence_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanMode {
    Chunk,
    Ner,
}

impl SpanMode {
    /// The three most frequent chunk types (NP, VP, PP) are not offered.
    pub fn allowed_tags(self) -> &'static [&'static str] {
        match self {
            SpanMode::Chunk => &["ADVP", "ADJP", "SBAR", "PRT"],
            SpanMode::Ner => &["PER", "ORG", "LOC", "MISC"],
        }
    }
}

/// Parses whitespace-separated columns: first column is the token, `tag_column`
/// (default: last) is the BIO tag. Blank lines separate sentences and
/// `-DOCSTART-` lines are skipped.
pub fn parse_conll(text: &str, tag_column: Option<usize>) -> Result<Vec<SpanCorpusRow>> {
    let mut rows = Vec::new();
    let mut sentence = 0usize;
    let mut in_sentence = false;
    for (idx, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if in_sentence {
                sentence += 1;
                in_sentence = false;
            }
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        if cols.len() < 2 {
            return Err(CorpusError::Parse {
                line: idx + 1,
                message: format!("expected token and tag columns, got {:?}", line),
            });
        }
        let col = tag_column.unwrap_or(cols.len() - 1);
        let tag = cols.get(col).ok_or_else(|| CorpusError::Parse {
            line: idx + 1,
            message: format!("no column {col}"),
        })?;
        rows.push(SpanCorpusRow {
            token: cols[0].to_string(),
            tag: tag.to_string(),
            sentence_id: format!("s{sentence}"),
        });
        in_sentence = true;
    }
    Ok(rows)
}

/// Splits `B-ADVP` into `("B", "ADVP")`; `O` has no type.
fn tag_type(tag: &str) -> Option<&str> {
    match tag.split_once('-') {
        Some(("B" | "I" | "E" | "S", ty)) => Some(ty),
        _ => None,
    }
}

/// One instance per sentence: label 1 iff a `target_tag` span occurs, with
/// the rationale covering exactly that span's tokens.
///
/// An `I-` tag with no preceding `B-` of the same type opens a span.
pub fn repurpose_spans(
    rows: &[SpanCorpusRow],
    target_tag: &str,
    mode: SpanMode,
) -> Result<Dataset> {
    if !mode.allowed_tags().contains(&target_tag) {
        return Err(CorpusError::Config(format!(
            "tag {target_tag:?} not one of {:?} for {mode:?} mode",
            mode.allowed_tags()
        )));
    }
    let mut instances = Vec::new();
    let mut seen = BTreeSet::new();
    let mut start = 0;
    while start < rows.len() {
        let sid = &rows[start].sentence_id;
        let end = rows[start..]
            .iter()
            .position(|r| &r.sentence_id != sid)
            .map_or(rows.len(), |off| start + off);
        if !seen.insert(sid.clone()) {
            return Err(CorpusError::Validation {
                id: sid.clone(),
                message: "sentence rows are not contiguous".into(),
            });
        }
        let sentence = &rows[start..end];
        let tokens: Vec<String> = sentence.iter().map(|r| r.token.clone()).collect();
        let mask: Vec<u8> = sentence
            .iter()
            .map(|r| u8::from(tag_type(&r.tag) == Some(target_tag)))
            .collect();
        let label = usize::from(mask.contains(&1));
        instances.push(Instance::new(sid.clone(), tokens, mask, label));
        start = end;
    }
    let name = match mode {
        SpanMode::Chunk => format!("conll-chunk-{}", target_tag.to_lowercase()),
        SpanMode::Ner => format!("conll-ner-{}", target_tag.to_lowercase()),
    };
    Dataset::new(name, 2, Split::Train, instances)
}
