//! Word-level rationale masks projected onto subword tokens.
//!
//! Each character inherits its word's mask value; a subtoken is rationale
//! iff at least one of its characters is. Subword markers (`##`, `Ġ`) and
//! non-ASCII characters are dropped on both sides before matching, since
//! byte-level BPE rewrites non-ASCII bytes into artifact characters.

use super::{CorpusError, Result};

const SUBWORD_MARKERS: [&str; 2] = ["##", "Ġ"];

fn normalise(s: &str) -> impl Iterator<Item = char> + '_ {
    s.chars()
        .filter(|c| c.is_ascii() && !c.is_ascii_whitespace())
}

fn strip_marker(sub: &str) -> &str {
    SUBWORD_MARKERS
        .iter()
        .find_map(|m| sub.strip_prefix(m))
        .unwrap_or(sub)
}

/// Projects `word_mask` onto `subtokens`; output has one entry per subtoken.
///
/// A subtoken that is empty after normalisation (pure artifact bytes) takes
/// the mask of the character it follows, or of the first character when it
/// leads the sequence.
pub fn align_rationale<W: AsRef<str>, S: AsRef<str>>(
    words: &[W],
    word_mask: &[u8],
    subtokens: &[S],
) -> Result<Vec<u8>> {
    if words.len() != word_mask.len() {
        return Err(CorpusError::Validation {
            id: "alignment".into(),
            message: format!("{} words but {} mask values", words.len(), word_mask.len()),
        });
    }
    let chars: Vec<(char, u8)> = words
        .iter()
        .zip(word_mask)
        .flat_map(|(w, &m)| normalise(w.as_ref()).map(move |c| (c, m)))
        .collect();

    let mismatch = || CorpusError::Alignment {
        words: chars.iter().map(|&(c, _)| c).collect(),
        subtokens: subtokens
            .iter()
            .flat_map(|s| normalise(strip_marker(s.as_ref())))
            .collect(),
    };

    let mut out = Vec::with_capacity(subtokens.len());
    let mut cursor = 0usize;
    for sub in subtokens {
        let mut flag = 0u8;
        let mut consumed = 0usize;
        for c in normalise(strip_marker(sub.as_ref())) {
            match chars.get(cursor) {
                Some(&(w, m)) if w == c => {
                    flag |= m;
                    cursor += 1;
                    consumed += 1;
                }
                _ => return Err(mismatch()),
            }
        }
        if consumed == 0 {
            let anchor = cursor.saturating_sub(1);
            flag = chars.get(anchor).map_or(0, |&(_, m)| m);
        }
        out.push(flag);
    }
    if cursor != chars.len() {
        return Err(mismatch());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wordpiece_split() {
        assert_eq!(
            align_rationale(&["greatest"], &[1], &["great", "##est"]).unwrap(),
            vec![1, 1]
        );
        assert_eq!(
            align_rationale(&["the", "greatest"], &[0, 1], &["the", "great", "##est"]).unwrap(),
            vec![0, 1, 1]
        );
    }

    #[test]
    fn subtoken_straddling_words_takes_any() {
        // "ab" + "cd" tokenised as "a", "bc", "d"
        assert_eq!(
            align_rationale(&["ab", "cd"], &[0, 1], &["a", "bc", "d"]).unwrap(),
            vec![0, 1, 1]
        );
    }

    #[test]
    fn byte_level_bpe_artifacts() {
        // GPT-2 byte-level BPE maps the UTF-8 bytes of "ï" (0xC3 0xAF) to "Ã¯".
        let words = ["a", "naïve", "idea"];
        let subs = ["a", "Ġna", "Ã¯", "ve", "Ġidea"];
        let mask = align_rationale(&words, &[0, 1, 0], &subs).unwrap();
        assert_eq!(mask, vec![0, 1, 1, 1, 0]);
    }

    #[test]
    fn unalignable_streams_report_both_sides() {
        match align_rationale(&["cat"], &[1], &["dog"]) {
            Err(CorpusError::Alignment { words, subtokens }) => {
                assert_eq!(words, "cat");
                assert_eq!(subtokens, "dog");
            }
            other => panic!("expected alignment error, got {other:?}"),
        }
        assert!(align_rationale(&["cats"], &[1], &["cat"]).is_err());
    }
}
