//! Multi-annotator label and rationale aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Instance, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotator {
    pub label: usize,
    pub rationale: Vec<u8>,
}

/// One multi-annotator record, as read from the multi-annotator JSONL format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(rename = "id")]
    pub instance_id: String,
    pub tokens: Vec<String>,
    #[serde(rename = "annotators")]
    pub per_annotator: Vec<Annotator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_boundary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RationaleMode {
    Union,
    Intersection,
}

/// Majority-vote label plus element-wise OR/AND of the annotator masks.
///
/// A label tie (no unique most-frequent label) yields [`CorpusError::LabelTie`];
/// callers drop such instances.
pub fn aggregate_annotations(ann: &AnnotationSet, mode: RationaleMode) -> Result<Instance> {
    let invalid = |message: String| CorpusError::Validation {
        id: ann.instance_id.clone(),
        message,
    };
    let first = ann
        .per_annotator
        .first()
        .ok_or_else(|| invalid("no annotators".into()))?;
    let len = ann.tokens.len();
    if let Some(a) = ann.per_annotator.iter().find(|a| a.rationale.len() != len) {
        return Err(invalid(format!(
            "annotator mask length {} does not match {len} tokens",
            a.rationale.len()
        )));
    }

    let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
    for a in &ann.per_annotator {
        *votes.entry(a.label).or_insert(0) += 1;
    }
    let top = *votes.values().max().expect("at least one vote");
    let winners: Vec<usize> = votes
        .iter()
        .filter(|(_, &c)| c == top)
        .map(|(&l, _)| l)
        .collect();
    if winners.len() > 1 {
        return Err(CorpusError::LabelTie {
            id: ann.instance_id.clone(),
            labels: winners,
        });
    }

    let mut mask = first.rationale.clone();
    for a in &ann.per_annotator[1..] {
        for (m, &r) in mask.iter_mut().zip(&a.rationale) {
            *m = match mode {
                RationaleMode::Union => *m | r,
                RationaleMode::Intersection => *m & r,
            };
        }
    }

    Ok(Instance {
        id: ann.instance_id.clone(),
        tokens: ann.tokens.clone(),
        rationale_mask: mask,
        label: winners[0],
        segment_boundary: ann.segment_boundary,
        domain: ann.domain.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(anns: &[(usize, &[u8])]) -> AnnotationSet {
        AnnotationSet {
            instance_id: "x".into(),
            tokens: (0..anns[0].1.len()).map(|i| format!("t{i}")).collect(),
            per_annotator: anns
                .iter()
                .map(|&(label, r)| Annotator {
                    label,
                    rationale: r.to_vec(),
                })
                .collect(),
            segment_boundary: None,
            domain: None,
        }
    }

    #[test]
    fn union_and_intersection() {
        let a = set(&[(0, &[1, 0, 1]), (0, &[1, 1, 0])]);
        assert_eq!(
            aggregate_annotations(&a, RationaleMode::Union)
                .unwrap()
                .rationale_mask,
            vec![1, 1, 1]
        );
        assert_eq!(
            aggregate_annotations(&a, RationaleMode::Intersection)
                .unwrap()
                .rationale_mask,
            vec![1, 0, 0]
        );
    }

    #[test]
    fn majority_label() {
        // hate = 0, normal = 2
        let a = set(&[(0, &[1]), (0, &[0]), (2, &[1])]);
        assert_eq!(
            aggregate_annotations(&a, RationaleMode::Union)
                .unwrap()
                .label,
            0
        );
    }

    #[test]
    fn single_annotator_is_identity() {
        let a = set(&[(1, &[0, 1, 1, 0])]);
        let u = aggregate_annotations(&a, RationaleMode::Union).unwrap();
        let i = aggregate_annotations(&a, RationaleMode::Intersection).unwrap();
        assert_eq!(u.rationale_mask, vec![0, 1, 1, 0]);
        assert_eq!(u.rationale_mask, i.rationale_mask);
    }

    #[test]
    fn ties_are_reported() {
        let even = set(&[(0, &[1]), (1, &[1])]);
        assert!(matches!(
            aggregate_annotations(&even, RationaleMode::Union),
            Err(CorpusError::LabelTie { .. })
        ));
        let three_way = set(&[(0, &[1]), (1, &[1]), (2, &[0])]);
        assert!(aggregate_annotations(&three_way, RationaleMode::Union).is_err());
    }

    #[test]
    fn misaligned_masks_rejected() {
        let mut a = set(&[(0, &[1, 0]), (0, &[1, 0])]);
        a.per_annotator[1].rationale.push(1);
        assert!(matches!(
            aggregate_annotations(&a, RationaleMode::Union),
            Err(CorpusError::Validation { .. })
        ));
    }

    #[test]
    fn parses_wire_format() {
        let line = r#"{"id":"h1","tokens":["a","b"],"annotators":[{"label":1,"rationale":[1,0]},{"label":1,"rationale":[0,0]}]}"#;
        let a: AnnotationSet = serde_json::from_str(line).unwrap();
        assert_eq!(a.per_annotator.len(), 2);
        let inst = aggregate_annotations(&a, RationaleMode::Union).unwrap();
        assert_eq!(inst.id, "h1");
        assert_eq!(inst.rationale_mask, vec![1, 0]);
    }
}
