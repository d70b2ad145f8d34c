//! Rationale masks from sentiment-annotated constituency trees.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

/// A constituent with a sentiment score in `[-2, 2]` and an inclusive token span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentTree {
    pub score: i8,
    #[serde(default)]
    pub children: Vec<SentimentTree>,
    /// Inclusive `[start, end]` token indices.
    pub span: [usize; 2],
}

/// Whether a childless node satisfies "score greater than all constituents".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafConvention {
    /// Vacuously true: a reached leaf is included.
    #[default]
    Vacuous,
    /// A reached leaf is never included.
    Excluded,
}

impl SentimentTree {
    pub fn leaf(score: i8, index: usize) -> Self {
        SentimentTree {
            score,
            children: Vec::new(),
            span: [index, index],
        }
    }

    pub fn node(score: i8, children: Vec<SentimentTree>) -> Self {
        let start = children.first().map_or(0, |c| c.span[0]);
        let end = children.last().map_or(0, |c| c.span[1]);
        SentimentTree {
            score,
            children,
            span: [start, end],
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.span[1] + 1
    }

    /// Checks scores, span ordering, and that leaves tile `0..=root.end` in order.
    pub fn validate(&self) -> Result<()> {
        if self.span[0] != 0 {
            return Err(invalid(format!("root span starts at {}", self.span[0])));
        }
        let mut next_leaf = 0;
        self.validate_node(&mut next_leaf)?;
        if next_leaf != self.num_tokens() {
            return Err(invalid(format!(
                "leaves cover {next_leaf} tokens but root spans {}",
                self.num_tokens()
            )));
        }
        Ok(())
    }

    fn validate_node(&self, next_leaf: &mut usize) -> Result<()> {
        if !(-2..=2).contains(&self.score) {
            return Err(invalid(format!("score {} outside [-2, 2]", self.score)));
        }
        let [start, end] = self.span;
        if start > end {
            return Err(invalid(format!("span [{start}, {end}] is reversed")));
        }
        if self.children.is_empty() {
            if start != *next_leaf {
                return Err(invalid(format!(
                    "leaf span starts at {start}, expected {next_leaf}"
                )));
            }
            *next_leaf = end + 1;
            return Ok(());
        }
        let first = self.children.first().expect("non-empty").span[0];
        let last = self.children.last().expect("non-empty").span[1];
        if first != start || last != end {
            return Err(invalid(format!(
                "node span [{start}, {end}] is not the union [{first}, {last}] of its children"
            )));
        }
        for pair in self.children.windows(2) {
            if pair[0].span[1] + 1 != pair[1].span[0] {
                return Err(invalid("child spans are not adjacent".into()));
            }
        }
        for child in &self.children {
            child.validate_node(next_leaf)?;
        }
        Ok(())
    }
}

fn invalid(message: String) -> CorpusError {
    CorpusError::Validation {
        id: "sentiment-tree".into(),
        message,
    }
}

/// Breadth-first from the root, a node joins the rationale when its score is
/// strictly greater than every child's score; traversal stops below included
/// nodes. Scores are compared as signed values.
pub fn flatten_sentiment_tree(tree: &SentimentTree, leaves: LeafConvention) -> Result<Vec<u8>> {
    tree.validate()?;
    let mut mask = vec![0u8; tree.num_tokens()];
    let mut queue = VecDeque::from([tree]);
    while let Some(node) = queue.pop_front() {
        let included = if node.children.is_empty() {
            leaves == LeafConvention::Vacuous
        } else {
            node.children.iter().all(|c| node.score > c.score)
        };
        if included {
            mask[node.span[0]..=node.span[1]].fill(1);
        } else {
            queue.extend(node.children.iter());
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_convention_hand_trace() {
        // root +1 is not above A(+2); A and B are leaves reached by traversal.
        let tree = SentimentTree::node(
            1,
            vec![SentimentTree::leaf(2, 0), SentimentTree::leaf(0, 1)],
        );
        assert_eq!(
            flatten_sentiment_tree(&tree, LeafConvention::Vacuous).unwrap(),
            vec![1, 1]
        );
        assert_eq!(
            flatten_sentiment_tree(&tree, LeafConvention::Excluded).unwrap(),
            vec![0, 0]
        );
    }

    #[test]
    fn included_root_stops_descent() {
        let tree = SentimentTree::node(
            2,
            vec![SentimentTree::leaf(1, 0), SentimentTree::leaf(0, 1)],
        );
        assert_eq!(
            flatten_sentiment_tree(&tree, LeafConvention::Excluded).unwrap(),
            vec![1, 1]
        );
    }

    #[test]
    fn single_leaf() {
        let tree = SentimentTree::leaf(0, 0);
        assert_eq!(
            flatten_sentiment_tree(&tree, LeafConvention::Vacuous).unwrap(),
            vec![1]
        );
    }

    #[test]
    fn nested_hand_trace() {
        // (0 (1 (2 great) (0 movie)) (0 (0 ,) (-1 sadly)))
        // root 0: not > 1. left 1: not > 2. right 0: not > 0.
        // excluded leaves: nothing. vacuous: every reached leaf -> all ones.
        let left = SentimentTree::node(
            1,
            vec![SentimentTree::leaf(2, 0), SentimentTree::leaf(0, 1)],
        );
        let right = SentimentTree::node(
            0,
            vec![SentimentTree::leaf(0, 2), SentimentTree::leaf(-1, 3)],
        );
        let tree = SentimentTree::node(0, vec![left, right]);
        assert_eq!(
            flatten_sentiment_tree(&tree, LeafConvention::Excluded).unwrap(),
            vec![0, 0, 0, 0]
        );
        // now make "right" strictly above its children: 1 > 0 and 1 > -1
        let mut tree2 = tree.clone();
        tree2.children[1].score = 1;
        assert_eq!(
            flatten_sentiment_tree(&tree2, LeafConvention::Excluded).unwrap(),
            vec![0, 0, 1, 1]
        );
    }

    #[test]
    fn malformed_coverage_rejected() {
        let gap = SentimentTree {
            score: 0,
            children: vec![SentimentTree::leaf(0, 0), SentimentTree::leaf(0, 2)],
            span: [0, 2],
        };
        assert!(flatten_sentiment_tree(&gap, LeafConvention::Vacuous).is_err());
        let bad_union = SentimentTree {
            score: 0,
            children: vec![SentimentTree::leaf(0, 0), SentimentTree::leaf(0, 1)],
            span: [0, 2],
        };
        assert!(bad_union.validate().is_err());
        assert!(SentimentTree::leaf(3, 0).validate().is_err());
    }

    #[test]
    fn parses_nested_json() {
        let json = r#"{"score":1,"span":[0,1],"children":[{"score":2,"span":[0,0]},{"score":0,"span":[1,1]}]}"#;
        let tree: SentimentTree = serde_json::from_str(json).unwrap();
        assert_eq!(tree.children.len(), 2);
        tree.validate().unwrap();
    }
}
