use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Token vocabulary with four reserved symbols at fixed indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const MASK: usize = 2;
    pub const SEP: usize = 3;
    pub const PAD_TOKEN: &'static str = "[PAD]";
    pub const UNK_TOKEN: &'static str = "[UNK]";
    pub const MASK_TOKEN: &'static str = "[MASK]";
    pub const SEP_TOKEN: &'static str = "[SEP]";
    pub const RESERVED: [&'static str; 4] = [
        Self::PAD_TOKEN,
        Self::UNK_TOKEN,
        Self::MASK_TOKEN,
        Self::SEP_TOKEN,
    ];

    /// Reserved symbols followed by the distinct input tokens in sorted order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let distinct: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| !Self::RESERVED.contains(&t.as_str()))
            .collect();
        Self::from_list(
            Self::RESERVED
                .iter()
                .map(|s| s.to_string())
                .chain(distinct)
                .collect(),
        )
        .expect("reserved prefix present")
    }

    /// Rebuilds a vocabulary from its serialised token list.
    pub fn from_list(tokens: Vec<String>) -> Option<Self> {
        if tokens.len() < Self::RESERVED.len() || tokens[..4] != Self::RESERVED {
            return None;
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect::<HashMap<_, _>>();
        if index.len() != tokens.len() {
            return None;
        }
        Some(Vocab { tokens, index })
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Vocab::from_list(tokens).ok_or_else(|| {
            serde::de::Error::custom(
                "vocabulary must start with the reserved symbols and be unique",
            )
        })
    }
}
