//! Bag-of-words tokenizer shared by search and spam filtering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Token multiset. Every count is at least one.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVector {
    counts: BTreeMap<String, u32>,
}

impl TokenVector {
    pub fn get(&self, token: &str) -> u32 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of distinct tokens.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    /// Sum of all multiplicities.
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }

    pub fn add(&mut self, token: impl Into<String>, count: u32) {
        if count > 0 {
            *self.counts.entry(token.into()).or_insert(0) += count;
        }
    }
}

impl<S: Into<String>> FromIterator<(S, u32)> for TokenVector {
    fn from_iter<I: IntoIterator<Item = (S, u32)>>(iter: I) -> Self {
        let mut v = TokenVector::default();
        for (t, c) in iter {
            v.add(t, c);
        }
        v
    }
}

/// Lowercases, splits on every non-alphanumeric character and drops
/// tokens shorter than two characters.
pub fn tokenize(text: &str) -> TokenVector {
    let mut v = TokenVector::default();
    for token in tokens(text) {
        v.add(token, 1);
    }
    v
}

/// The token sequence behind [`tokenize`], in order of appearance.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| t.chars().count() >= 2).map(str::to_lowercase)
}
