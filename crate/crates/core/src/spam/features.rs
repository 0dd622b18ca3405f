use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::{tokens, TokenVector};
use crate::Scalar;

/// Term list fixing the coordinates of dense tf vectors, ordered by first
/// appearance in the training texts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocabulary::default();
        for text in texts {
            for t in tokens(text) {
                if !v.index.contains_key(&t) {
                    v.index.insert(t.clone(), v.terms.len());
                    v.terms.push(t);
                }
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    fn position(&self, term: &str) -> Option<usize> {
        if self.index.len() == self.terms.len() {
            self.index.get(term).copied()
        } else {
            // deserialised without the lookup table
            self.terms.iter().position(|t| t == term)
        }
    }

    /// Restores the lookup table after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    /// Term-frequency vector; out-of-vocabulary tokens are dropped.
    pub fn vectorize<S: Scalar>(&self, bag: &TokenVector) -> Vec<S> {
        let mut x = vec![S::zero(); self.terms.len()];
        for (t, c) in bag.iter() {
            if let Some(i) = self.position(t) {
                x[i] = S::from_u32(c).unwrap();
            }
        }
        x
    }
}
