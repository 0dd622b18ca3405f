use serde::{Deserialize, Serialize};

use super::{Classifier, Label, LabeledExample, SpamError};
use crate::text::TokenVector;
use crate::Scalar;

/// `1 - cos(a, b)` over token counts; a zero vector is at distance 1 from
/// everything.
pub fn cosine_distance<S: Scalar>(a: &TokenVector, b: &TokenVector) -> S {
    let sq = |v: &TokenVector| v.iter().map(|(_, c)| S::from_u32(c).unwrap().powi(2)).sum::<S>();
    let (na, nb) = (sq(a), sq(b));
    if na == S::zero() || nb == S::zero() {
        return S::one();
    }
    let dot: S = a.iter().map(|(t, c)| S::from_u32(c).unwrap() * S::from_u32(b.get(t)).unwrap()).sum();
    S::one() - dot / (na.sqrt() * nb.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    examples: Vec<LabeledExample>,
    k: usize,
}

impl KnnModel {
    pub fn new(examples: Vec<LabeledExample>, k: usize) -> Result<Self, SpamError> {
        let n = examples.len();
        if k == 0 || k.is_multiple_of(2) || k > n {
            return Err(SpamError::K { k, n });
        }
        Ok(KnnModel { examples, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    /// Labels of the k nearest examples; equal distances keep stored order.
    pub fn neighbours(&self, features: &TokenVector) -> Vec<Label> {
        let mut scored: Vec<(f64, Label)> =
            self.examples.iter().map(|e| (cosine_distance::<f64>(features, &e.features), e.label)).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        scored.into_iter().take(self.k).map(|(_, l)| l).collect()
    }

    /// Fraction of spam among the k nearest.
    pub fn spam_share(&self, features: &TokenVector) -> f64 {
        let n = self.neighbours(features);
        n.iter().filter(|l| **l == Label::Spam).count() as f64 / n.len() as f64
    }
}

/// Majority label among the k nearest stored examples.
pub fn knn_classify(model: &KnnModel, features: &TokenVector) -> Label {
    let votes = model.neighbours(features);
    let spam = votes.iter().filter(|l| **l == Label::Spam).count();
    if 2 * spam > votes.len() {
        Label::Spam
    } else {
        Label::Ham
    }
}

impl Classifier for KnnModel {
    type Input = TokenVector;
    fn predict(&self, features: &TokenVector) -> Label {
        knn_classify(self, features)
    }
}
