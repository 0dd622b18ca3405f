use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Classifier, Label, LabeledExample, SpamError};
use crate::text::{tokenize, TokenVector};
use crate::Scalar;

/// Multinomial naive Bayes with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel<S> {
    alpha: S,
    spam_docs: u64,
    ham_docs: u64,
    spam_counts: BTreeMap<String, u64>,
    ham_counts: BTreeMap<String, u64>,
    spam_mass: u64,
    ham_mass: u64,
    vocabulary: usize,
}

impl<S: Scalar> NaiveBayesModel<S> {
    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary
    }

    pub fn prior(&self, label: Label) -> S {
        let total = S::from_u64(self.spam_docs + self.ham_docs).unwrap();
        let n = match label {
            Label::Spam => self.spam_docs,
            Label::Ham => self.ham_docs,
        };
        S::from_u64(n).unwrap() / total
    }

    pub fn token_count(&self, label: Label, token: &str) -> u64 {
        let counts = match label {
            Label::Spam => &self.spam_counts,
            Label::Ham => &self.ham_counts,
        };
        counts.get(token).copied().unwrap_or(0)
    }

    /// Total token mass seen for `label`.
    pub fn mass(&self, label: Label) -> u64 {
        match label {
            Label::Spam => self.spam_mass,
            Label::Ham => self.ham_mass,
        }
    }

    /// `(count + alpha) / (mass + alpha * V)`.
    pub fn likelihood(&self, label: Label, token: &str) -> S {
        let count = S::from_u64(self.token_count(label, token)).unwrap();
        let mass = S::from_u64(self.mass(label)).unwrap();
        let v = S::from_usize(self.vocabulary).unwrap();
        (count + self.alpha) / (mass + self.alpha * v)
    }

    fn log_joint(&self, label: Label, tokens: &TokenVector) -> S {
        let mut acc = self.prior(label).ln();
        for (token, n) in tokens.iter() {
            acc += S::from_u32(n).unwrap() * self.likelihood(label, token).ln();
        }
        acc
    }

    /// Label and spam posterior for a bag of words. Ties go to ham.
    pub fn classify_tokens(&self, tokens: &TokenVector) -> (Label, S) {
        let ls = self.log_joint(Label::Spam, tokens);
        let lh = self.log_joint(Label::Ham, tokens);
        // two-class log-sum-exp normalisation
        let posterior = S::one() / (S::one() + (lh - ls).exp());
        let label = if ls > lh { Label::Spam } else { Label::Ham };
        (label, posterior)
    }
}

/// Fits class priors and smoothed token likelihoods.
pub fn nb_train<S: Scalar>(corpus: &[LabeledExample], alpha: S) -> Result<NaiveBayesModel<S>, SpamError> {
    if !(alpha.is_finite() && alpha > S::zero()) {
        return Err(SpamError::Smoothing);
    }
    let mut m = NaiveBayesModel {
        alpha,
        spam_docs: 0,
        ham_docs: 0,
        spam_counts: BTreeMap::new(),
        ham_counts: BTreeMap::new(),
        spam_mass: 0,
        ham_mass: 0,
        vocabulary: 0,
    };
    let mut vocab = BTreeSet::new();
    for ex in corpus {
        let (docs, counts, mass) = match ex.label {
            Label::Spam => (&mut m.spam_docs, &mut m.spam_counts, &mut m.spam_mass),
            Label::Ham => (&mut m.ham_docs, &mut m.ham_counts, &mut m.ham_mass),
        };
        *docs += 1;
        for (token, n) in ex.features.iter() {
            *counts.entry(token.to_owned()).or_insert(0) += n as u64;
            *mass += n as u64;
            vocab.insert(token);
        }
    }
    if m.spam_docs == 0 || m.ham_docs == 0 {
        return Err(SpamError::DegenerateCorpus);
    }
    m.vocabulary = vocab.len();
    Ok(m)
}

pub fn nb_classify<S: Scalar>(model: &NaiveBayesModel<S>, text: &str) -> (Label, S) {
    model.classify_tokens(&tokenize(text))
}

impl<S: Scalar> Classifier for NaiveBayesModel<S> {
    type Input = str;
    fn predict(&self, text: &str) -> Label {
        nb_classify(self, text).0
    }
}
