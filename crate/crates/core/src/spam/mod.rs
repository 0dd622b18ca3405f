//! Spam recognition for newly created events.
//!
//! Four classifiers share the [`Classifier`] trait: multinomial naive
//! Bayes and k-nearest-neighbours over token counts, and a perceptron and
//! a one-hidden-layer MLP over dense term-frequency vectors. [`Moderator`]
//! wraps whichever one is active and turns a posterior into a verdict.

mod bayes;
mod corpus;
mod eval;
mod features;
mod knn;
mod mlp;
mod moderation;
mod perceptron;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bayes::{nb_classify, nb_train, NaiveBayesModel};
pub use corpus::{parse_corpus, CorpusError};
pub use eval::{evaluate, Confusion, EvalReport};
pub use features::Vocabulary;
pub use knn::{cosine_distance, knn_classify, KnnModel};
pub use mlp::{mlp_train, Activation, Layer, Loss, MlpConfig, MlpModel};
pub use moderation::{ActiveClassifier, Moderation, Moderator, DEFAULT_THRESHOLD};
pub use perceptron::{perceptron_classify, perceptron_train, PerceptronConfig, PerceptronModel, TrainTrace};

use crate::text::TokenVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Spam,
    Ham,
}

impl Label {
    /// +1 for spam, -1 for ham.
    pub fn sign(self) -> i8 {
        match self {
            Label::Spam => 1,
            Label::Ham => -1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Spam => "spam",
            Label::Ham => "ham",
        })
    }
}

impl FromStr for Label {
    type Err = SpamError;
    fn from_str(s: &str) -> Result<Self, SpamError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spam" => Ok(Label::Spam),
            "ham" => Ok(Label::Ham),
            other => Err(SpamError::UnknownLabel(other.to_owned())),
        }
    }
}

/// Training example over token counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: TokenVector,
    pub label: Label,
}

impl LabeledExample {
    pub fn from_text(text: &str, label: Label) -> Self {
        LabeledExample { features: crate::text::tokenize(text), label }
    }
}

/// Training example over a dense feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseExample<S> {
    pub x: Vec<S>,
    pub label: Label,
}

pub trait Classifier {
    type Input: ?Sized;
    fn predict(&self, input: &Self::Input) -> Label;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpamError {
    #[error("degenerate corpus: both spam and ham examples are required")]
    DegenerateCorpus,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("smoothing must be positive and finite")]
    Smoothing,
    #[error("examples must share one dimension (expected {expected}, got {got})")]
    Dimension { expected: usize, got: usize },
    #[error("hidden layer size must be positive")]
    HiddenSize,
    #[error("k must be odd, positive and at most the corpus size (k = {k}, corpus = {n})")]
    K { k: usize, n: usize },
    #[error("cross-entropy loss requires a sigmoid output")]
    LossActivation,
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
}
