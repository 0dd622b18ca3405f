use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{
    mlp_train, nb_train, perceptron_train, DenseExample, KnnModel, Label, LabeledExample, MlpConfig, MlpModel,
    NaiveBayesModel, PerceptronConfig, PerceptronModel, SpamError, Vocabulary,
};
use crate::model::{EventRecord, EventStatus};
use crate::text::tokenize;

pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// The classifier currently used for moderation, with whatever feature
/// mapping it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActiveClassifier {
    NaiveBayes { model: NaiveBayesModel<f64> },
    Perceptron { model: PerceptronModel<f64>, vocabulary: Vocabulary },
    Mlp { model: MlpModel<f64>, vocabulary: Vocabulary },
    Knn { model: KnnModel },
}

impl ActiveClassifier {
    pub fn naive_bayes(corpus: &[(Label, String)], alpha: f64) -> Result<Self, SpamError> {
        let examples: Vec<_> = corpus.iter().map(|(l, t)| LabeledExample::from_text(t, *l)).collect();
        Ok(ActiveClassifier::NaiveBayes { model: nb_train(&examples, alpha)? })
    }

    pub fn perceptron(corpus: &[(Label, String)], cfg: PerceptronConfig<f64>) -> Result<Self, SpamError> {
        let vocabulary = Vocabulary::from_texts(corpus.iter().map(|(_, t)| t.as_str()));
        let dense: Vec<_> =
            corpus.iter().map(|(l, t)| DenseExample { x: vocabulary.vectorize(&tokenize(t)), label: *l }).collect();
        let (model, _) = perceptron_train(&dense, cfg)?;
        Ok(ActiveClassifier::Perceptron { model, vocabulary })
    }

    pub fn mlp(corpus: &[(Label, String)], cfg: &MlpConfig<f64>) -> Result<Self, SpamError> {
        let vocabulary = Vocabulary::from_texts(corpus.iter().map(|(_, t)| t.as_str()));
        let data: Vec<_> = corpus
            .iter()
            .map(|(l, t)| (vocabulary.vectorize(&tokenize(t)), if *l == Label::Spam { 1.0 } else { 0.0 }))
            .collect();
        Ok(ActiveClassifier::Mlp { model: mlp_train(&data, cfg)?, vocabulary })
    }

    pub fn knn(corpus: &[(Label, String)], k: usize) -> Result<Self, SpamError> {
        let examples = corpus.iter().map(|(l, t)| LabeledExample::from_text(t, *l)).collect();
        Ok(ActiveClassifier::Knn { model: KnnModel::new(examples, k)? })
    }

    /// Spam probability (or the closest thing the classifier offers: the
    /// perceptron yields 0 or 1, kNN the spam share of the neighbours).
    pub fn spam_posterior(&self, text: &str) -> f64 {
        let bag = tokenize(text);
        match self {
            ActiveClassifier::NaiveBayes { model } => model.classify_tokens(&bag).1,
            ActiveClassifier::Perceptron { model, vocabulary } => {
                let x = vocabulary.vectorize(&bag);
                if model.decision(&x) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActiveClassifier::Mlp { model, vocabulary } => model.predict_value(&vocabulary.vectorize(&bag)),
            ActiveClassifier::Knn { model } => model.spam_share(&bag),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("classifier serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let mut c: ActiveClassifier = serde_json::from_str(s)?;
        if let ActiveClassifier::Perceptron { vocabulary, .. } | ActiveClassifier::Mlp { vocabulary, .. } = &mut c {
            vocabulary.reindex();
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moderation {
    pub verdict: EventStatus,
    /// Absent when no classifier has been trained yet.
    pub posterior: Option<f64>,
}

/// Holds the active classifier behind an atomically swapped pointer.
#[derive(Debug)]
pub struct Moderator {
    active: RwLock<Option<Arc<ActiveClassifier>>>,
    threshold: f64,
}

impl Default for Moderator {
    fn default() -> Self {
        Moderator::new(DEFAULT_THRESHOLD)
    }
}

impl Moderator {
    pub fn new(threshold: f64) -> Self {
        Moderator { active: RwLock::new(None), threshold }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Replaces the active classifier; classifications already running keep
    /// the previous one.
    pub fn swap(&self, classifier: ActiveClassifier) -> Option<Arc<ActiveClassifier>> {
        self.active.write().unwrap().replace(Arc::new(classifier))
    }

    pub fn current(&self) -> Option<Arc<ActiveClassifier>> {
        self.active.read().unwrap().clone()
    }

    /// Flags the event when the spam posterior of its title and description
    /// reaches the threshold. Without a classifier every event passes.
    pub fn moderate_event(&self, e: &EventRecord) -> Moderation {
        let Some(c) = self.current() else {
            return Moderation { verdict: EventStatus::Active, posterior: None };
        };
        let p = c.spam_posterior(&format!("{} {}", e.title, e.description));
        let verdict = if p >= self.threshold { EventStatus::FlaggedSpam } else { EventStatus::Active };
        Moderation { verdict, posterior: Some(p) }
    }
}
