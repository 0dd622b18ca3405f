use serde::{Deserialize, Serialize};

use super::{Classifier, Label};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_spam: usize,
    pub false_spam: usize,
    pub true_ham: usize,
    pub false_ham: usize,
}

impl Confusion {
    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Spam, Label::Spam) => self.true_spam += 1,
            (Label::Spam, Label::Ham) => self.false_spam += 1,
            (Label::Ham, Label::Ham) => self.true_ham += 1,
            (Label::Ham, Label::Spam) => self.false_ham += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_spam + self.false_spam + self.true_ham + self.false_ham
    }
}

/// Spam filter quality measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Recall on the spam class.
    pub efficiency: f64,
    pub accuracy: f64,
    /// Ham classified as spam over all ham.
    pub false_positive_rate: f64,
    pub confusion: Confusion,
}

impl From<Confusion> for EvalReport {
    fn from(c: Confusion) -> Self {
        // an empty class contributes 0 rather than NaN
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        EvalReport {
            efficiency: ratio(c.true_spam, c.true_spam + c.false_ham),
            accuracy: ratio(c.true_spam + c.true_ham, c.total()),
            false_positive_rate: ratio(c.false_spam, c.false_spam + c.true_ham),
            confusion: c,
        }
    }
}

pub fn evaluate<'a, C, I>(classifier: &C, test: I) -> EvalReport
where
    C: Classifier,
    C::Input: 'a,
    I: IntoIterator<Item = (&'a C::Input, Label)>,
{
    let mut c = Confusion::default();
    for (input, actual) in test {
        c.record(classifier.predict(input), actual);
    }
    c.into()
}
