use serde::{Deserialize, Serialize};

use super::{Classifier, DenseExample, Label, SpamError};
use crate::Scalar;

/// Linear decision function `f(x) = w·x + b`; positive means spam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptronModel<S> {
    pub w: Vec<S>,
    pub b: S,
}

impl<S: Scalar> PerceptronModel<S> {
    pub fn zeros(dim: usize) -> Self {
        PerceptronModel { w: vec![S::zero(); dim], b: S::zero() }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn decision(&self, x: &[S]) -> S {
        self.w.iter().zip(x).fold(self.b, |acc, (w, x)| acc + *w * *x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptronConfig<S> {
    pub epochs: usize,
    pub learning_rate: S,
    /// When false the bias stays at zero (homogeneous perceptron).
    pub fit_bias: bool,
}

impl<S: Scalar> PerceptronConfig<S> {
    pub fn new(epochs: usize, learning_rate: S) -> Self {
        PerceptronConfig { epochs, learning_rate, fit_bias: true }
    }
}

/// Indices of misclassified examples, one list per epoch run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainTrace {
    pub mistakes: Vec<Vec<usize>>,
}

impl TrainTrace {
    /// True when the last epoch run made no mistakes.
    pub fn converged(&self) -> bool {
        self.mistakes.last().is_some_and(Vec::is_empty)
    }

    pub fn epochs_run(&self) -> usize {
        self.mistakes.len()
    }
}

/// Mistake-driven training from `w = 0, b = 0`, visiting examples in
/// corpus order and stopping after the first clean epoch.
pub fn perceptron_train<S: Scalar>(
    corpus: &[DenseExample<S>],
    cfg: PerceptronConfig<S>,
) -> Result<(PerceptronModel<S>, TrainTrace), SpamError> {
    let first = corpus.first().ok_or(SpamError::EmptyCorpus)?;
    let dim = first.x.len();
    if let Some(bad) = corpus.iter().find(|e| e.x.len() != dim) {
        return Err(SpamError::Dimension { expected: dim, got: bad.x.len() });
    }
    let mut model = PerceptronModel::zeros(dim);
    let mut trace = TrainTrace::default();
    for _ in 0..cfg.epochs {
        let mut mistakes = Vec::new();
        for (i, ex) in corpus.iter().enumerate() {
            let y = S::from_i8(ex.label.sign()).unwrap();
            if y * model.decision(&ex.x) <= S::zero() {
                let step = cfg.learning_rate * y;
                for (w, x) in model.w.iter_mut().zip(&ex.x) {
                    *w += step * *x;
                }
                if cfg.fit_bias {
                    model.b += step;
                }
                mistakes.push(i);
            }
        }
        let clean = mistakes.is_empty();
        trace.mistakes.push(mistakes);
        if clean {
            break;
        }
    }
    Ok((model, trace))
}

/// Sign of the decision function; zero counts as ham.
pub fn perceptron_classify<S: Scalar>(model: &PerceptronModel<S>, x: &[S]) -> Label {
    if model.decision(x) > S::zero() {
        Label::Spam
    } else {
        Label::Ham
    }
}

impl<S: Scalar> Classifier for PerceptronModel<S> {
    type Input = [S];
    fn predict(&self, x: &[S]) -> Label {
        perceptron_classify(self, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(x: &[f64], label: Label) -> DenseExample<f64> {
        DenseExample { x: x.to_vec(), label }
    }

    #[test]
    fn separable_pair_converges() {
        let corpus = vec![ex(&[2.0, 0.0], Label::Spam), ex(&[-2.0, 0.0], Label::Ham)];
        let (m, trace) = perceptron_train(&corpus, PerceptronConfig::new(100, 1.0)).unwrap();
        assert!(trace.converged());
        for e in &corpus {
            assert_eq!(perceptron_classify(&m, &e.x), e.label);
        }
    }

    #[test]
    fn zero_epochs_is_zero_model() {
        let corpus = vec![ex(&[1.0, 1.0], Label::Spam), ex(&[0.0, 1.0], Label::Ham)];
        let (m, trace) = perceptron_train(&corpus, PerceptronConfig::new(0, 1.0)).unwrap();
        assert_eq!(m, PerceptronModel::zeros(2));
        assert_eq!(trace.epochs_run(), 0);
    }

    #[test]
    fn classify_sign_rules() {
        let m = PerceptronModel { w: vec![0.0, 0.0], b: 1.0 };
        assert_eq!(perceptron_classify(&m, &[123.0, -4.0]), Label::Spam);
        let m = PerceptronModel { w: vec![1.0, 0.0], b: 0.0 };
        assert_eq!(m.decision(&[-3.0, 5.0]), -3.0);
        assert_eq!(perceptron_classify(&m, &[-3.0, 5.0]), Label::Ham);
        assert_eq!(perceptron_classify(&m, &[0.0, 5.0]), Label::Ham);
    }

    #[test]
    fn errors() {
        assert_eq!(perceptron_train::<f64>(&[], PerceptronConfig::new(1, 1.0)), Err(SpamError::EmptyCorpus));
        let corpus = vec![ex(&[1.0], Label::Spam), ex(&[1.0, 2.0], Label::Ham)];
        assert!(matches!(perceptron_train(&corpus, PerceptronConfig::new(1, 1.0)), Err(SpamError::Dimension { .. })));
    }

    #[test]
    fn homogeneous_scale_invariance() {
        // bias folded into a constant input column, scaled with the rest
        let raw = [
            ([1.0, 3.0], Label::Spam),
            ([2.0, -1.0], Label::Ham),
            ([-1.5, 2.0], Label::Spam),
            ([0.5, -2.5], Label::Ham),
        ];
        let build =
            |c: f64| -> Vec<DenseExample<f64>> { raw.iter().map(|(x, l)| ex(&[c * x[0], c * x[1], c], *l)).collect() };
        let cfg = PerceptronConfig { epochs: 50, learning_rate: 1.0, fit_bias: false };
        let (_, base) = perceptron_train(&build(1.0), cfg).unwrap();
        for c in [0.125, 0.5, 2.0, 8.0] {
            let (_, scaled) = perceptron_train(&build(c), cfg).unwrap();
            assert_eq!(scaled, base, "c = {c}");
        }
    }

    #[test]
    fn bias_breaks_plain_scaling() {
        // with a free bias, shrinking the inputs changes the mistake sequence
        let build = |c: f64| vec![ex(&[2.0 * c], Label::Spam), ex(&[-2.0 * c], Label::Ham)];
        let cfg = PerceptronConfig::new(50, 1.0);
        let (_, a) = perceptron_train(&build(1.0), cfg).unwrap();
        let (_, b) = perceptron_train(&build(0.1), cfg).unwrap();
        assert_eq!(a.mistakes[0], vec![0]);
        assert_eq!(b.mistakes[0], vec![0, 1]);
    }

    #[test]
    fn f32_model() {
        let corpus = vec![
            DenseExample { x: vec![1.0f32, 1.0], label: Label::Spam },
            DenseExample { x: vec![-1.0f32, -1.0], label: Label::Ham },
        ];
        let (m, trace) = perceptron_train(&corpus, PerceptronConfig::new(10, 0.5f32)).unwrap();
        assert!(trace.converged());
        assert_eq!(m.predict(&[3.0, 2.0]), Label::Spam);
    }
}
