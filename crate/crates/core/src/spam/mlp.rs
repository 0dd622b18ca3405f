use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, Label, SpamError};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Sigmoid => S::one() / (S::one() + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative<S: Scalar>(self, a: S) -> S {
        match self {
            Activation::Sigmoid => a * (S::one() - a),
            Activation::Identity => S::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Binary cross-entropy; targets in `[0, 1]`.
    CrossEntropy,
    /// `0.5 * (p - y)^2`.
    MeanSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<S> {
    /// `weights[j][i]`: input `i` to unit `j`.
    pub weights: Vec<Vec<S>>,
    pub bias: Vec<S>,
    pub activation: Activation,
}

impl<S: Scalar> Layer<S> {
    fn random(inputs: usize, outputs: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let mut draw = || S::lit(rng.gen_range(-0.5..=0.5));
        let weights = (0..outputs).map(|_| (0..inputs).map(|_| draw()).collect()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Layer { weights, bias, activation }
    }

    fn forward(&self, x: &[S]) -> Vec<S> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(x).fold(*b, |acc, (w, v)| acc + *w * *v);
                self.activation.apply(z)
            })
            .collect()
    }

    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }
}

/// Network with one sigmoid hidden layer and one scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<S> {
    pub layers: Vec<Layer<S>>,
    pub loss: Loss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig<S> {
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: S,
    pub seed: u64,
    pub output: Activation,
    pub loss: Loss,
}

impl<S: Scalar> MlpConfig<S> {
    /// Sigmoid output with cross-entropy: the classifier configuration.
    pub fn classifier(hidden_size: usize, epochs: usize, learning_rate: S, seed: u64) -> Self {
        MlpConfig { hidden_size, epochs, learning_rate, seed, output: Activation::Sigmoid, loss: Loss::CrossEntropy }
    }

    /// Linear output with squared error: the regression configuration.
    pub fn regressor(hidden_size: usize, epochs: usize, learning_rate: S, seed: u64) -> Self {
        MlpConfig { hidden_size, epochs, learning_rate, seed, output: Activation::Identity, loss: Loss::MeanSquared }
    }
}

impl<S: Scalar> MlpModel<S> {
    /// Seeded initialisation, weights uniform in `[-0.5, 0.5]`.
    pub fn init(inputs: usize, cfg: &MlpConfig<S>) -> Result<Self, SpamError> {
        if cfg.hidden_size == 0 {
            return Err(SpamError::HiddenSize);
        }
        if cfg.loss == Loss::CrossEntropy && cfg.output != Activation::Sigmoid {
            return Err(SpamError::LossActivation);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let hidden = Layer::random(inputs, cfg.hidden_size, Activation::Sigmoid, &mut rng);
        let output = Layer::random(cfg.hidden_size, 1, cfg.output, &mut rng);
        Ok(MlpModel { layers: vec![hidden, output], loss: cfg.loss })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[S]) -> Vec<Vec<S>> {
        let mut acts = vec![x.to_vec()];
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    pub fn predict_value(&self, x: &[S]) -> S {
        self.activations(x).pop().unwrap()[0]
    }

    fn sample_loss(&self, p: S, y: S) -> S {
        match self.loss {
            Loss::CrossEntropy => {
                let eps = S::epsilon();
                let p = p.max(eps).min(S::one() - eps);
                -(y * p.ln() + (S::one() - y) * (S::one() - p).ln())
            }
            Loss::MeanSquared => S::lit(0.5) * (p - y).powi(2),
        }
    }

    /// Mean loss over `data`.
    pub fn loss(&self, data: &[(Vec<S>, S)]) -> S {
        let n = S::from_usize(data.len().max(1)).unwrap();
        data.iter().map(|(x, y)| self.sample_loss(self.predict_value(x), *y)).sum::<S>() / n
    }

    /// Gradient of the mean loss, shaped like `layers`.
    pub fn gradients(&self, data: &[(Vec<S>, S)]) -> Vec<Layer<S>> {
        let mut grads: Vec<Layer<S>> = self
            .layers
            .iter()
            .map(|l| Layer {
                weights: vec![vec![S::zero(); l.inputs()]; l.outputs()],
                bias: vec![S::zero(); l.outputs()],
                activation: l.activation,
            })
            .collect();
        let n = S::from_usize(data.len().max(1)).unwrap();
        for (x, y) in data {
            let acts = self.activations(x);
            let out_layer = self.layers.last().unwrap();
            let p = acts.last().unwrap()[0];
            let delta_out = match (self.loss, out_layer.activation) {
                (Loss::CrossEntropy, Activation::Sigmoid) => p - *y,
                (_, act) => (p - *y) * act.derivative(p),
            };
            let mut delta = vec![delta_out];
            for li in (0..self.layers.len()).rev() {
                let input = &acts[li];
                let g = &mut grads[li];
                for (j, d) in delta.iter().enumerate() {
                    g.bias[j] += *d / n;
                    for (i, a) in input.iter().enumerate() {
                        g.weights[j][i] += *d * *a / n;
                    }
                }
                if li > 0 {
                    let below = &self.layers[li - 1];
                    delta = (0..input.len())
                        .map(|i| {
                            let back: S =
                                delta.iter().enumerate().map(|(j, d)| *d * self.layers[li].weights[j][i]).sum();
                            back * below.activation.derivative(input[i])
                        })
                        .collect();
                }
            }
        }
        grads
    }

    /// One full-batch gradient-descent step.
    pub fn step(&mut self, data: &[(Vec<S>, S)], learning_rate: S) {
        let grads = self.gradients(data);
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (row, grow) in layer.weights.iter_mut().zip(g.weights) {
                for (w, dw) in row.iter_mut().zip(grow) {
                    *w -= learning_rate * dw;
                }
            }
            for (b, db) in layer.bias.iter_mut().zip(g.bias) {
                *b -= learning_rate * db;
            }
        }
    }
}

/// Full-batch backpropagation training. `data` pairs inputs with scalar
/// targets (0/1 for classification).
pub fn mlp_train<S: Scalar>(data: &[(Vec<S>, S)], cfg: &MlpConfig<S>) -> Result<MlpModel<S>, SpamError> {
    let first = data.first().ok_or(SpamError::EmptyCorpus)?;
    let dim = first.0.len();
    if let Some(bad) = data.iter().find(|(x, _)| x.len() != dim) {
        return Err(SpamError::Dimension { expected: dim, got: bad.0.len() });
    }
    let mut model = MlpModel::init(dim, cfg)?;
    for _ in 0..cfg.epochs {
        model.step(data, cfg.learning_rate);
    }
    Ok(model)
}

impl<S: Scalar> Classifier for MlpModel<S> {
    type Input = [S];
    fn predict(&self, x: &[S]) -> Label {
        if self.predict_value(x) > S::lit(0.5) {
            Label::Spam
        } else {
            Label::Ham
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn xor() -> Vec<(Vec<f64>, f64)> {
        vec![(vec![0.0, 0.0], 0.0), (vec![0.0, 1.0], 1.0), (vec![1.0, 0.0], 1.0), (vec![1.0, 1.0], 0.0)]
    }

    #[test]
    fn zero_epochs_is_initialisation() {
        let cfg = MlpConfig::classifier(4, 0, 0.5, 11);
        let trained = mlp_train(&xor(), &cfg).unwrap();
        assert_eq!(trained, MlpModel::init(2, &cfg).unwrap());
        let w = &trained.layers[0].weights;
        assert!(w.iter().flatten().all(|v| (-0.5..=0.5).contains(v)));
    }

    #[test]
    fn hidden_size_must_be_positive() {
        assert_eq!(mlp_train(&xor(), &MlpConfig::classifier(0, 1, 0.5, 1)), Err(SpamError::HiddenSize));
    }

    #[test]
    fn learns_xor() {
        let model = mlp_train(&xor(), &MlpConfig::classifier(4, 10_000, 1.0, 7)).unwrap();
        for (x, y) in xor() {
            let want = if y > 0.5 { Label::Spam } else { Label::Ham };
            assert_eq!(model.predict(&x), want, "{x:?}");
        }
    }

    #[test]
    fn small_steps_do_not_increase_loss() {
        let data = xor();
        let mut model = MlpModel::init(2, &MlpConfig::classifier(4, 0, 0.01, 3)).unwrap();
        let mut last = model.loss(&data);
        for _ in 0..2000 {
            model.step(&data, 0.01);
            let now = model.loss(&data);
            assert!(now <= last, "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let cfg = MlpConfig::regressor(3, 50, 0.1, 42);
        let data = vec![(vec![0.1, 0.2], 0.3), (vec![0.5, -0.1], 0.9)];
        assert_eq!(mlp_train(&data, &cfg).unwrap(), mlp_train(&data, &cfg).unwrap());
    }

    #[test]
    fn cross_entropy_needs_sigmoid() {
        let cfg = MlpConfig { output: Activation::Identity, ..MlpConfig::classifier(2, 1, 0.1, 1) };
        assert_eq!(MlpModel::<f64>::init(2, &cfg), Err(SpamError::LossActivation));
    }
}
