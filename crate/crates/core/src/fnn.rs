//! Fully connected feedforward network trained one element at a time.
//!
//! Sigmoid units on every layer, squared error against a one-hot target,
//! plain SGD.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{argmax, check_dim, training_label, ClassId, Classifier, Instance, REAL_BYTES};

#[derive(Debug, Clone, PartialEq)]
pub struct FnnParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
}

impl Default for FnnParams {
    fn default() -> Self {
        FnnParams {
            hidden: vec![30],
            learning_rate: 0.01,
        }
    }
}

impl FnnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layers need at least one unit"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
            sigmoid(z)
        }));
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    learning_rate: f64,
}

impl Network {
    /// Network with all weights and biases zero. `sizes` lists every layer
    /// width from input to output.
    pub fn zeros(sizes: &[usize], learning_rate: f64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config("a network needs at least two non-empty layers"));
        }
        Ok(Network {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            learning_rate,
        })
    }

    /// Weights uniform in ±1/√fan_in.
    pub fn random(sizes: &[usize], learning_rate: f64, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, learning_rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Activations of every layer, input included.
    fn activations(&self, features: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(features.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().expect("non-empty"), &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_width(), features)?;
        Ok(self.activations(features).pop().expect("non-empty"))
    }

    /// ½ Σ (output − one_hot(label))².
    pub fn loss(&self, features: &[f64], label: ClassId) -> Result<f64> {
        let out = self.forward(features)?;
        Ok(out
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let t = if k == label { 1.0 } else { 0.0 };
                0.5 * (o - t) * (o - t)
            })
            .sum())
    }

    /// Loss gradient, flattened in the order of [`Network::parameters`].
    pub fn gradient(&self, features: &[f64], label: ClassId) -> Result<Vec<f64>> {
        check_dim(self.input_width(), features)?;
        let acts = self.activations(features);
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let out = acts.last().expect("non-empty");
        // dL/dz at the output layer.
        let mut delta: Vec<f64> = out
            .iter()
            .enumerate()
            .map(|(k, &o)| {
                let t = if k == label { 1.0 } else { 0.0 };
                (o - t) * o * (1.0 - o)
            })
            .collect();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[li];
            let mut g = Vec::with_capacity(layer.weights.len() + layer.bias.len());
            for d in &delta {
                g.extend(input.iter().map(|x| d * x));
            }
            g.extend(delta.iter().copied());
            grads.push(g);
            if li > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= a * (1.0 - a);
                }
                delta = prev;
            }
        }
        grads.reverse();
        Ok(grads.concat())
    }

    /// All weights then biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::usage("parameter vector has the wrong length"));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// One SGD step on a single labelled example.
    pub fn backprop(&mut self, features: &[f64], label: ClassId) -> Result<()> {
        if label >= self.output_width() {
            return Err(Error::usage(format!("label {label} has no output unit")));
        }
        let grad = self.gradient(features, label)?;
        let lr = self.learning_rate;
        let mut g = grad.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w -= lr * g.next().expect("gradient matches parameters");
            }
        }
        Ok(())
    }

    /// `epochs` passes over `sample`, reshuffled each epoch from `seed`.
    pub fn pretrain(&mut self, sample: &[Instance], epochs: usize, seed: u64) -> Result<()> {
        if sample.is_empty() {
            return Err(Error::usage("pretraining needs a non-empty sample"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..sample.len()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let x = &sample[i];
                let label = training_label(x, self.input_width(), self.output_width())?;
                self.backprop(&x.features, label)?;
            }
        }
        Ok(())
    }

    pub fn mean_loss(&self, sample: &[Instance]) -> Result<f64> {
        let mut total = 0.0;
        for x in sample {
            let label = training_label(x, self.input_width(), self.output_width())?;
            total += self.loss(&x.features, label)?;
        }
        Ok(total / sample.len().max(1) as f64)
    }
}

/// Online classifier wrapper around [`Network`].
#[derive(Debug, Clone)]
pub struct Fnn {
    net: Network,
}

impl Fnn {
    pub fn new(dim: usize, num_classes: usize, params: &FnnParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut sizes = vec![dim];
        sizes.extend(&params.hidden);
        sizes.push(num_classes);
        Ok(Fnn {
            net: Network::random(&sizes, params.learning_rate, seed)?,
        })
    }

    pub fn from_network(net: Network) -> Self {
        Fnn { net }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }
}

impl Classifier for Fnn {
    fn dimensionality(&self) -> usize {
        self.net.input_width()
    }

    fn num_classes(&self) -> usize {
        self.net.output_width()
    }

    fn predict(&self, features: &[f64]) -> Result<ClassId> {
        Ok(argmax(self.net.forward(features)?))
    }

    fn train(&mut self, instance: &Instance) -> Result<()> {
        let label = training_label(instance, self.net.input_width(), self.net.output_width())?;
        self.net.backprop(&instance.features, label)
    }

    fn memory_bytes(&self) -> usize {
        self.net.parameter_count() * REAL_BYTES
    }
}
