//! Small differentiable classifiers with hand-written backward passes.
//!
//! A [`Classifier`] is a chain of affine layers (dense or convolutional)
//! with a rectifier between consecutive layers and a softmax on top. The
//! rectifier's subgradient at zero is taken as zero.

mod dataset;
mod layers;
mod serialize;
mod train;
mod zoo;

pub use dataset::{Dataset, DatasetConfig, Split};
pub use layers::{Conv2d, Dense, Layer};
pub use serialize::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{train, train_adversarial, TrainConfig, TrainingSummary};
pub use zoo::{Architecture, ZOO_ARCHITECTURES};

use crate::error::{Error, Result};
use crate::tensor::{Image, Shape};

/// Probabilities are clamped to this before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Anything that maps an input to class probabilities.
pub trait Scorer: Send + Sync {
    fn input_shape(&self) -> Shape;
    fn classes(&self) -> usize;
    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// A scorer that can also differentiate its cross-entropy with respect to
/// the input.
pub trait Differentiable: Scorer {
    fn loss_gradient(&self, x: &[f64], label: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    input: Shape,
    classes: usize,
    layers: Vec<Layer>,
}

/// Intermediate values of one forward pass, kept for backprop.
struct Activations {
    /// `inputs[l]` is what layer `l` consumed (post-rectifier).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last entry is the logits.
    pre: Vec<Vec<f64>>,
}

impl Classifier {
    pub fn new(input: Shape, classes: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a classifier needs at least one layer"));
        }
        if classes < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        let mut width = input.len();
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
            if layer.input_len() != width {
                return Err(Error::CorruptLayer {
                    layer: i,
                    reason: format!("consumes {} values but receives {width}", layer.input_len()),
                });
            }
            width = layer.output_len();
        }
        if width != classes {
            return Err(Error::CorruptLayer {
                layer: layers.len() - 1,
                reason: format!("emits {width} logits for {classes} classes"),
            });
        }
        Ok(Classifier { input, classes, layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        self.input.check_len(x.len())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label < self.classes {
            Ok(())
        } else {
            Err(Error::LabelOutOfRange { label, classes: self.classes })
        }
    }

    fn run(&self, x: &[f64]) -> Activations {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&current);
            inputs.push(current);
            current = if i + 1 < self.layers.len() { relu(&z) } else { Vec::new() };
            pre.push(z);
        }
        Activations { inputs, pre }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x).pre.pop().expect("at least one layer"))
    }

    pub fn forward(&self, x: &Image) -> Result<Vec<f64>> {
        self.probabilities(x.as_slice())
    }

    /// `-ln p_y`, with `p_y` floored at [`PROB_FLOOR`].
    pub fn cross_entropy(&self, x: &Image, label: usize) -> Result<f64> {
        self.check_label(label)?;
        Ok(cross_entropy_of(&self.forward(x)?, label))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.probabilities(x)?))
    }

    /// Backward pass from `d loss / d logits`, returning the gradient with
    /// respect to the input.
    fn backprop_input(&self, acts: &Activations, mut grad: Vec<f64>) -> Vec<f64> {
        for l in (0..self.layers.len()).rev() {
            grad = self.layers[l].backward_input(&grad);
            if l > 0 {
                mask_relu(&mut grad, &acts.pre[l - 1]);
            }
        }
        grad
    }

    /// Adds the parameter gradient of the cross-entropy at `(x, label)` into
    /// `grads` and returns the loss.
    pub(crate) fn accumulate_param_gradient(&self, x: &[f64], label: usize, grads: &mut [(Vec<f64>, Vec<f64>)]) -> f64 {
        let acts = self.run(x);
        let probs = softmax(acts.pre.last().expect("logits"));
        let loss = cross_entropy_of(&probs, label);
        let mut grad = probs;
        grad[label] -= 1.0;
        for l in (0..self.layers.len()).rev() {
            let (gw, gb) = &mut grads[l];
            self.layers[l].accumulate(&acts.inputs[l], &grad, gw, gb);
            if l > 0 {
                grad = self.layers[l].backward_input(&grad);
                mask_relu(&mut grad, &acts.pre[l - 1]);
            }
        }
        loss
    }

    pub(crate) fn zero_gradients(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.layers.iter().map(|l| (vec![0.0; l.weights().len()], vec![0.0; l.bias().len()])).collect()
    }

    /// Smallest absolute hidden pre-activation at `x`. Finite differences are
    /// only trustworthy when this exceeds the probe step.
    pub fn kink_margin(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let acts = self.run(x);
        let hidden = &acts.pre[..acts.pre.len() - 1];
        Ok(hidden.iter().flatten().fold(f64::INFINITY, |m, v| m.min(v.abs())))
    }
}

impl Scorer for Classifier {
    fn input_shape(&self) -> Shape {
        self.input
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.logits(x).map(|z| softmax(&z))
    }
}

impl Differentiable for Classifier {
    fn loss_gradient(&self, x: &[f64], label: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_label(label)?;
        let acts = self.run(x);
        let mut grad = softmax(acts.pre.last().expect("logits"));
        grad[label] -= 1.0;
        Ok(self.backprop_input(&acts, grad))
    }
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

fn mask_relu(grad: &mut [f64], pre: &[f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn cross_entropy_of(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
