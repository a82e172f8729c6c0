use super::{Classifier, Dataset, Scorer};
use crate::baselines::fgsm_perturb;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Image;

pub const BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, learning_rate: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    /// Mean training loss of each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Plain minibatch SGD on cross-entropy.
pub fn train(
    model: Classifier,
    dataset: &Dataset,
    epochs: usize,
    learning_rate: f64,
    rng: &mut Rng,
) -> Result<(Classifier, TrainingSummary)> {
    run_sgd(model, dataset, epochs, learning_rate, None, rng)
}

/// SGD where every minibatch is paired with its FGSM counterpart at
/// strength `eps`, crafted against the model as it stands before the
/// batch update. Clean and adversarial halves are weighted equally.
pub fn train_adversarial(
    model: Classifier,
    dataset: &Dataset,
    epochs: usize,
    learning_rate: f64,
    eps: f64,
    rng: &mut Rng,
) -> Result<(Classifier, TrainingSummary)> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("adversarial training eps must be >= 0, got {eps}")));
    }
    run_sgd(model, dataset, epochs, learning_rate, Some(eps), rng)
}

fn run_sgd(
    mut model: Classifier,
    dataset: &Dataset,
    epochs: usize,
    learning_rate: f64,
    adversarial_eps: Option<f64>,
    rng: &mut Rng,
) -> Result<(Classifier, TrainingSummary)> {
    let samples = dataset.train();
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.input_shape().len() != dataset.shape().len() || model.classes() != dataset.classes() {
        return Err(Error::invalid("model and dataset disagree on shape or class count"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(BATCH_SIZE) {
            let scale = 1.0 / batch.len() as f64;
            let mut clean = model.zero_gradients();
            let mut loss = 0.0;
            for &i in batch {
                let (x, y) = &samples[i];
                loss += model.accumulate_param_gradient(x.as_slice(), *y, &mut clean);
            }
            let step = match adversarial_eps {
                None => scaled(clean, scale),
                Some(eps) => {
                    let mut adv = model.zero_gradients();
                    let mut adv_loss = 0.0;
                    for &i in batch {
                        let (x, y) = &samples[i];
                        let x_adv = fgsm_perturb(&model, x, *y, eps)?;
                        adv_loss += model.accumulate_param_gradient(x_adv.as_slice(), *y, &mut adv);
                    }
                    loss = 0.5 * loss + 0.5 * adv_loss;
                    blend_halves(scaled(clean, scale), scaled(adv, scale))
                }
            };
            for (layer, (gw, gb)) in model.layers_mut().iter_mut().zip(&step) {
                let (w, b) = layer.params_mut();
                for (p, g) in w.iter_mut().zip(gw) {
                    *p -= learning_rate * g;
                }
                for (p, g) in b.iter_mut().zip(gb) {
                    *p -= learning_rate * g;
                }
            }
            epoch_loss += loss;
        }
        epoch_losses.push(epoch_loss / samples.len() as f64);
    }
    let summary = TrainingSummary {
        epoch_losses,
        train_accuracy: accuracy(&model, dataset.train())?,
        test_accuracy: accuracy(&model, dataset.test())?,
    };
    Ok((model, summary))
}

type Grads = Vec<(Vec<f64>, Vec<f64>)>;

fn scaled(mut grads: Grads, factor: f64) -> Grads {
    for (w, b) in &mut grads {
        w.iter_mut().chain(b.iter_mut()).for_each(|g| *g *= factor);
    }
    grads
}

fn blend_halves(mut a: Grads, b: Grads) -> Grads {
    for ((aw, ab), (bw, bb)) in a.iter_mut().zip(&b) {
        for (x, y) in aw.iter_mut().zip(bw).chain(ab.iter_mut().zip(bb)) {
            *x = 0.5 * *x + 0.5 * y;
        }
    }
    a
}

/// Fraction of `samples` the scorer labels correctly (0 for an empty slice).
pub fn accuracy(model: &dyn Scorer, samples: &[(Image, usize)]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (x, y) in samples {
        if super::argmax(&model.probabilities(x.as_slice())?) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
