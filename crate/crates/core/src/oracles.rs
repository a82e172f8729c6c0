//! The attacker's view of the world.
//!
//! A [`TargetOracle`] wraps the attacked model (or an ensemble) behind a
//! strict [`QueryLedger`]: every forward pass costs one query, whatever is
//! read from it. A [`SubstituteOracle`] wraps the attacker's local model and
//! hands out input gradients for free.

use crate::error::{Error, Result};
use crate::models::{argmax, cross_entropy_of, Differentiable, Scorer};
use crate::rng::Rng;
use crate::tensor::{gaussian_like, Image, Perturbation, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryLedger {
    used: u64,
    budget: Option<u64>,
}

impl QueryLedger {
    pub fn new(budget: u64) -> Self {
        QueryLedger { used: 0, budget: Some(budget) }
    }

    pub fn unlimited() -> Self {
        QueryLedger { used: 0, budget: None }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn remaining(&self) -> Option<u64> {
        self.budget.map(|b| b - self.used)
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining() == Some(0)
    }

    fn charge(&mut self) -> Result<()> {
        if let Some(budget) = self.budget {
            if self.used >= budget {
                return Err(Error::BudgetExhausted { budget });
            }
        }
        self.used += 1;
        Ok(())
    }
}

/// Class probabilities from one target query.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores(Vec<f64>);

impl Scores {
    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    /// Argmax, ties to the lowest class index.
    pub fn label(&self) -> usize {
        argmax(&self.0)
    }

    pub fn loss(&self, label: usize) -> f64 {
        cross_entropy_of(&self.0, label)
    }
}

pub struct TargetOracle<'m> {
    members: Vec<&'m dyn Scorer>,
    ledger: QueryLedger,
    f32_inputs: bool,
}

impl<'m> TargetOracle<'m> {
    pub fn new(model: &'m dyn Scorer, ledger: QueryLedger) -> Self {
        TargetOracle { members: vec![model], ledger, f32_inputs: false }
    }

    /// Averages the members' probabilities. All members must agree on input
    /// length and class count.
    pub fn ensemble(members: Vec<&'m dyn Scorer>, ledger: QueryLedger) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::invalid("empty ensemble"))?;
        let (len, classes) = (first.input_shape().len(), first.classes());
        if members.iter().any(|m| m.input_shape().len() != len || m.classes() != classes) {
            return Err(Error::invalid("ensemble members disagree on input or class count"));
        }
        Ok(TargetOracle { members, ledger, f32_inputs: false })
    }

    /// Rounds every queried image to `f32` before the forward pass, so an
    /// image saved in the tensor file format is judged exactly as it was
    /// during the attack.
    pub fn with_f32_inputs(mut self) -> Self {
        self.f32_inputs = true;
        self
    }

    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    pub fn classes(&self) -> usize {
        self.members[0].classes()
    }

    pub fn input_shape(&self) -> Shape {
        self.members[0].input_shape()
    }

    /// One counted forward pass.
    pub fn query_scores(&mut self, x: &Image) -> Result<Scores> {
        self.input_shape().check_len(x.len())?;
        self.ledger.charge()?;
        self.evaluate(x).map(Scores)
    }

    pub fn query_label(&mut self, x: &Image) -> Result<usize> {
        self.query_scores(x).map(|s| s.label())
    }

    pub fn query_loss(&mut self, x: &Image, label: usize) -> Result<f64> {
        if label >= self.classes() {
            return Err(Error::LabelOutOfRange { label, classes: self.classes() });
        }
        self.query_scores(x).map(|s| s.loss(label))
    }

    fn evaluate(&self, x: &Image) -> Result<Vec<f64>> {
        let rounded;
        let x = if self.f32_inputs {
            rounded = x.to_f32_precision();
            &rounded
        } else {
            x
        };
        if let [single] = self.members.as_slice() {
            return single.probabilities(x.as_slice());
        }
        let mut mean = vec![0.0; self.classes()];
        for m in &self.members {
            for (acc, p) in mean.iter_mut().zip(m.probabilities(x.as_slice())?) {
                *acc += p;
            }
        }
        let n = self.members.len() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        Ok(mean)
    }
}

#[derive(Clone, Copy)]
pub struct SubstituteOracle<'m> {
    model: &'m dyn Differentiable,
}

impl<'m> SubstituteOracle<'m> {
    pub fn new(model: &'m dyn Differentiable) -> Self {
        SubstituteOracle { model }
    }

    pub fn input_shape(&self) -> Shape {
        self.model.input_shape()
    }

    /// Gradient of the substitute's cross-entropy at `point`, which may lie
    /// outside the pixel range. Not counted against any budget.
    pub fn gradient(&self, point: &[f64], label: usize) -> Result<Perturbation> {
        let shape = self.input_shape();
        shape.check_len(point.len())?;
        Perturbation::new(shape, self.model.loss_gradient(point, label)?)
    }

    /// Mean gradient over `samples` Gaussian-jittered copies of `point`.
    /// With `s == 0` all copies coincide and this is exactly
    /// [`gradient`](Self::gradient).
    pub fn smoothed_gradient(
        &self,
        point: &[f64],
        label: usize,
        s: f64,
        samples: usize,
        rng: &mut Rng,
    ) -> Result<Perturbation> {
        if samples == 0 {
            return Err(Error::invalid("smoothing needs at least one sample"));
        }
        if !(s >= 0.0) {
            return Err(Error::invalid(format!("noise std must be non-negative, got {s}")));
        }
        if s == 0.0 {
            return self.gradient(point, label);
        }
        let shape = self.input_shape();
        let mut sum = vec![0.0; shape.len()];
        for _ in 0..samples {
            let noise = gaussian_like(shape, s, rng)?;
            let jittered: Vec<f64> = point.iter().zip(noise.as_slice()).map(|(a, b)| a + b).collect();
            for (acc, g) in sum.iter_mut().zip(self.gradient(&jittered, label)?.as_slice()) {
                *acc += g;
            }
        }
        let n = samples as f64;
        Perturbation::new(shape, sum.into_iter().map(|v| v / n).collect())
    }
}
