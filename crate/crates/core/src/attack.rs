//! Types shared by every attack: what counts as success, and what an attack
//! hands back.

use crate::curls::RoundTrace;
use crate::error::Result;
use crate::oracles::{Scores, TargetOracle};
use crate::tensor::{l2_distance, Image};

/// What the attacker is trying to achieve against the target model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    /// Any label other than `original`.
    Untargeted { original: usize },
    /// Exactly `target`.
    Targeted { target: usize },
}

impl Goal {
    pub fn is_success(&self, label: usize) -> bool {
        match *self {
            Goal::Untargeted { original } => label != original,
            Goal::Targeted { target } => label == target,
        }
    }

    /// The label whose substitute loss drives the gradient.
    pub fn gradient_label(&self) -> usize {
        match *self {
            Goal::Untargeted { original } => original,
            Goal::Targeted { target } => target,
        }
    }

    /// Sign to apply to the loss gradient to move toward success: ascend the
    /// original-class loss, descend the target-class loss.
    pub fn progress_sign(&self) -> f64 {
        match self {
            Goal::Untargeted { .. } => 1.0,
            Goal::Targeted { .. } => -1.0,
        }
    }

    /// Scalar that grows as the target model moves toward success.
    pub fn progress(&self, scores: &Scores) -> f64 {
        self.progress_sign() * scores.loss(self.gradient_label())
    }

    /// One counted label query.
    pub fn check(&self, target: &mut TargetOracle<'_>, x: &Image) -> Result<bool> {
        target.query_label(x).map(|label| self.is_success(label))
    }
}

#[derive(Debug, Clone, Default)]
pub struct AttackOutcome {
    /// Best confirmed adversarial example, if any.
    pub adversarial: Option<Image>,
    /// L2 distance of `adversarial` from the original.
    pub distance: Option<f64>,
    /// Target queries spent.
    pub queries: u64,
    /// Whether the attack stopped because the budget ran out.
    pub exhausted: bool,
    /// Iterates of single-trajectory attacks, excluding the start point.
    pub path: Vec<Image>,
    /// Curls rounds, in order.
    pub rounds: Vec<RoundTrace>,
    /// Targeted attacks only: distance of the interpolation seed.
    pub seed_distance: Option<f64>,
}

impl AttackOutcome {
    pub fn success(&self) -> bool {
        self.adversarial.is_some()
    }

    pub(crate) fn set_best(&mut self, original: &Image, candidate: Image) -> Result<()> {
        let d = l2_distance(original, &candidate)?;
        if self.distance.is_none_or(|best| d < best) {
            self.distance = Some(d);
            self.adversarial = Some(candidate);
        }
        Ok(())
    }

    pub(crate) fn finish(mut self, target: &TargetOracle<'_>, start_used: u64) -> Self {
        self.queries = target.ledger().used() - start_used;
        self
    }
}

/// Splits a query result into "keep going" and "budget ran out"; other
/// errors propagate.
pub(crate) fn budgeted<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_budget_exhausted() => Ok(None),
        Err(e) => Err(e),
    }
}
