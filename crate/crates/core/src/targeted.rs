//! Targeted Curls & Whey.
//!
//! Untargeted Curls starts at the clean image and walks outward. A targeted
//! attack additionally knows an image `x_t` that the target already puts in
//! the wanted class, so it starts from two places at once:
//!
//! 1. **Interpolation seed.** Bisect along the straight line from `x` to
//!    `x_t` for the point nearest `x` that still lands in the target class.
//! 2. **Boosted Curls.** Take one substitute step toward the target class,
//!    then run Curls rounds from there with the targeted success test.
//!
//! The closer of the two is then squeezed by Whey.

use serde::{Deserialize, Serialize};

use crate::attack::{budgeted, AttackOutcome, Goal};
use crate::curls::{start_progress, CurlsConfig, CurlsRun, MeanDirection};
use crate::error::{Error, Result};
use crate::oracles::{SubstituteOracle, TargetOracle};
use crate::rng::Rng;
use crate::tensor::{l2_distance, step_along, unit_direction, Image};
use crate::whey::{polish, WheyConfig};

/// A source class and a distinct class to push it into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetedGoal {
    original: usize,
    target: usize,
}

impl TargetedGoal {
    pub fn new(original: usize, target: usize) -> Result<Self> {
        if original == target {
            return Err(Error::invalid(format!("target class {target} equals the original class")));
        }
        Ok(TargetedGoal { original, target })
    }

    pub fn original(&self) -> usize {
        self.original
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn goal(&self) -> Goal {
        Goal::Targeted { target: self.target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetedConfig {
    /// Bisection queries spent on the interpolation seed.
    pub seed_steps: usize,
    /// How many other classes each image is attacked into.
    pub targets_per_image: usize,
}

impl Default for TargetedConfig {
    fn default() -> Self {
        TargetedConfig { seed_steps: 8, targets_per_image: 5 }
    }
}

/// Bisects `s` in `(1 - s) * x + s * x_t`, keeping the far side in the goal
/// class. Returns the closest confirmed point (or `x_t` itself) and its `s`.
/// `x_t` is assumed to satisfy the goal already.
pub fn interpolation_seed(
    x: &Image,
    x_t: &Image,
    goal: Goal,
    target: &mut TargetOracle<'_>,
    steps: usize,
) -> Result<(Image, f64)> {
    let shape = x.shape();
    shape.check_len(x_t.len())?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = x_t.clone();
    for _ in 0..steps {
        let s = (lo + hi) / 2.0;
        let mix: Vec<f64> = x.as_slice().iter().zip(x_t.as_slice()).map(|(a, b)| (1.0 - s) * a + s * b).collect();
        let candidate = Image::clamped(shape, mix)?;
        match budgeted(goal.check(target, &candidate))? {
            None => break,
            Some(true) => {
                hi = s;
                best = candidate;
            }
            Some(false) => lo = s,
        }
    }
    Ok((best, hi))
}

/// One substitute step from `x` toward class `goal.gradient_label()`,
/// clipped to the `eps` box. The gradient is read at `anchor` (the
/// interpolation seed), not at `x`.
pub fn targeted_boost_step(
    x: &Image,
    goal: Goal,
    anchor: &Image,
    sub: &SubstituteOracle<'_>,
    alpha: f64,
    eps: f64,
) -> Result<Image> {
    let g = sub.gradient(anchor.as_slice(), goal.gradient_label())?;
    step_along(x, &unit_direction(&g), goal.progress_sign() * alpha, x, eps)
}

/// Full targeted pipeline for one `(x, target class)` pair.
#[allow(clippy::too_many_arguments)]
pub fn targeted_attack(
    x: &Image,
    x_t: &Image,
    goal: TargetedGoal,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    curls: &CurlsConfig,
    whey: &WheyConfig,
    cfg: &TargetedConfig,
    rng: &mut Rng,
) -> Result<AttackOutcome> {
    curls.validate()?;
    whey.validate()?;
    let used = target.ledger().used();
    let goal = goal.goal();
    let mut out = AttackOutcome::default();

    let (seed, _) = interpolation_seed(x, x_t, goal, target, cfg.seed_steps)?;
    out.seed_distance = Some(l2_distance(x, &seed)?);
    let start = targeted_boost_step(x, goal, &seed, sub, curls.step_size(), curls.eps0)?;
    out.set_best(x, seed)?;

    match start_progress(goal, target, &start)? {
        None => out.exhausted = true,
        Some(progress) => {
            let run = CurlsRun { x, start: &start, goal, sub, cfg: curls, start_progress: progress };
            let mut md = MeanDirection::new(x.shape());
            run.attack(target, &mut md, rng, &mut out)?;
        }
    }
    polish(x, goal, target, whey, rng, &mut out)?;
    Ok(out.finish(target, used))
}
