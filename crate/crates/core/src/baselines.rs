//! Reference gradient attacks in their L2 form: FGSM, I-FGSM, MI-FGSM and
//! vr-IGSM.
//!
//! Each replaces `sign(g)` with the whole-tensor unit direction
//! `g / ||g||_2` and keeps the per-pixel `Clip_{x,eps}` box. Iterative
//! variants query the target once per step and stop at the first success.

use serde::{Deserialize, Serialize};

use crate::attack::{budgeted, AttackOutcome, Goal};
use crate::error::{Error, Result};
use crate::models::Differentiable;
use crate::oracles::{SubstituteOracle, TargetOracle};
use crate::rng::Rng;
use crate::tensor::{step_along, unit_direction, Image, Perturbation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Per-pixel box radius.
    pub eps: f64,
    /// L2 length of each step.
    pub alpha: f64,
    #[serde(alias = "T")]
    pub steps: usize,
    /// Momentum decay (MI-FGSM).
    pub mu: f64,
    /// Smoothing noise std on the unit pixel scale (vr-IGSM).
    pub s: f64,
    /// Smoothing samples per step (vr-IGSM).
    #[serde(alias = "m")]
    pub samples: usize,
}

impl Default for BaselineConfig {
    /// The 200-query comparison setting: 20 x 10 iterations collapsed into
    /// one trajectory, step `1 / (2 * 10)`.
    fn default() -> Self {
        BaselineConfig { eps: 0.3, alpha: 0.05, steps: 200, mu: 1.0, s: 1.0 / 255.0, samples: 5 }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps > 0.0
            && self.alpha > 0.0
            && self.steps >= 1
            && self.mu >= 0.0
            && self.s >= 0.0
            && self.samples >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid baseline parameters: {self:?}")))
        }
    }
}

/// White-box FGSM image, no queries involved. Also used to augment
/// minibatches in adversarial training.
pub fn fgsm_perturb(model: &dyn Differentiable, x: &Image, y: usize, eps: f64) -> Result<Image> {
    let g = Perturbation::new(x.shape(), model.loss_gradient(x.as_slice(), y)?)?;
    step_along(x, &unit_direction(&g), eps, x, eps)
}

pub fn fgsm(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    eps: f64,
) -> Result<AttackOutcome> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("eps must be >= 0, got {eps}")));
    }
    let start = target.ledger().used();
    let goal = Goal::Untargeted { original: y };
    let mut out = AttackOutcome::default();
    let g = sub.gradient(x.as_slice(), y)?;
    let candidate = step_along(x, &unit_direction(&g), eps, x, eps)?;
    out.path.push(candidate.clone());
    match budgeted(goal.check(target, &candidate))? {
        None => out.exhausted = true,
        Some(true) => out.set_best(x, candidate)?,
        Some(false) => {}
    }
    Ok(out.finish(target, start))
}

pub fn i_fgsm(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    cfg: &BaselineConfig,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    iterate(x, y, target, cfg, |cur| Ok(unit_direction(&sub.gradient(cur.as_slice(), y)?)))
}

pub fn mi_fgsm(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    cfg: &BaselineConfig,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    let mut momentum = Momentum::new(cfg.mu, x.shape());
    iterate(x, y, target, cfg, |cur| {
        let g = sub.gradient(cur.as_slice(), y)?;
        Ok(momentum.direction(&g))
    })
}

pub fn vr_igsm(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    cfg: &BaselineConfig,
    rng: &mut Rng,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    iterate(x, y, target, cfg, |cur| {
        let g = sub.smoothed_gradient(cur.as_slice(), y, cfg.s, cfg.samples, rng)?;
        Ok(unit_direction(&g))
    })
}

/// Running momentum `m <- mu * m + g / ||g||_2`, starting from zero.
#[derive(Debug, Clone)]
pub struct Momentum {
    mu: f64,
    m: Perturbation,
}

impl Momentum {
    pub fn new(mu: f64, shape: crate::tensor::Shape) -> Self {
        Momentum { mu, m: Perturbation::zeros(shape) }
    }

    pub fn accumulate(&mut self, g: &Perturbation) -> &Perturbation {
        let u = unit_direction(g);
        for (m, u) in self.m.as_mut_slice().iter_mut().zip(u.as_slice()) {
            *m = self.mu * *m + u;
        }
        &self.m
    }

    /// Accumulates `g` and returns the step direction.
    pub fn direction(&mut self, g: &Perturbation) -> Perturbation {
        let mu = self.mu;
        let m = self.accumulate(g);
        if mu == 0.0 {
            // m is already the unit gradient; renormalising could move the last bit
            m.clone()
        } else {
            unit_direction(m)
        }
    }
}

fn iterate(
    x: &Image,
    y: usize,
    target: &mut TargetOracle<'_>,
    cfg: &BaselineConfig,
    mut direction: impl FnMut(&Image) -> Result<Perturbation>,
) -> Result<AttackOutcome> {
    let start = target.ledger().used();
    let goal = Goal::Untargeted { original: y };
    let mut out = AttackOutcome::default();
    let mut current = x.clone();
    for _ in 0..cfg.steps {
        let d = direction(&current)?;
        current = step_along(&current, &d, cfg.alpha, x, cfg.eps)?;
        out.path.push(current.clone());
        match budgeted(goal.check(target, &current))? {
            None => {
                out.exhausted = true;
                break;
            }
            Some(true) => {
                out.set_best(x, current)?;
                break;
            }
            Some(false) => {}
        }
    }
    Ok(out.finish(target, start))
}
