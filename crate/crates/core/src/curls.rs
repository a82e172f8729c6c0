//! Curls iteration.
//!
//! Each round runs two trajectories from the same start point. Trajectory B
//! is plain gradient ascent on the substitute loss. Trajectory A first
//! *descends* the substitute loss, watching the target model's loss after
//! every step; the first time the target loss rises it switches, for the
//! rest of the round, to ascent. The detour lets A reach decision
//! boundaries that lie behind a shallow valley of the target's loss.
//!
//! Gradients are taken at a Gaussian-jittered point shifted by `alpha`
//! times the running mean direction of every adversarial found so far
//! ([`MeanDirection`]). A round stops at the first step where either
//! trajectory fools the target; the closer hit is then bisected toward the
//! original image. An outer loop of rounds shrinks the per-pixel box to 90%
//! of the last hit's L-infinity radius, so later rounds must search closer.
//!
//! # Query accounting
//!
//! One forward pass is one query. Per step, trajectory A's pass yields both
//! its label and the loss that drives the downhill flag; trajectory B needs
//! a label only. A round therefore spends `2 * steps + binary_steps`
//! queries when nothing is found early, plus a single loss read of the
//! start point per attack.

use serde::{Deserialize, Serialize};

use crate::attack::{budgeted, AttackOutcome, Goal};
use crate::error::{Error, Result};
use crate::oracles::{SubstituteOracle, TargetOracle};
use crate::rng::Rng;
use crate::tensor::{
    gaussian_like, l2_distance, linf_distance, step_along, unit_direction, Image, Perturbation, Shape,
};

/// Contraction applied to the L-infinity radius of each round's hit to get
/// the next round's box.
pub const EPS_SHRINK: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurlsConfig {
    #[serde(alias = "T0")]
    pub rounds: usize,
    #[serde(alias = "T")]
    pub steps: usize,
    #[serde(alias = "bs")]
    pub binary_steps: usize,
    /// Box radius of the first round.
    pub eps0: f64,
    /// L2 step length; `None` means `1 / (2 * steps)`.
    pub alpha: Option<f64>,
    /// Std of the Gaussian jitter added before each gradient evaluation,
    /// on the unit pixel scale.
    pub s: f64,
}

impl Default for CurlsConfig {
    fn default() -> Self {
        CurlsConfig { rounds: 10, steps: 4, binary_steps: 2, eps0: 0.3, alpha: None, s: 1.0 / 255.0 }
    }
}

impl CurlsConfig {
    pub fn step_size(&self) -> f64 {
        self.alpha.unwrap_or(1.0 / (2.0 * self.steps as f64))
    }

    /// Upper bound on label queries over all rounds: `T0 * (T + bs) * 2`.
    pub fn label_query_cap(&self) -> u64 {
        (self.rounds * (self.steps + self.binary_steps) * 2) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rounds >= 1
            && self.steps >= 1
            && self.eps0 > 0.0
            && self.s >= 0.0
            && self.alpha.is_none_or(|a| a > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid curls parameters: {self:?}")))
        }
    }
}

/// Running mean of the unit noise directions `(x' - x) / ||x' - x||` of
/// every adversarial found for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDirection {
    sum: Perturbation,
    count: usize,
}

impl MeanDirection {
    pub fn new(shape: Shape) -> Self {
        MeanDirection { sum: Perturbation::zeros(shape), count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn update(&mut self, x: &Image, x_adv: &Image) -> Result<()> {
        let z = Perturbation::between(x, x_adv)?;
        if z.is_zero() {
            return Err(Error::NotAdversarial);
        }
        for (s, u) in self.sum.as_mut_slice().iter_mut().zip(unit_direction(&z).as_slice()) {
            *s += u;
        }
        self.count += 1;
        Ok(())
    }

    /// The current mean; zero before anything has been folded in.
    pub fn value(&self) -> Perturbation {
        if self.count == 0 {
            Perturbation::zeros(self.sum.shape())
        } else {
            self.sum.scaled(1.0 / self.count as f64)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundTrace {
    /// Box radius used for this round.
    pub eps: f64,
    /// Target-model loss (w.r.t. the gradient label) at each A iterate.
    pub losses_a: Vec<f64>,
    pub success_a: Vec<bool>,
    pub success_b: Vec<bool>,
    /// Step index at which trajectory A switched from descent to ascent.
    pub switched_at: Option<usize>,
    pub path_a: Vec<Image>,
    pub path_b: Vec<Image>,
    /// Distance of the hit before bisection.
    pub hit_distance: Option<f64>,
    /// Distance after bisection.
    pub best_distance: Option<f64>,
    pub queries: u64,
    pub exhausted: bool,
}

/// Bisects the segment from `x` to `x_adv`, keeping the far endpoint
/// adversarial. Spends exactly `bs` queries unless the budget runs out,
/// in which case the current far endpoint is returned.
pub fn binary_search_refine(
    x: &Image,
    x_adv: &Image,
    goal: Goal,
    target: &mut TargetOracle<'_>,
    bs: usize,
) -> Result<Image> {
    let mut near = x.as_slice().to_vec();
    let mut far = x_adv.clone();
    for _ in 0..bs {
        let mid: Vec<f64> = near.iter().zip(far.as_slice()).map(|(l, r)| (l + r) / 2.0).collect();
        let mid = Image::clamped(x.shape(), mid)?;
        match budgeted(goal.check(target, &mid))? {
            None => break,
            Some(true) => far = mid,
            Some(false) => near = mid.into_vec(),
        }
    }
    Ok(far)
}

/// State shared by the rounds of one attack.
pub(crate) struct CurlsRun<'a, 'm> {
    pub x: &'a Image,
    pub start: &'a Image,
    pub goal: Goal,
    pub sub: &'a SubstituteOracle<'m>,
    pub cfg: &'a CurlsConfig,
    /// Target progress measure at `start`.
    pub start_progress: f64,
}

impl CurlsRun<'_, '_> {
    fn gradient_at(&self, at: &Image, shift: &Perturbation, rng: &mut Rng) -> Result<Perturbation> {
        let noise = gaussian_like(at.shape(), self.cfg.s, rng)?;
        let point: Vec<f64> =
            at.as_slice().iter().zip(noise.as_slice()).zip(shift.as_slice()).map(|((v, n), r)| v + n + r).collect();
        Ok(unit_direction(&self.sub.gradient(&point, self.goal.gradient_label())?))
    }

    pub fn round(
        &self,
        eps: f64,
        target: &mut TargetOracle<'_>,
        md: &mut MeanDirection,
        rng: &mut Rng,
    ) -> Result<(Option<Image>, RoundTrace)> {
        let alpha = self.cfg.step_size();
        let ahead = self.goal.progress_sign() * alpha;
        let used = target.ledger().used();
        let mut trace = RoundTrace { eps, ..RoundTrace::default() };
        let mut a = self.start.clone();
        let mut b = self.start.clone();
        let mut previous = self.start_progress;
        let mut downhill = true;
        let mut hit = None;

        for t in 0..self.cfg.steps {
            let shift = md.value().scaled(alpha);
            let ga = self.gradient_at(&a, &shift, rng)?;
            let gb = self.gradient_at(&b, &shift, rng)?;
            a = step_along(&a, &ga, if downhill { -ahead } else { ahead }, self.x, eps)?;
            b = step_along(&b, &gb, ahead, self.x, eps)?;
            trace.path_a.push(a.clone());
            trace.path_b.push(b.clone());

            let Some(scores) = budgeted(target.query_scores(&a))? else {
                trace.exhausted = true;
                break;
            };
            trace.losses_a.push(scores.loss(self.goal.gradient_label()));
            let progress = self.goal.progress(&scores);
            if downhill && progress > previous {
                downhill = false;
                trace.switched_at = Some(t);
            }
            previous = progress;
            let a_hit = self.goal.is_success(scores.label());
            trace.success_a.push(a_hit);
            if a_hit {
                md.update(self.x, &a)?;
            }

            let Some(b_hit) = budgeted(self.goal.check(target, &b))? else {
                trace.exhausted = true;
                hit = a_hit.then(|| a.clone());
                break;
            };
            trace.success_b.push(b_hit);
            if b_hit {
                md.update(self.x, &b)?;
            }

            hit = match (a_hit, b_hit) {
                (true, true) => {
                    // ties go to A
                    if l2_distance(self.x, &b)? < l2_distance(self.x, &a)? {
                        Some(b.clone())
                    } else {
                        Some(a.clone())
                    }
                }
                (true, false) => Some(a.clone()),
                (false, true) => Some(b.clone()),
                (false, false) => None,
            };
            if hit.is_some() {
                break;
            }
        }

        let refined = match hit {
            Some(h) => {
                trace.hit_distance = Some(l2_distance(self.x, &h)?);
                let r = binary_search_refine(self.x, &h, self.goal, target, self.cfg.binary_steps)?;
                trace.best_distance = Some(l2_distance(self.x, &r)?);
                Some(r)
            }
            None => None,
        };
        trace.exhausted |= target.ledger().is_exhausted();
        trace.queries = target.ledger().used() - used;
        Ok((refined, trace))
    }

    /// All rounds under the shrinking box schedule.
    pub fn attack(
        &self,
        target: &mut TargetOracle<'_>,
        md: &mut MeanDirection,
        rng: &mut Rng,
        out: &mut AttackOutcome,
    ) -> Result<()> {
        let mut eps = self.cfg.eps0;
        for _ in 0..self.cfg.rounds {
            let (hit, trace) = self.round(eps, target, md, rng)?;
            let exhausted = trace.exhausted;
            out.rounds.push(trace);
            if let Some(h) = hit {
                eps = EPS_SHRINK * linf_distance(self.x, &h)?;
                out.set_best(self.x, h)?;
            }
            if exhausted {
                out.exhausted = true;
                break;
            }
        }
        Ok(())
    }
}

/// Reads the progress measure at `start` (one query).
pub(crate) fn start_progress(goal: Goal, target: &mut TargetOracle<'_>, start: &Image) -> Result<Option<f64>> {
    Ok(budgeted(target.query_scores(start))?.map(|s| goal.progress(&s)))
}

/// One Curls round from `x` with box radius `eps`. Spends one extra query
/// to read the target loss at `x`.
#[allow(clippy::too_many_arguments)]
pub fn curls_round(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    cfg: &CurlsConfig,
    eps: f64,
    md: &mut MeanDirection,
    rng: &mut Rng,
) -> Result<(Option<Image>, RoundTrace)> {
    cfg.validate()?;
    let goal = Goal::Untargeted { original: y };
    let Some(progress) = start_progress(goal, target, x)? else {
        return Ok((None, RoundTrace { eps, exhausted: true, queries: 0, ..Default::default() }));
    };
    let run = CurlsRun { x, start: x, goal, sub, cfg, start_progress: progress };
    run.round(eps, target, md, rng)
}

/// Untargeted Curls: `cfg.rounds` rounds with the shrinking box, returning
/// the closest adversarial over all rounds.
pub fn curls_attack(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    cfg: &CurlsConfig,
    rng: &mut Rng,
) -> Result<AttackOutcome> {
    let mut md = MeanDirection::new(x.shape());
    curls_with_direction(x, y, sub, target, cfg, &mut md, rng)
}

/// [`curls_attack`] with a caller-owned [`MeanDirection`], so its final
/// state can be inspected.
pub fn curls_with_direction(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    cfg: &CurlsConfig,
    md: &mut MeanDirection,
    rng: &mut Rng,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    let used = target.ledger().used();
    let goal = Goal::Untargeted { original: y };
    let mut out = AttackOutcome::default();
    match start_progress(goal, target, x)? {
        None => out.exhausted = true,
        Some(progress) => {
            let run = CurlsRun { x, start: x, goal, sub, cfg, start_progress: progress };
            run.attack(target, md, rng, &mut out)?;
        }
    }
    Ok(out.finish(target, used))
}
