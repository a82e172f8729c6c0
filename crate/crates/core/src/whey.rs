//! Whey optimization: shrinking an adversarial perturbation without losing
//! its effect on the target.
//!
//! Given `x` and an adversarial `x' = x + z`, two passes trade queries for a
//! smaller `z`:
//!
//! * **Group squeeze.** Pixels that share a perturbation value form a group.
//!   Groups are visited from the largest magnitude down, each time halving
//!   the whole group's perturbation and keeping the change only if the
//!   target is still fooled. Sweeps repeat until the attempt budget runs out
//!   or a full sweep changes nothing.
//! * **Stochastic squeeze.** Each attempt zeroes a random subset of pixels
//!   (each independently with probability `delta`), again keeping the change
//!   only if the target is still fooled.
//!
//! Every accepted state is adversarial, so the output is always at least as
//! good as the input.

use serde::{Deserialize, Serialize};

use crate::attack::{budgeted, AttackOutcome, Goal};
use crate::curls::{curls_attack, CurlsConfig};
use crate::error::{Error, Result};
use crate::oracles::{SubstituteOracle, TargetOracle};
use crate::rng::Rng;
use crate::tensor::{Image, Perturbation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WheyConfig {
    #[serde(alias = "T1")]
    pub group_attempts: usize,
    #[serde(alias = "T2")]
    pub stochastic_attempts: usize,
    /// Per-pixel zeroing probability in the stochastic pass.
    pub delta: f64,
}

impl Default for WheyConfig {
    fn default() -> Self {
        WheyConfig { group_attempts: 40, stochastic_attempts: 40, delta: 0.01 }
    }
}

impl WheyConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.delta) {
            Ok(())
        } else {
            Err(Error::Config(format!("delta must lie in [0, 1], got {}", self.delta)))
        }
    }

    /// Most queries the two passes can spend.
    pub fn query_cap(&self) -> u64 {
        (self.group_attempts + self.stochastic_attempts) as u64
    }
}

/// Distinct values of `z`, largest magnitude first. Equal magnitudes put the
/// positive value first.
pub fn value_groups(z: &[f64]) -> Vec<f64> {
    let mut values = z.to_vec();
    values.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
    values.dedup_by(|a, b| a == b);
    values
}

#[derive(Debug, Clone, PartialEq)]
pub struct WheyOutcome {
    pub image: Image,
    /// Accepted changes per pass.
    pub group_accepted: usize,
    pub stochastic_accepted: usize,
    pub exhausted: bool,
}

/// The current perturbation and its image, kept side by side so pixels that
/// were never touched stay bit-identical to the input.
struct Squeezer<'a> {
    x: &'a Image,
    z: Vec<f64>,
    current: Image,
    goal: Goal,
    exhausted: bool,
}

impl<'a> Squeezer<'a> {
    fn new(x: &'a Image, x_adv: &Image, goal: Goal) -> Result<Self> {
        let z = Perturbation::between(x, x_adv)?.into_vec();
        Ok(Squeezer { x, z, current: x_adv.clone(), goal, exhausted: false })
    }

    /// Tries `z[i] <- value(i)` for every index in `changed`; keeps it if the
    /// target is still fooled. `None` once the budget is gone.
    fn attempt(
        &mut self,
        target: &mut TargetOracle<'_>,
        changed: &[usize],
        value: impl Fn(f64) -> f64,
    ) -> Result<Option<bool>> {
        let mut pixels = self.current.as_slice().to_vec();
        let mut z = self.z.clone();
        for &i in changed {
            z[i] = value(z[i]);
            pixels[i] = if z[i] == 0.0 { self.x.as_slice()[i] } else { (self.x.as_slice()[i] + z[i]).clamp(0.0, 1.0) };
        }
        let candidate = Image::new(self.x.shape(), pixels)?;
        let Some(ok) = budgeted(self.goal.check(target, &candidate))? else {
            self.exhausted = true;
            return Ok(None);
        };
        if ok {
            self.z = z;
            self.current = candidate;
        }
        Ok(Some(ok))
    }

    fn groups(&mut self, target: &mut TargetOracle<'_>, attempts: usize) -> Result<usize> {
        let mut used = 0;
        let mut accepted = 0;
        while used < attempts {
            let mut accepted_this_sweep = 0;
            for p in value_groups(&self.z) {
                if used == attempts {
                    break;
                }
                if p == 0.0 {
                    continue;
                }
                // membership is read now, after earlier groups of this sweep
                let members: Vec<usize> = (0..self.z.len()).filter(|&i| self.z[i] == p).collect();
                if members.is_empty() {
                    continue;
                }
                used += 1;
                match self.attempt(target, &members, |v| v / 2.0)? {
                    None => return Ok(accepted),
                    Some(true) => accepted_this_sweep += 1,
                    Some(false) => {}
                }
            }
            accepted += accepted_this_sweep;
            if accepted_this_sweep == 0 {
                break;
            }
        }
        Ok(accepted)
    }

    fn stochastic(
        &mut self,
        target: &mut TargetOracle<'_>,
        attempts: usize,
        delta: f64,
        rng: &mut Rng,
    ) -> Result<usize> {
        let mut accepted = 0;
        for _ in 0..attempts {
            let picked: Vec<usize> = (0..self.z.len()).filter(|_| rng.uniform() < delta).collect();
            let changed: Vec<usize> = picked.into_iter().filter(|&i| self.z[i] != 0.0).collect();
            if changed.is_empty() {
                continue;
            }
            match self.attempt(target, &changed, |_| 0.0)? {
                None => break,
                Some(true) => accepted += 1,
                Some(false) => {}
            }
        }
        Ok(accepted)
    }
}

/// Group squeeze alone.
pub fn group_squeeze(
    x: &Image,
    x_adv: &Image,
    goal: Goal,
    target: &mut TargetOracle<'_>,
    attempts: usize,
) -> Result<Image> {
    let mut s = Squeezer::new(x, x_adv, goal)?;
    s.groups(target, attempts)?;
    Ok(s.current)
}

/// Stochastic squeeze alone. An attempt that would zero nothing still uses
/// up the attempt but spends no query.
pub fn stochastic_squeeze(
    x: &Image,
    x_adv: &Image,
    goal: Goal,
    target: &mut TargetOracle<'_>,
    attempts: usize,
    delta: f64,
    rng: &mut Rng,
) -> Result<Image> {
    let mut s = Squeezer::new(x, x_adv, goal)?;
    s.stochastic(target, attempts, delta, rng)?;
    Ok(s.current)
}

/// Both passes in order. `x_adv` is assumed adversarial for `goal`.
pub fn whey(
    x: &Image,
    x_adv: &Image,
    goal: Goal,
    target: &mut TargetOracle<'_>,
    cfg: &WheyConfig,
    rng: &mut Rng,
) -> Result<WheyOutcome> {
    cfg.validate()?;
    let mut s = Squeezer::new(x, x_adv, goal)?;
    let group_accepted = s.groups(target, cfg.group_attempts)?;
    let stochastic_accepted =
        if s.exhausted { 0 } else { s.stochastic(target, cfg.stochastic_attempts, cfg.delta, rng)? };
    Ok(WheyOutcome { image: s.current, group_accepted, stochastic_accepted, exhausted: s.exhausted })
}

/// Untargeted Curls followed by Whey on its best adversarial.
pub fn curls_whey(
    x: &Image,
    y: usize,
    sub: &SubstituteOracle<'_>,
    target: &mut TargetOracle<'_>,
    curls: &CurlsConfig,
    whey_cfg: &WheyConfig,
    rng: &mut Rng,
) -> Result<AttackOutcome> {
    whey_cfg.validate()?;
    let used = target.ledger().used();
    let mut out = curls_attack(x, y, sub, target, curls, rng)?;
    polish(x, Goal::Untargeted { original: y }, target, whey_cfg, rng, &mut out)?;
    Ok(out.finish(target, used))
}

/// Runs Whey on `out.adversarial` in place, if there is one and budget is left.
pub(crate) fn polish(
    x: &Image,
    goal: Goal,
    target: &mut TargetOracle<'_>,
    cfg: &WheyConfig,
    rng: &mut Rng,
    out: &mut AttackOutcome,
) -> Result<()> {
    let Some(adv) = out.adversarial.clone() else { return Ok(()) };
    if out.exhausted || target.ledger().is_exhausted() {
        out.exhausted = true;
        return Ok(());
    }
    let w = whey(x, &adv, goal, target, cfg, rng)?;
    out.exhausted |= w.exhausted;
    out.set_best(x, w.image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::QueryLedger;
    use crate::rng::Rng;
    use crate::tensor::{l2_distance, Shape};
    use crate::toys::Threshold;
    use proptest::prelude::*;

    fn image(v: Vec<f64>) -> Image {
        Image::new(Shape::flat(v.len()), v).unwrap()
    }

    const UNTARGETED: Goal = Goal::Untargeted { original: 0 };

    #[test]
    fn groups_are_ordered_by_magnitude_then_sign() {
        assert_eq!(value_groups(&[0.2, -0.2, 0.1, 0.0, 0.2]), vec![0.2, -0.2, 0.1, 0.0]);
        assert_eq!(value_groups(&[-0.3, 0.0, 0.0]), vec![-0.3, 0.0]);
        assert!(value_groups(&[]).is_empty());
    }

    #[test]
    fn zero_attempts_return_the_input_bit_for_bit() {
        let t = Threshold { dims: 3, at: 0.6 };
        let x = image(vec![0.1, 0.2, 0.3]);
        let adv = image(vec![0.7, 0.25, 0.1 + 0.2]);
        let mut target = TargetOracle::new(&t, QueryLedger::unlimited());
        let cfg = WheyConfig { group_attempts: 0, stochastic_attempts: 0, delta: 0.5 };
        let out = whey(&x, &adv, UNTARGETED, &mut target, &cfg, &mut Rng::new(0)).unwrap();
        assert_eq!(out.image, adv);
        assert_eq!(target.ledger().used(), 0);
    }

    #[test]
    fn group_squeeze_halves_what_it_can() {
        // only pixel 0 matters, and it must stay at or above 0.6
        let t = Threshold { dims: 2, at: 0.6 };
        let x = image(vec![0.0, 0.0]);
        let adv = image(vec![1.0, 0.4]);
        let mut target = TargetOracle::new(&t, QueryLedger::unlimited());
        let out = group_squeeze(&x, &adv, UNTARGETED, &mut target, 4).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.1]);
        assert_eq!(target.ledger().used(), 4);
    }

    #[test]
    fn group_squeeze_stops_after_a_fruitless_sweep() {
        let t = Threshold::rising(0.6);
        let mut target = TargetOracle::new(&t, QueryLedger::unlimited());
        let out = group_squeeze(&image(vec![0.0]), &image(vec![1.0]), UNTARGETED, &mut target, 40).unwrap();
        assert_eq!(out.as_slice(), &[1.0]);
        assert_eq!(target.ledger().used(), 1);
    }

    #[test]
    fn zero_group_costs_nothing() {
        let t = Threshold { dims: 2, at: 0.6 };
        let mut target = TargetOracle::new(&t, QueryLedger::unlimited());
        let x = image(vec![0.0, 0.3]);
        let out = group_squeeze(&x, &image(vec![1.0, 0.3]), UNTARGETED, &mut target, 40).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.3]);
        assert_eq!(target.ledger().used(), 1);
    }

    #[test]
    fn stochastic_squeeze_clears_irrelevant_pixels() {
        let t = Threshold { dims: 4, at: 0.6 };
        let x = image(vec![0.0; 4]);
        let adv = image(vec![1.0; 4]);
        let mut target = TargetOracle::new(&t, QueryLedger::unlimited());
        let out = stochastic_squeeze(&x, &adv, UNTARGETED, &mut target, 200, 0.5, &mut Rng::new(3)).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn stochastic_squeeze_with_zero_delta_is_free() {
        let t = Threshold { dims: 4, at: 0.6 };
        let x = image(vec![0.0; 4]);
        let adv = image(vec![1.0; 4]);
        let mut target = TargetOracle::new(&t, QueryLedger::unlimited());
        let out = stochastic_squeeze(&x, &adv, UNTARGETED, &mut target, 50, 0.0, &mut Rng::new(3)).unwrap();
        assert_eq!(out, adv);
        assert_eq!(target.ledger().used(), 0);
    }

    #[test]
    fn budget_exhaustion_keeps_the_last_accepted_state() {
        let t = Threshold { dims: 2, at: 0.6 };
        let x = image(vec![0.0, 0.0]);
        let adv = image(vec![1.0, 0.4]);
        let mut target = TargetOracle::new(&t, QueryLedger::new(2));
        let out = whey(&x, &adv, UNTARGETED, &mut target, &WheyConfig::default(), &mut Rng::new(0)).unwrap();
        assert!(out.exhausted);
        assert_eq!(out.image.as_slice(), &[1.0, 0.2]);
    }

    proptest! {
        #[test]
        fn output_stays_adversarial_and_never_grows(
            x in prop::collection::vec(0.0f64..0.5, 6),
            bump in prop::collection::vec(0.0f64..0.5, 6),
            at in 0.3f64..0.9,
            seed in any::<u64>(),
        ) {
            let t = Threshold { dims: 6, at };
            let xi = image(x.clone());
            let mut adv: Vec<f64> = x.iter().zip(&bump).map(|(a, b)| a + b).collect();
            adv[0] = adv[0].max(at);
            let adv = image(adv);
            let mut target = TargetOracle::new(&t, QueryLedger::unlimited());
            let cfg = WheyConfig { group_attempts: 20, stochastic_attempts: 20, delta: 0.3 };
            let out = whey(&xi, &adv, UNTARGETED, &mut target, &cfg, &mut Rng::new(seed)).unwrap();
            prop_assert!(out.image.as_slice()[0] >= at);
            prop_assert!(l2_distance(&xi, &out.image).unwrap() <= l2_distance(&xi, &adv).unwrap());
            prop_assert!(target.ledger().used() <= cfg.query_cap());
            // every pixel lies between the original and the input adversarial
            for i in 0..6 {
                let (lo, hi) = (x[i].min(adv.as_slice()[i]), x[i].max(adv.as_slice()[i]));
                prop_assert!(out.image.as_slice()[i] >= lo && out.image.as_slice()[i] <= hi);
            }
        }
    }
}
