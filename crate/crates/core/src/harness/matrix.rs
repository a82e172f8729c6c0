//! Substitute x target x method attack matrices.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AttackConfig, Method};
use super::metrics::{failure_penalty, median_average};
use super::zoo::Zoo;
use crate::attack::{AttackOutcome, Goal};
use crate::baselines::{fgsm, i_fgsm, mi_fgsm, vr_igsm};
use crate::curls::{curls_attack, RoundTrace};
use crate::error::{Error, Result};
use crate::models::{argmax, Classifier, Dataset, Scorer};
use crate::oracles::{QueryLedger, SubstituteOracle, TargetOracle};
use crate::rng::Rng;
use crate::targeted::{targeted_attack, TargetedGoal};
use crate::tensor::{l2_distance, linf_distance, Image};
use crate::whey::curls_whey;

/// Salt for the per-image stream that picks targeted classes.
const TARGET_CLASS_STREAM: u64 = 0x7461_7267;

#[derive(Debug, Clone)]
pub struct AttackResult {
    /// Zero-padded test index, with `>k` appended for target class `k`.
    pub image_id: String,
    pub test_index: usize,
    pub sub_model: String,
    pub target_model: String,
    pub method: Method,
    pub goal: Goal,
    /// Re-verified against the target on the stored `f32` image.
    pub success: bool,
    /// L2 of the stored adversarial, or the failure penalty.
    pub l2: f64,
    pub linf: f64,
    pub queries: u64,
    pub seconds: f64,
    pub adversarial: Option<Image>,
    pub rounds: Vec<RoundTrace>,
    pub seed_distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub results: Vec<AttackResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sub_model: String,
    pub target_model: String,
    pub method: String,
    pub count: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median: f64,
    pub average: f64,
    pub mean_queries: f64,
    pub max_queries: u64,
}

/// Key of a matrix cell in summaries: `"sub|target|method"`.
pub fn cell_key(sub: &str, target: &str, method: &str) -> String {
    format!("{sub}|{target}|{method}")
}

/// Summaries over rows given as `(sub, target, method, success, l2, queries)`.
pub fn summarize<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str, bool, f64, u64)>,
) -> Result<BTreeMap<String, CellSummary>> {
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<u64>, usize, [&str; 3])> = BTreeMap::new();
    for (sub, target, method, success, l2, queries) in rows {
        let g = groups
            .entry(cell_key(sub, target, method))
            .or_insert_with(|| (Vec::new(), Vec::new(), 0, [sub, target, method]));
        g.0.push(l2);
        g.1.push(queries);
        g.2 += success as usize;
    }
    groups
        .into_iter()
        .map(|(key, (l2s, queries, successes, [sub, target, method]))| {
            let (median, average) = median_average(&l2s)?;
            let count = l2s.len();
            Ok((
                key,
                CellSummary {
                    sub_model: sub.to_string(),
                    target_model: target.to_string(),
                    method: method.to_string(),
                    count,
                    successes,
                    success_rate: successes as f64 / count as f64,
                    median,
                    average,
                    mean_queries: queries.iter().sum::<u64>() as f64 / count as f64,
                    max_queries: queries.iter().copied().max().unwrap_or(0),
                },
            ))
        })
        .collect()
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn summary(&self) -> Result<BTreeMap<String, CellSummary>> {
        summarize(
            self.results
                .iter()
                .map(|r| (r.sub_model.as_str(), r.target_model.as_str(), r.method.name(), r.success, r.l2, r.queries)),
        )
    }

    /// Rows of one cell, in table order.
    pub fn cell<'a>(&'a self, sub: &'a str, target: &'a str, method: Method) -> impl Iterator<Item = &'a AttackResult> {
        self.results.iter().filter(move |r| r.sub_model == sub && r.target_model == target && r.method == method)
    }
}

/// Up to `per_class` test images of each class, in dataset order, kept only
/// if every model in `targets` classifies them correctly.
pub fn select_sample(dataset: &Dataset, targets: &[&Classifier], per_class: usize) -> Result<Vec<usize>> {
    let mut taken = vec![0; dataset.classes()];
    let mut out = Vec::new();
    for (i, (x, y)) in dataset.test().iter().enumerate() {
        if taken[*y] == per_class {
            continue;
        }
        taken[*y] += 1;
        let mut all = true;
        for t in targets {
            all &= t.predict(x.as_slice())? == *y;
        }
        if all {
            out.push(i);
        }
    }
    Ok(out)
}

/// The test image of class `class` nearest to `x` in L2 among those `model`
/// classifies correctly. Ties go to the lower index.
pub fn nearest_of_class<'d>(
    dataset: &'d Dataset,
    predictions: &[usize],
    x: &Image,
    class: usize,
) -> Result<Option<&'d Image>> {
    let mut best: Option<(f64, &Image)> = None;
    for ((img, y), &p) in dataset.test().iter().zip(predictions) {
        if *y == class && p == class {
            let d = l2_distance(x, img)?;
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, img));
            }
        }
    }
    Ok(best.map(|(_, img)| img))
}

/// Distinct target classes for one image, drawn from a stream keyed by the
/// seed and the image alone so every cell attacks the same pairs.
pub fn target_classes(seed: u64, test_index: usize, label: usize, classes: usize, count: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..classes).filter(|&c| c != label).collect();
    Rng::derive(seed, &[TARGET_CLASS_STREAM, test_index as u64]).shuffle(&mut others);
    others.truncate(count);
    others
}

/// Runs one method against one target with a fresh ledger of
/// `cfg.budget` queries. The target judges `f32`-rounded inputs.
#[allow(clippy::too_many_arguments)]
pub fn run_attack(
    method: Method,
    x: &Image,
    y: usize,
    targeted: Option<(usize, &Image)>,
    sub: &Classifier,
    target: &dyn Scorer,
    cfg: &AttackConfig,
    rng: &mut Rng,
) -> Result<AttackOutcome> {
    let s = SubstituteOracle::new(sub);
    let mut t = TargetOracle::new(target, QueryLedger::new(cfg.budget)).with_f32_inputs();
    match method {
        Method::Fgsm => fgsm(x, y, &s, &mut t, cfg.baseline.eps),
        Method::Ifgsm => i_fgsm(x, y, &s, &mut t, &cfg.baseline),
        Method::Mifgsm => mi_fgsm(x, y, &s, &mut t, &cfg.baseline),
        Method::Vrigsm => vr_igsm(x, y, &s, &mut t, &cfg.baseline, rng),
        Method::Curls => curls_attack(x, y, &s, &mut t, &cfg.curls, rng),
        Method::Curlswhey => curls_whey(x, y, &s, &mut t, &cfg.curls, &cfg.whey, rng),
        Method::Targeted => {
            let (class, x_t) = targeted.ok_or_else(|| Error::invalid("targeted attack without a target image"))?;
            let goal = TargetedGoal::new(y, class)?;
            targeted_attack(x, x_t, goal, &s, &mut t, &cfg.curls, &cfg.whey, &cfg.targeted, rng)
        }
    }
}

/// Rounds the adversarial to `f32` and asks the target directly, outside
/// any ledger.
pub fn reverify(target: &dyn Scorer, goal: Goal, adversarial: &Image) -> Result<(bool, Image)> {
    let stored = adversarial.to_f32_precision();
    let label = argmax(&target.probabilities(stored.as_slice())?);
    Ok((goal.is_success(label), stored))
}

struct Task {
    sub: usize,
    target: usize,
    method: Method,
    test_index: usize,
    target_class: Option<usize>,
}

/// Every substitute against every target.
pub fn run_matrix(zoo: &Zoo, dataset: &Dataset, cfg: &AttackConfig) -> Result<ResultTable> {
    let ids = zoo.ids();
    let pairs: Vec<(&str, &str)> = ids.iter().flat_map(|s| ids.iter().map(move |t| (*s, *t))).collect();
    run_pairs(zoo, dataset, cfg, &pairs)
}

/// Selected `(substitute, target)` cells. The image sample is filtered
/// against every target that appears in `pairs`.
pub fn run_pairs(zoo: &Zoo, dataset: &Dataset, cfg: &AttackConfig, pairs: &[(&str, &str)]) -> Result<ResultTable> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(pairs.len());
    for (s, t) in pairs {
        cells.push((zoo.index_of(s)?, zoo.index_of(t)?));
    }
    let mut target_ids: Vec<usize> = cells.iter().map(|c| c.1).collect();
    target_ids.sort_unstable();
    target_ids.dedup();
    let targets: Vec<&Classifier> = target_ids.iter().map(|&i| &zoo.entries()[i].model).collect();
    let sample = select_sample(dataset, &targets, cfg.per_class)?;
    let methods = cfg.methods();

    // predictions of each target on the test split, for picking x_T
    let mut predictions: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    if methods.contains(&Method::Targeted) {
        for &t in &target_ids {
            let m = &zoo.entries()[t].model;
            let p = dataset.test().iter().map(|(x, _)| m.predict(x.as_slice())).collect::<Result<_>>()?;
            predictions.insert(t, p);
        }
    }

    let mut tasks = Vec::new();
    for &(sub, target) in &cells {
        for &method in &methods {
            for &i in &sample {
                let y = dataset.test()[i].1;
                if method == Method::Targeted {
                    let count = cfg.targeted.targets_per_image;
                    for c in target_classes(cfg.seed, i, y, dataset.classes(), count) {
                        tasks.push(Task { sub, target, method, test_index: i, target_class: Some(c) });
                    }
                } else {
                    tasks.push(Task { sub, target, method, test_index: i, target_class: None });
                }
            }
        }
    }

    let run = |task: &Task| -> Result<AttackResult> {
        let (x, y) = &dataset.test()[task.test_index];
        let sub = &zoo.entries()[task.sub];
        let target = &zoo.entries()[task.target];
        let method_index = Method::ALL.iter().position(|m| *m == task.method).unwrap_or(0);
        let mut rng = Rng::derive(
            cfg.seed,
            &[
                task.sub as u64,
                task.target as u64,
                method_index as u64,
                task.test_index as u64,
                task.target_class.map_or(u64::MAX, |c| c as u64),
            ],
        );
        let (goal, image_id) = match task.target_class {
            None => (Goal::Untargeted { original: *y }, format!("{:05}", task.test_index)),
            Some(c) => (Goal::Targeted { target: c }, format!("{:05}>{c}", task.test_index)),
        };
        let x_t = match task.target_class {
            Some(c) => {
                let preds = &predictions[&task.target];
                let img = nearest_of_class(dataset, preds, x, c)?;
                img.map(|img| (c, img))
            }
            None => None,
        };
        let started = Instant::now();
        let outcome = if task.target_class.is_some() && x_t.is_none() {
            Err(Error::invalid("no correctly classified image of the target class"))
        } else {
            run_attack(task.method, x, *y, x_t, &sub.model, &target.model, cfg, &mut rng)
        };
        let seconds = if cfg.timings { started.elapsed().as_secs_f64() } else { 0.0 };
        let penalty = failure_penalty(x);
        let worst_linf = x.as_slice().iter().map(|&v| v.max(1.0 - v)).fold(0.0, f64::max);
        let mut result = AttackResult {
            image_id,
            test_index: task.test_index,
            sub_model: sub.record.id.clone(),
            target_model: target.record.id.clone(),
            method: task.method,
            goal,
            success: false,
            l2: penalty,
            linf: worst_linf,
            queries: 0,
            seconds,
            adversarial: None,
            rounds: Vec::new(),
            seed_distance: None,
            error: None,
        };
        match outcome {
            Err(e) => result.error = Some(e.to_string()),
            Ok(out) => {
                result.queries = out.queries;
                result.rounds = out.rounds;
                result.seed_distance = out.seed_distance;
                if let Some(adv) = out.adversarial {
                    let (ok, stored) = reverify(&target.model, goal, &adv)?;
                    if ok {
                        result.success = true;
                        result.l2 = l2_distance(x, &stored)?;
                        result.linf = linf_distance(x, &stored)?;
                        result.adversarial = Some(stored);
                    }
                }
            }
        }
        Ok(result)
    };

    let results = super::pool()?.install(|| tasks.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    Ok(ResultTable { results })
}
