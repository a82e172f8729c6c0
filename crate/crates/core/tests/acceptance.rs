//! End-to-end acceptance checks on the built-in dataset and model zoo.
//!
//! Runs as a plain binary so every criterion prints one `PASS` or `FAIL`
//! line even when it passes. Any non-flag argument filters criteria by
//! substring.

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use curls_whey::baselines::{i_fgsm, mi_fgsm, vr_igsm, BaselineConfig};
use curls_whey::curls::{binary_search_refine, curls_attack, curls_round, CurlsConfig, MeanDirection};
use curls_whey::harness::matrix::{reverify, run_pairs, ResultTable};
use curls_whey::harness::sweep::{off_diagonal, run_sweep};
use curls_whey::harness::{
    emit_report, median_average, run_attack, verify_adversarials, AttackConfig, Method, Zoo, ZooConfig,
};
use curls_whey::models::{Classifier, Dataset, DatasetConfig, Differentiable, Scorer, ZOO_ARCHITECTURES};
use curls_whey::tensor::l2_distance;
use curls_whey::toys::Threshold;
use curls_whey::whey::{whey, WheyConfig};
use curls_whey::{Goal, Image, QueryLedger, Result, Rng, Shape, SubstituteOracle, TargetOracle};

struct Fixture {
    dataset: Dataset,
    zoo: Zoo,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dataset = Dataset::generate(&DatasetConfig::default());
        let zoo = Zoo::train(&dataset, 0, &ZooConfig::default()).expect("zoo trains");
        Fixture { dataset, zoo }
    })
}

/// What a criterion reports: pass flag and a one-line explanation.
type Verdict = (bool, String);

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Verdict,
}

fn median(v: &[f64]) -> f64 {
    median_average(v).expect("non-empty").0
}

fn gradient_check() -> Verdict {
    let mut rng = Rng::new(2024);
    let shape = Shape::new(8, 8, 3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let arch = ZOO_ARCHITECTURES[trial % ZOO_ARCHITECTURES.len()];
        let model = arch.build(shape, 10, &mut rng);
        let label = rng.below(10);
        // keep probes away from rectifier kinks so differences stay smooth
        let x = loop {
            let x: Vec<f64> = (0..shape.len()).map(|_| rng.uniform()).collect();
            if model.kink_margin(&x).unwrap() > 1e-3 {
                break x;
            }
        };
        let analytic = model.loss_gradient(&x, label).unwrap();
        let loss = |v: &[f64]| {
            let p = model.probabilities(v).unwrap();
            -p[label].max(1e-12).ln()
        };
        for i in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    (worst < 1e-4, format!("max relative error {worst:.2e} over 20 models"))
}

/// Curls without Whey on every off-diagonal cell, plus the Whey pass run
/// on each success with the queries Curls left over.
struct CurlsThenWhey {
    before: Vec<f64>,
    after: Vec<f64>,
    failures: Vec<String>,
    refine_increases: usize,
    refinements: usize,
}

fn curls_then_whey() -> &'static CurlsThenWhey {
    static R: OnceLock<CurlsThenWhey> = OnceLock::new();
    R.get_or_init(|| {
        let f = fixture();
        let cfg = AttackConfig::default();
        let mut out =
            CurlsThenWhey { before: vec![], after: vec![], failures: vec![], refine_increases: 0, refinements: 0 };
        for (s, t) in off_diagonal(&f.zoo) {
            let sub = f.zoo.get(s).unwrap();
            let target = f.zoo.get(t).unwrap();
            let sample = curls_whey::harness::select_sample(&f.dataset, &[target], 10).unwrap();
            for i in sample {
                let (x, y) = &f.dataset.test()[i];
                let goal = Goal::Untargeted { original: *y };
                let mut rng = Rng::derive(1, &[i as u64]);
                let mut oracle = TargetOracle::new(target, QueryLedger::new(cfg.budget)).with_f32_inputs();
                let so = SubstituteOracle::new(sub);
                let c = curls_attack(x, *y, &so, &mut oracle, &cfg.curls, &mut rng).unwrap();
                for r in &c.rounds {
                    if let (Some(hit), Some(best)) = (r.hit_distance, r.best_distance) {
                        out.refinements += 1;
                        out.refine_increases += (best > hit) as usize;
                    }
                }
                let Some(adv) = c.adversarial else { continue };
                let w = whey(x, &adv, goal, &mut oracle, &cfg.whey, &mut rng).unwrap();
                let (ok, stored) = reverify(target, goal, &w.image).unwrap();
                let (d0, d1) = (l2_distance(x, &adv).unwrap(), l2_distance(x, &w.image).unwrap());
                if !ok || d1 > d0 || oracle.ledger().used() > cfg.budget {
                    out.failures.push(format!("{s}->{t} #{i}: ok={ok} {d0:.4}->{d1:.4}"));
                }
                let _ = stored;
                out.before.push(d0);
                out.after.push(d1);
            }
        }
        out
    })
}

fn whey_safety() -> Verdict {
    let r = curls_then_whey();
    let (m0, m1) = (median(&r.before), median(&r.after));
    let pass = r.before.len() >= 100 && r.failures.is_empty() && m1 < m0;
    (
        pass,
        format!(
            "{} images, {} violations, median L2 {m0:.4} -> {m1:.4} ({:.1}% smaller)",
            r.before.len(),
            r.failures.len(),
            100.0 * (1.0 - m1 / m0)
        ),
    )
}

fn bisection() -> Verdict {
    let t = Threshold::rising(0.6);
    let goal = Goal::Untargeted { original: 0 };
    let px = |v: f64| Image::new(Shape::flat(1), vec![v]).unwrap();
    let mut values = Vec::new();
    for bs in [2, 3] {
        let mut oracle = TargetOracle::new(&t, QueryLedger::unlimited());
        values.push(binary_search_refine(&px(0.0), &px(1.0), goal, &mut oracle, bs).unwrap().as_slice()[0]);
    }
    let r = curls_then_whey();
    let pass = values == [0.75, 0.625] && r.refine_increases == 0 && r.refinements > 0;
    (
        pass,
        format!("threshold gives {values:?}; {} zoo refinements, {} increased L2", r.refinements, r.refine_increases),
    )
}

/// Target wrapper that counts forward passes independently of the ledger.
struct Counting<'a> {
    inner: &'a Classifier,
    calls: AtomicU64,
}

impl Scorer for Counting<'_> {
    fn input_shape(&self) -> Shape {
        self.inner.input_shape()
    }
    fn classes(&self) -> usize {
        self.inner.classes()
    }
    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.probabilities(x)
    }
}

fn query_budget() -> Verdict {
    let f = fixture();
    let cfg = AttackConfig::default();
    let cap = cfg.curls.label_query_cap() + cfg.whey.query_cap();
    let mut runs = 0;
    let mut worst = 0;
    let mut audit_failures = 0;
    for sub_id in f.zoo.ids() {
        for target_id in f.zoo.ids() {
            let sub = f.zoo.get(sub_id).unwrap();
            let target = f.zoo.get(target_id).unwrap();
            for i in curls_whey::harness::select_sample(&f.dataset, &[target], 5).unwrap() {
                let (x, y) = &f.dataset.test()[i];
                let counting = Counting { inner: target, calls: AtomicU64::new(0) };
                let mut rng = Rng::derive(4, &[i as u64]);
                let out = run_attack(Method::Curlswhey, x, *y, None, sub, &counting, &cfg, &mut rng).unwrap();
                let calls = counting.calls.load(Ordering::Relaxed);
                runs += 1;
                worst = worst.max(out.queries);
                if out.queries != calls || out.queries > cap || out.queries > cfg.budget {
                    audit_failures += 1;
                }
            }
        }
    }
    let matrix_worst = black_box_table().results.iter().map(|r| r.queries).max().unwrap_or(0);
    let pass = cap == 200 && audit_failures == 0 && worst <= 200 && matrix_worst <= 200;
    (
        pass,
        format!(
            "cap {cap}; {runs} audited runs, {audit_failures} mismatches, most queries {worst}; matrix maximum {matrix_worst}"
        ),
    )
}

fn reductions() -> Verdict {
    let f = fixture();
    let sub = f.zoo.get("mlp").unwrap();
    let so = SubstituteOracle::new(sub);
    let never = Threshold::never(sub.input_shape().len());
    let mut broken = Vec::new();
    for (x, _) in f.dataset.test().iter().take(10) {
        let base = BaselineConfig { steps: 30, ..Default::default() };
        let run = |m: &dyn Fn(&mut TargetOracle<'_>) -> Vec<Image>| {
            let mut o = TargetOracle::new(&never, QueryLedger::unlimited());
            m(&mut o)
        };
        let reference = run(&|o| i_fgsm(x, 0, &so, o, &base).unwrap().path);
        let mi = run(&|o| mi_fgsm(x, 0, &so, o, &BaselineConfig { mu: 0.0, ..base }).unwrap().path);
        let vr = run(&|o| vr_igsm(x, 0, &so, o, &BaselineConfig { s: 0.0, ..base }, &mut Rng::new(9)).unwrap().path);
        let curls = CurlsConfig { steps: 30, s: 0.0, alpha: Some(base.alpha), eps0: base.eps, ..Default::default() };
        let b = run(&|o| {
            let mut md = MeanDirection::new(x.shape());
            curls_round(x, 0, &so, o, &curls, curls.eps0, &mut md, &mut Rng::new(3)).unwrap().1.path_b
        });
        for (name, path) in [("mifgsm", mi), ("vrigsm", vr), ("curls B", b)] {
            if path != reference || path.len() != 30 {
                broken.push(name);
            }
        }
        let mut o = TargetOracle::new(&never, QueryLedger::unlimited());
        let adv = reference.last().unwrap();
        let w = whey(
            x,
            adv,
            Goal::Untargeted { original: 0 },
            &mut o,
            &WheyConfig { group_attempts: 0, stochastic_attempts: 0, delta: 0.5 },
            &mut Rng::new(1),
        )
        .unwrap();
        if w.image != *adv || o.ledger().used() != 0 {
            broken.push("whey");
        }
    }
    broken.dedup();
    (
        broken.is_empty(),
        if broken.is_empty() {
            "all four identities bit-identical on 10 images".into()
        } else {
            format!("broken: {broken:?}")
        },
    )
}

fn black_box_table() -> &'static ResultTable {
    static T: OnceLock<ResultTable> = OnceLock::new();
    T.get_or_init(|| {
        let f = fixture();
        let cfg = AttackConfig { methods: vec![Method::Ifgsm, Method::Curlswhey], per_class: 25, ..Default::default() };
        run_pairs(&f.zoo, &f.dataset, &cfg, &off_diagonal(&f.zoo)).unwrap()
    })
}

fn black_box() -> Verdict {
    let f = fixture();
    let table = black_box_table();
    let summary = table.summary().unwrap();
    let mut wins = 0;
    let mut cells = Vec::new();
    let mut images = usize::MAX;
    for (s, t) in off_diagonal(&f.zoo) {
        let key = |m: &str| format!("{s}|{t}|{m}");
        let (cw, ifgsm) = (&summary[&key("curlswhey")], &summary[&key("ifgsm")]);
        images = images.min(cw.count);
        wins += (cw.median <= ifgsm.median) as usize;
        cells.push(format!("{s}->{t} {:.3}/{:.3}", cw.median, ifgsm.median));
    }
    let n = cells.len();
    let pass = wins * 5 >= n * 4 && images >= 200;
    (pass, format!("{wins}/{n} cells, >= {images} images each; curlswhey/ifgsm medians: {}", cells.join(", ")))
}

fn t_sweep() -> Verdict {
    let f = fixture();
    let base = AttackConfig { methods: vec![Method::Curls], per_class: 20, ..Default::default() };
    let values = [4.0, 8.0, 12.0, 16.0, 20.0];
    let sweep = run_sweep(&f.zoo, &f.dataset, &base, "T", &values, &off_diagonal(&f.zoo)).unwrap();
    let m = sweep.medians(Method::Curls);
    let (early, late) = (m[0] - m[1], m[3] - m[4]);
    let curve: Vec<String> = m.iter().map(|v| format!("{v:.4}")).collect();
    (late < early, format!("medians {}; gain 4->8 {early:.4}, 16->20 {late:.4}", curve.join(" ")))
}

fn targeted() -> Verdict {
    let f = fixture();
    let cfg = AttackConfig { methods: vec![Method::Targeted], per_class: 10, ..Default::default() };
    let table = run_pairs(&f.zoo, &f.dataset, &cfg, &off_diagonal(&f.zoo)).unwrap();
    let n = table.len();
    let successes = table.results.iter().filter(|r| r.success).count();
    let ours: Vec<f64> = table.results.iter().map(|r| r.l2).collect();
    let seeds: Vec<f64> = table.results.iter().map(|r| r.seed_distance.unwrap_or(f64::INFINITY)).collect();
    let (m_ours, m_seed) = (median(&ours), median(&seeds));
    let pass = n > 0 && successes == n && m_ours < m_seed;
    (pass, format!("{successes}/{n} successes; median L2 {m_ours:.4} vs interpolation seed {m_seed:.4}"))
}

fn determinism() -> Verdict {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    f.dataset.save(dir.path().join("data")).unwrap();
    f.zoo.save(dir.path().join("zoo")).unwrap();
    let dataset = Dataset::load(dir.path().join("data")).unwrap();
    let zoo = Zoo::load(dir.path().join("zoo")).unwrap();
    let cfg = AttackConfig {
        methods: vec![Method::Fgsm, Method::Ifgsm, Method::Mifgsm, Method::Vrigsm, Method::Curlswhey, Method::Targeted],
        per_class: 2,
        seed: 11,
        ..Default::default()
    };
    let mut bytes = Vec::new();
    let mut verified = Vec::new();
    for run in ["a", "b"] {
        let table = curls_whey::harness::run_matrix(&zoo, &dataset, &cfg).unwrap();
        let out = dir.path().join(run);
        emit_report(&table, &out).unwrap();
        bytes.push(std::fs::read(out.join("results.csv")).unwrap());
        verified.push(verify_adversarials(&out, &Zoo::load(dir.path().join("zoo")).unwrap()).unwrap());
    }
    let same = bytes[0] == bytes[1];
    let (checked, failed) = (&verified[0].0, &verified[0].1);
    let pass = same && *checked > 0 && failed.is_empty() && verified[1].1.is_empty();
    (pass, format!("results.csv identical: {same}; {checked} stored adversarials reloaded, {} failed", failed.len()))
}

fn main() {
    let criteria = [
        Criterion { name: "gradient check", limit: Duration::from_secs(10), run: gradient_check },
        Criterion { name: "whey safety and monotonicity", limit: Duration::from_secs(120), run: whey_safety },
        Criterion { name: "binary-search refinement", limit: Duration::from_secs(5), run: bisection },
        Criterion { name: "query-budget exactness", limit: Duration::from_secs(600), run: query_budget },
        Criterion { name: "reduction identities", limit: Duration::from_secs(30), run: reductions },
        Criterion { name: "black-box direction", limit: Duration::from_secs(600), run: black_box },
        Criterion { name: "diminishing returns in T", limit: Duration::from_secs(600), run: t_sweep },
        Criterion { name: "targeted guarantee", limit: Duration::from_secs(600), run: targeted },
        Criterion { name: "determinism and persistence", limit: Duration::from_secs(600), run: determinism },
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();

    let started = Instant::now();
    fixture();
    println!("fixture: dataset and zoo ready in {:.1}s", started.elapsed().as_secs_f64());

    let mut failed = 0;
    for c in criteria.iter().filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str()))) {
        let t0 = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(c.run));
        let took = t0.elapsed();
        let (pass, detail) = match verdict {
            Ok((pass, detail)) => (pass && took <= c.limit, detail),
            Err(_) => (false, "panicked".to_string()),
        };
        failed += !pass as usize;
        println!(
            "{} {}: {detail} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            took.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
