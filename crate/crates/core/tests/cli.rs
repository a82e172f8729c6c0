//! Drives the `cw` binary end to end on a freshly trained zoo.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use curls_whey::harness::median_average;
use curls_whey::harness::report::CsvRow;
use curls_whey::harness::CellSummary;

const CONFIG: &str = "methods = [\"ifgsm\", \"curlswhey\"]\nper_class = 2\nseed = 5\n";

fn cw(args: &[&str], threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cw"));
    cmd.args(args).env_remove("CW_THREADS");
    if let Some(n) = threads {
        cmd.env("CW_THREADS", n);
    }
    cmd.output().expect("cw runs")
}

fn ok(args: &[&str]) -> String {
    let out = cw(args, None);
    assert!(out.status.success(), "cw {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// A trained zoo, its data and an attack config, shared by every test.
fn workspace() -> &'static (tempfile::TempDir, PathBuf) {
    static W: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    W.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        ok(&["train-zoo", "--out", s(dir.path()), "--seed", "0"]);
        let config = dir.path().join("attack.toml");
        std::fs::write(&config, CONFIG).unwrap();
        (dir, config)
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn attack(out: &Path, threads: Option<&str>) -> std::process::Output {
    let (dir, config) = workspace();
    let (zoo, data) = (dir.path().join("zoo"), dir.path().join("data"));
    cw(&["attack", "--config", s(config), "--zoo", s(&zoo), "--data", s(&data), "--out", s(out)], threads)
}

fn rows(dir: &Path) -> Vec<CsvRow> {
    let mut reader = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    reader.deserialize().collect::<Result<_, _>>().unwrap()
}

fn summary(dir: &Path) -> BTreeMap<String, CellSummary> {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn summary_matches_the_rows_it_was_built_from() {
    let out = tempfile::tempdir().unwrap();
    assert!(attack(out.path(), None).status.success());
    let header = std::fs::read_to_string(out.path().join("results.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "image_id,sub_model,target_model,method,success,l2,linf,queries,seconds"
    );
    let rows = rows(out.path());
    let summary = summary(out.path());
    assert_eq!(summary.len(), 3 * 3 * 2);
    for (key, cell) in &summary {
        let l2: Vec<f64> = rows
            .iter()
            .filter(|r| format!("{}|{}|{}", r.sub_model, r.target_model, r.method) == *key)
            .map(|r| r.l2)
            .collect();
        let (median, average) = median_average(&l2).unwrap();
        assert_eq!(cell.count, l2.len());
        assert!((cell.median - median).abs() < 1e-9, "{key}");
        assert!((cell.average - average).abs() < 1e-9, "{key}");
    }
    assert!(rows.iter().all(|r| r.queries <= 200 && r.seconds == 0.0));

    // `report` rebuilds the same summary from the csv alone
    for file in ["summary.json", "median_l2.svg"] {
        std::fs::remove_file(out.path().join(file)).unwrap();
    }
    let (dir, _) = workspace();
    let text = ok(&["report", "--in", s(out.path()), "--zoo", s(&dir.path().join("zoo"))]);
    assert!(text.contains("0 failed"), "{text}");
    assert_eq!(self::summary(out.path()), summary);
    assert!(out.path().join("median_l2.svg").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(attack(a.path(), Some("1")).status.success());
    assert!(attack(b.path(), Some("3")).status.success());
    let read = |d: &Path| std::fs::read(d.join("results.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    let bad = attack(a.path(), Some("zero"));
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("CW_THREADS"));
}

#[test]
fn single_value_sweep_equals_one_matrix_cell() {
    let (dir, config) = workspace();
    let (zoo, data) = (dir.path().join("zoo"), dir.path().join("data"));
    let out = tempfile::tempdir().unwrap();
    ok(&[
        "sweep",
        "--param",
        "T",
        "--values",
        "4",
        "--config",
        s(config),
        "--zoo",
        s(&zoo),
        "--data",
        s(&data),
        "--out",
        s(out.path()),
        "--sub",
        "mlp",
        "--target",
        "conv",
    ]);
    assert!(out.path().join("sweep_T.svg").exists());
    let mut reader = csv::Reader::from_path(out.path().join("sweep.csv")).unwrap();
    let points: Vec<curls_whey::harness::SweepPoint> = reader.deserialize().collect::<Result<_, _>>().unwrap();

    let matrix = tempfile::tempdir().unwrap();
    assert!(attack(matrix.path(), None).status.success());
    let cells = summary(matrix.path());
    for p in &points {
        let cell = &cells[&format!("mlp|conv|{}", p.method)];
        assert_eq!((p.median, p.average, p.success_rate), (cell.median, cell.average, cell.success_rate));
    }
    assert_eq!(points.len(), 2);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let (dir, _) = workspace();
    let out = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[curls]\nsteps = 0\n").unwrap();
    let run = cw(
        &[
            "attack",
            "--config",
            s(&bad),
            "--zoo",
            s(&dir.path().join("zoo")),
            "--data",
            s(&dir.path().join("data")),
            "--out",
            s(out.path()),
        ],
        None,
    );
    assert!(!run.status.success());
    assert!(!run.stderr.is_empty());

    let run = cw(&["report", "--in", s(out.path())], None);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("results.csv"));
}
