//! On-disk results: `results.csv`, `summary.json`, stored adversarials and
//! SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::{summarize, CellSummary, ResultTable};
use super::zoo::Zoo;
use crate::attack::Goal;
use crate::error::{Error, Result};
use crate::io::{read_image, write_image};
use crate::models::{argmax, Scorer};

pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_SVG: &str = "median_l2.svg";
pub const ADVERSARIAL_DIR: &str = "adversarials";
pub const ADVERSARIAL_INDEX: &str = "adversarials.csv";

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub image_id: String,
    pub sub_model: String,
    pub target_model: String,
    pub method: String,
    pub success: bool,
    pub l2: f64,
    pub linf: f64,
    pub queries: u64,
    pub seconds: f64,
}

/// One stored adversarial and what it is supposed to achieve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAdversarial {
    pub file: String,
    pub image_id: String,
    pub test_index: usize,
    pub sub_model: String,
    pub target_model: String,
    pub method: String,
    /// `untargeted` (must not be `label`) or `targeted` (must be `label`).
    pub kind: String,
    pub label: usize,
}

impl StoredAdversarial {
    pub fn goal(&self) -> Result<Goal> {
        match self.kind.as_str() {
            "untargeted" => Ok(Goal::Untargeted { original: self.label }),
            "targeted" => Ok(Goal::Targeted { target: self.label }),
            other => Err(Error::invalid(format!("unknown goal kind '{other}'"))),
        }
    }
}

pub fn csv_rows(table: &ResultTable) -> Vec<CsvRow> {
    table
        .results
        .iter()
        .map(|r| CsvRow {
            image_id: r.image_id.clone(),
            sub_model: r.sub_model.clone(),
            target_model: r.target_model.clone(),
            method: r.method.name().to_string(),
            success: r.success,
            l2: r.l2,
            linf: r.linf,
            queries: r.queries,
            seconds: r.seconds,
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], headers: &[&str]) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::at_path(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(headers)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(Error::at_path(path))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const RESULT_COLUMNS: [&str; 9] =
    ["image_id", "sub_model", "target_model", "method", "success", "l2", "linf", "queries", "seconds"];

const ADVERSARIAL_COLUMNS: [&str; 8] =
    ["file", "image_id", "test_index", "sub_model", "target_model", "method", "kind", "label"];

pub fn summary_of_rows(rows: &[CsvRow]) -> Result<BTreeMap<String, CellSummary>> {
    summarize(
        rows.iter()
            .map(|r| (r.sub_model.as_str(), r.target_model.as_str(), r.method.as_str(), r.success, r.l2, r.queries)),
    )
}

pub fn write_summary(path: &Path, summary: &BTreeMap<String, CellSummary>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(summary)? + "\n").map_err(Error::at_path(path))
}

/// Writes `median_l2.svg`: one bar group per `(substitute, target)` cell,
/// one bar per method.
pub fn write_summary_plot(dir: &Path, summary: &BTreeMap<String, CellSummary>) -> Result<()> {
    let mut cells: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for c in summary.values() {
        let cell = format!("{}>{}", c.sub_model, c.target_model);
        if !cells.contains(&cell) {
            cells.push(cell);
        }
        if !methods.contains(&c.method) {
            methods.push(c.method.clone());
        }
    }
    let series: Vec<(String, Vec<Option<f64>>)> = methods
        .iter()
        .map(|m| {
            let bars = cells
                .iter()
                .map(|cell| {
                    summary
                        .values()
                        .find(|c| format!("{}>{}", c.sub_model, c.target_model) == *cell && c.method == *m)
                        .map(|c| c.median)
                })
                .collect();
            (m.clone(), bars)
        })
        .collect();
    let path = dir.join(SUMMARY_SVG);
    fs::write(&path, svg_bar_chart("median L2 per cell", "median L2", &cells, &series)).map_err(Error::at_path(&path))
}

/// Writes `results.csv`, `summary.json`, `median_l2.svg`, every successful adversarial as a
/// tensor file, and their index.
pub fn emit_report(table: &ResultTable, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let adv_dir = dir.join(ADVERSARIAL_DIR);
    fs::create_dir_all(&adv_dir).map_err(Error::at_path(&adv_dir))?;
    write_csv(&dir.join(RESULTS_CSV), &csv_rows(table), &RESULT_COLUMNS)?;
    let summary = table.summary()?;
    write_summary(&dir.join(SUMMARY_JSON), &summary)?;
    write_summary_plot(dir, &summary)?;

    let mut stored = Vec::new();
    for (row, r) in table.results.iter().enumerate() {
        let Some(adv) = &r.adversarial else { continue };
        let file = format!("{row:06}.cwt");
        write_image(adv_dir.join(&file), adv)?;
        let (kind, label) = match r.goal {
            Goal::Untargeted { original } => ("untargeted", original),
            Goal::Targeted { target } => ("targeted", target),
        };
        stored.push(StoredAdversarial {
            file,
            image_id: r.image_id.clone(),
            test_index: r.test_index,
            sub_model: r.sub_model.clone(),
            target_model: r.target_model.clone(),
            method: r.method.name().to_string(),
            kind: kind.to_string(),
            label,
        });
    }
    write_csv(&dir.join(ADVERSARIAL_INDEX), &stored, &ADVERSARIAL_COLUMNS)
}

/// Reloads every stored adversarial under `dir` and checks it against its
/// named target. Returns `(checked, failures)`, failures by file name.
pub fn verify_adversarials(dir: impl AsRef<Path>, zoo: &Zoo) -> Result<(usize, Vec<String>)> {
    let dir = dir.as_ref();
    let index: Vec<StoredAdversarial> = read_csv(&dir.join(ADVERSARIAL_INDEX))?;
    let mut failures = Vec::new();
    for s in &index {
        let image = read_image(dir.join(ADVERSARIAL_DIR).join(&s.file))?;
        let model = zoo.get(&s.target_model)?;
        let label = argmax(&model.probabilities(image.as_slice())?);
        if !s.goal()?.is_success(label) {
            failures.push(s.file.clone());
        }
    }
    Ok((index.len(), failures))
}

/// A minimal SVG line chart, one polyline per series.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#, H - PAD, W - PAD);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ =
            writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(xv), H - PAD + 18.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, PAD - 6.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - PAD - 120.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// A minimal grouped SVG bar chart; missing bars are left out.
pub fn svg_bar_chart(title: &str, y_label: &str, groups: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    const H: f64 = 400.0;
    const PAD: f64 = 60.0;
    const BAR: f64 = 14.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let per_group = BAR * series.len().max(1) as f64 + 16.0;
    let w = (2.0 * PAD + 140.0 + per_group * groups.len() as f64).max(320.0);
    let top = series.iter().flat_map(|(_, v)| v.iter().flatten()).fold(0.0f64, |a, &b| a.max(b));
    let top = if top > 0.0 { top } else { 1.0 };
    let py = |y: f64| H - PAD - y / top * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#, H - PAD, w - PAD - 140.0);
    for i in 0..=4 {
        let yv = top * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, PAD - 6.0, py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (g, name) in groups.iter().enumerate() {
        let x0 = PAD + 8.0 + per_group * g as f64;
        for (i, (_, bars)) in series.iter().enumerate() {
            if let Some(v) = bars.get(g).copied().flatten() {
                let color = COLORS[i % COLORS.len()];
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{BAR}" height="{:.2}" fill="{color}"/>"#,
                    x0 + BAR * i as f64,
                    py(v),
                    H - PAD - py(v)
                );
            }
        }
        let cx = x0 + BAR * series.len() as f64 / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="end" transform="rotate(-35 {cx:.2} {})">{}</text>"#,
            H - PAD + 14.0,
            H - PAD + 14.0,
            escape(name)
        );
    }
    for (i, (name, _)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - PAD - 120.0,
            PAD + 16.0 * i as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let t = format!("{v:.3}");
    t.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plain-text rendering of a summary for terminals.
pub fn summary_table(summary: &BTreeMap<String, CellSummary>) -> String {
    let mut s = format!(
        "{:<12} {:<12} {:<10} {:>5} {:>8} {:>9} {:>9} {:>8}\n",
        "substitute", "target", "method", "n", "success", "median", "average", "queries"
    );
    for c in summary.values() {
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:<10} {:>5} {:>8.3} {:>9.4} {:>9.4} {:>8.1}",
            c.sub_model, c.target_model, c.method, c.count, c.success_rate, c.median, c.average, c.mean_queries
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_gives_headers_and_an_empty_object() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&ResultTable::default(), dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
        assert_eq!(csv, RESULT_COLUMNS.join(",") + "\n");
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_JSON)).unwrap()).unwrap();
        assert_eq!(json, serde_json::json!({}));
    }

    #[test]
    fn chart_has_one_polyline_per_series() {
        let svg = svg_line_chart(
            "median vs T",
            "T",
            "median L2",
            &[("a".into(), vec![(4.0, 1.0), (8.0, 0.8)]), ("b<".into(), vec![(4.0, 1.2)])],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn bar_chart_skips_missing_bars() {
        let groups = vec!["a>b".to_string(), "b>a".to_string()];
        let svg = svg_bar_chart(
            "medians",
            "median L2",
            &groups,
            &[("ifgsm".into(), vec![Some(0.3), Some(0.4)]), ("curlswhey".into(), vec![Some(0.2), None])],
        );
        assert_eq!(svg.matches("<rect").count(), 1 + 3);
        assert!(svg.contains("a&gt;b"));
    }
}
