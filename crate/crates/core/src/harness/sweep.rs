//! One-parameter sweeps. Each value runs the same set of
//! `(substitute, target)` cells; a point's statistics pool every image of
//! every cell for one method.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{AttackConfig, Method};
use super::matrix::{run_pairs, summarize, ResultTable};
use super::report::{read_csv, svg_line_chart, write_csv};
use super::zoo::Zoo;
use crate::error::{Error, Result};
use crate::models::Dataset;

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: f64,
    pub method: String,
    pub median: f64,
    pub average: f64,
    pub success_rate: f64,
    pub mean_queries: f64,
    pub budget: u64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    pub points: Vec<SweepPoint>,
    /// Raw results of every value, in sweep order.
    pub tables: Vec<ResultTable>,
}

impl SweepTable {
    /// Medians of one method, in sweep order.
    pub fn medians(&self, method: Method) -> Vec<f64> {
        self.points.iter().filter(|p| p.method == method.name()).map(|p| p.median).collect()
    }
}

/// The config used for one sweep value: `base` with `param` set and the
/// budget raised, if needed, to what the new setting can spend.
pub fn sweep_config(base: &AttackConfig, param: &str, value: f64) -> Result<AttackConfig> {
    let mut cfg = base.clone();
    cfg.set_param(param, value)?;
    let need = cfg.methods().iter().map(|m| cfg.required_queries(*m)).max().unwrap_or(0);
    cfg.budget = cfg.budget.max(need);
    cfg.validate()?;
    Ok(cfg)
}

/// Every ordered pair of distinct models in the zoo.
pub fn off_diagonal(zoo: &Zoo) -> Vec<(&str, &str)> {
    let ids = zoo.ids();
    ids.iter().flat_map(|s| ids.iter().filter(move |t| *t != s).map(move |t| (*s, *t))).collect()
}

pub fn run_sweep(
    zoo: &Zoo,
    dataset: &Dataset,
    base: &AttackConfig,
    param: &str,
    values: &[f64],
    pairs: &[(&str, &str)],
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("a sweep needs at least one value".into()));
    }
    let mut out = SweepTable::default();
    for &value in values {
        let cfg = sweep_config(base, param, value)?;
        let table = run_pairs(zoo, dataset, &cfg, pairs)?;
        let pooled = summarize(table.results.iter().map(|r| ("*", "*", r.method.name(), r.success, r.l2, r.queries)))?;
        for cell in pooled.into_values() {
            out.points.push(SweepPoint {
                param: param.to_string(),
                value,
                method: cell.method,
                median: cell.median,
                average: cell.average,
                success_rate: cell.success_rate,
                mean_queries: cell.mean_queries,
                budget: cfg.budget,
            });
        }
        out.tables.push(table);
    }
    Ok(out)
}

const SWEEP_COLUMNS: [&str; 8] =
    ["param", "value", "method", "median", "average", "success_rate", "mean_queries", "budget"];

pub fn write_sweep(dir: impl AsRef<Path>, points: &[SweepPoint]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
    write_csv(&dir.join(SWEEP_CSV), points, &SWEEP_COLUMNS)?;
    write_sweep_plot(dir, points)
}

pub fn read_sweep(dir: impl AsRef<Path>) -> Result<Vec<SweepPoint>> {
    read_csv(&dir.as_ref().join(SWEEP_CSV))
}

/// Writes `sweep_<param>.svg`: median L2 against the parameter, one line
/// per method.
pub fn write_sweep_plot(dir: &Path, points: &[SweepPoint]) -> Result<()> {
    let Some(param) = points.first().map(|p| p.param.clone()) else { return Ok(()) };
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for p in points {
        match series.iter_mut().find(|(m, _)| *m == p.method) {
            Some((_, pts)) => pts.push((p.value, p.median)),
            None => series.push((p.method.clone(), vec![(p.value, p.median)])),
        }
    }
    let svg = svg_line_chart(&format!("median L2 vs {param}"), &param, "median L2", &series);
    let path = dir.join(format!("sweep_{param}.svg"));
    std::fs::write(&path, svg).map_err(Error::at_path(&path))
}
