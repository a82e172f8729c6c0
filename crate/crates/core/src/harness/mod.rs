//! Experiment orchestration: model zoos, attack matrices, parameter
//! sweeps and reports.
//!
//! Work is spread over a rayon pool. `CW_THREADS` caps its size; each task
//! owns its oracle wrapper and random stream, so results do not depend on
//! the thread count.

pub mod config;
pub mod matrix;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod zoo;

pub use config::{AttackConfig, Method, SWEEP_PARAMS};
pub use matrix::{run_attack, run_matrix, run_pairs, select_sample, AttackResult, CellSummary, ResultTable};
pub use metrics::{failure_penalty, median_average};
pub use report::{emit_report, verify_adversarials, CsvRow};
pub use sweep::{run_sweep, SweepPoint, SweepTable};
pub use zoo::{Zoo, ZooConfig, ZooEntry, ZooRecord};

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "CW_THREADS";

/// Worker count: `CW_THREADS` if set to a positive integer, otherwise
/// rayon's default.
pub fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

pub(crate) fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(e.to_string()))
}
