//! Interval scoring: Winkler score, coverage and width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::Interval;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no records to aggregate")]
    Empty,
}

/// Winkler interval score at the fixed nominal level `alpha`:
/// width plus `2 / alpha` times the distance by which `y` falls outside.
pub fn winkler(interval: &Interval, y: f64, alpha: f64) -> f64 {
    let penalty = 2.0 / alpha;
    interval.width()
        + penalty * (interval.lower - y).max(0.0)
        + penalty * (y - interval.upper).max(0.0)
}

/// One emitted interval with its realised outcome attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    /// 1-based time index of the outcome.
    pub t: usize,
    pub y: f64,
    pub prediction: f64,
    pub interval: Interval,
    pub covered: bool,
    pub winkler: f64,
}

impl IntervalRecord {
    pub fn new(t: usize, y: f64, prediction: f64, interval: Interval, alpha: f64) -> Self {
        Self {
            t,
            y,
            prediction,
            interval,
            covered: interval.covers(y),
            winkler: winkler(&interval, y, alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mean_winkler: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub n_eval: usize,
    pub correction_rate: f64,
}

pub fn aggregate(records: &[IntervalRecord]) -> Result<RunMetrics, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = records.len() as f64;
    let (mut wink, mut width, mut covered, mut corrected) = (0.0, 0.0, 0usize, 0usize);
    for r in records {
        wink += r.winkler;
        width += r.interval.width();
        covered += usize::from(r.covered);
        corrected += usize::from(r.interval.corrected);
    }
    Ok(RunMetrics {
        mean_winkler: wink / n,
        coverage: covered as f64 / n,
        mean_width: width / n,
        n_eval: records.len(),
        correction_rate: corrected as f64 / n,
    })
}
