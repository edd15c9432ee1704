//! Experiment orchestration.
//!
//! A run streams one series through one base model at several horizons. At
//! every step each horizon produces a single point prediction that is handed
//! to two calibrators built from the same settings: plain ACI and the
//! treatment arm (bias correction on unless the config turns it off). Both
//! therefore see identical prediction streams, which every run checks by
//! comparing checksums of the recorded predictions.
//!
//! Indexing: `values[s]` is the observation at 1-based time `s + 1`. The
//! first forecast is made from the window ending at the last training point,
//! so outcomes run over `t = train_len + h ..= n`.

mod grid;
mod killtest;
mod output;
mod sweep;

use std::collections::VecDeque;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{CalibrationError, CalibratorConfig, HorizonCalibrator, Interval};
use crate::forecasters::{fit_ridge, ForecastError, Forecaster, RandomWalkModel, RidgeModel};
use crate::metrics::{aggregate, IntervalRecord, MetricsError, RunMetrics};
use crate::seriesgen::{generate, load_csv, ScenarioKind, ScenarioSpec, Series, SeriesError, SeriesSource};
use crate::stats::StatsError;

pub use grid::{pooled_summary, run_grid, run_grid_runs, summarize, AggregateReport, CellSummary, GridSpec, MethodSummary, RunCounts, ScenarioSummary};
pub use killtest::{kill_test, KillTestVerdict};
pub use output::{designated_trace, emit_outputs, trace_csv, write_trace_csv, OutputFiles};
pub use sweep::{k_sweep, lambda_sweep, SweepRow};

/// Default forecast horizons.
pub const DEFAULT_HORIZONS: [usize; 4] = [1, 5, 12, 24];
/// Default lag count for the ridge model.
pub const DEFAULT_LAGS: usize = 24;
/// Default ridge penalty.
pub const DEFAULT_PENALTY: f64 = 1.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("report is incomplete: {0}")]
    IncompleteReport(String),
    #[error("prediction streams diverged between methods at horizon {0}")]
    StreamMismatch(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ridge,
    RandomWalk,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Ridge, ModelKind::RandomWalk];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Ridge => "ridge",
            ModelKind::RandomWalk => "random_walk",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ridge" => Ok(ModelKind::Ridge),
            "random_walk" | "rw" | "arima" | "arima010" => Ok(ModelKind::RandomWalk),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

/// Where a run's series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(ScenarioSpec),
    Csv {
        path: PathBuf,
        column: String,
        max_len: usize,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Series, HarnessError> {
        Ok(match self {
            DataSource::Synthetic(spec) => generate(spec)?,
            DataSource::Csv { path, column, max_len } => load_csv(path, column, *max_len)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source: DataSource,
    pub model: ModelKind,
    pub horizons: Vec<usize>,
    /// Settings shared by both arms. The treatment arm uses them as given;
    /// the baseline arm is the same with bias correction off.
    pub calibrator: CalibratorConfig,
    pub lags: usize,
    pub penalty: f64,
    /// Keep per-step traces for both arms.
    pub record_trace: bool,
}

impl RunConfig {
    pub fn synthetic(kind: ScenarioKind, model: ModelKind, seed: u64) -> Self {
        Self {
            source: DataSource::Synthetic(ScenarioSpec::new(kind, seed)),
            model,
            horizons: DEFAULT_HORIZONS.to_vec(),
            calibrator: CalibratorConfig::default(),
            lags: DEFAULT_LAGS,
            penalty: DEFAULT_PENALTY,
            record_trace: false,
        }
    }
}

/// One row of a per-step trace (the data behind interval and bias plots).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based outcome time.
    pub t: usize,
    pub y: f64,
    pub y_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha_t: f64,
    pub b_hat: f64,
    pub tau: f64,
    pub corrected: bool,
}

impl TraceRow {
    fn new(t: usize, y: f64, y_hat: f64, iv: &Interval) -> Self {
        Self {
            t,
            y,
            y_hat,
            lower: iv.lower,
            upper: iv.upper,
            alpha_t: iv.alpha_used,
            b_hat: iv.bias,
            tau: iv.threshold,
            corrected: iv.corrected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub horizon: usize,
    pub aci: RunMetrics,
    pub bcaci: RunMetrics,
    /// Checksums of the prediction streams each arm was evaluated on.
    pub aci_checksum: u64,
    pub bcaci_checksum: u64,
    /// Mean signed residual over outcomes after the regime change
    /// (synthetic series only).
    pub post_shift_bias: Option<f64>,
    #[serde(skip)]
    pub trace_aci: Vec<TraceRow>,
    #[serde(skip)]
    pub trace_bcaci: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub scenario: Option<ScenarioKind>,
    pub seed: Option<u64>,
    pub model: ModelKind,
    pub horizons: Vec<HorizonResult>,
}

impl RunResult {
    pub fn horizon(&self, h: usize) -> Option<&HorizonResult> {
        self.horizons.iter().find(|r| r.horizon == h)
    }
}

enum Fitted {
    Ridge(RidgeModel),
    RandomWalk(RandomWalkModel),
}

impl Fitted {
    fn fit(model: ModelKind, train: &[f64], lags: usize, penalty: f64, h: usize) -> Result<Self, ForecastError> {
        Ok(match model {
            ModelKind::Ridge => Fitted::Ridge(fit_ridge(train, lags, penalty, h)?),
            ModelKind::RandomWalk => Fitted::RandomWalk(RandomWalkModel),
        })
    }

    fn as_forecaster(&self) -> &dyn Forecaster {
        match self {
            Fitted::Ridge(m) => m,
            Fitted::RandomWalk(m) => m,
        }
    }
}

/// FNV-1a over the bit patterns of a prediction stream.
fn stream_checksum(records: &[IntervalRecord]) -> u64 {
    records.iter().fold(0xcbf2_9ce4_8422_2325u64, |acc, r| {
        r.prediction
            .to_bits()
            .to_le_bytes()
            .iter()
            .fold(acc, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3))
    })
}

fn validate(config: &RunConfig, series: &Series) -> Result<(), HarnessError> {
    config.calibrator.validate()?;
    if config.horizons.is_empty() {
        return Err(HarnessError::Config("no horizons given".into()));
    }
    if config.horizons.contains(&0) {
        return Err(HarnessError::Config("horizons must be >= 1".into()));
    }
    if series.train_len >= series.len() {
        return Err(SeriesError::TooShort {
            len: series.len(),
            train_len: series.train_len,
        }
        .into());
    }
    let tail = series.len() - series.train_len;
    let max_h = config.horizons.iter().copied().max().unwrap_or(0);
    if max_h >= tail {
        return Err(HarnessError::Config(format!(
            "horizon {max_h} does not fit in the {tail}-point evaluation tail"
        )));
    }
    Ok(())
}

/// Runs both arms on one series for every configured horizon.
pub fn run_one(config: &RunConfig) -> Result<RunResult, HarnessError> {
    let series = config.source.load()?;
    run_on_series(config, &series)
}

/// As [`run_one`] on an already loaded series.
pub fn run_on_series(config: &RunConfig, series: &Series) -> Result<RunResult, HarnessError> {
    validate(config, series)?;
    let shift_at = match &series.source {
        SeriesSource::Synthetic(spec) => Some(spec.shift_at),
        SeriesSource::Csv { .. } => None,
    };
    let horizons = config
        .horizons
        .iter()
        .map(|&h| run_horizon(config, series, h, shift_at))
        .collect::<Result<Vec<_>, _>>()?;
    let (scenario, seed) = match &series.source {
        SeriesSource::Synthetic(spec) => (Some(spec.kind), Some(spec.seed)),
        SeriesSource::Csv { .. } => (None, None),
    };
    Ok(RunResult {
        label: series.label(),
        scenario,
        seed,
        model: config.model,
        horizons,
    })
}

fn run_horizon(
    config: &RunConfig,
    series: &Series,
    h: usize,
    shift_at: Option<usize>,
) -> Result<HorizonResult, HarnessError> {
    let values = &series.values;
    let train_len = series.train_len;
    let fitted = Fitted::fit(config.model, series.train(), config.lags, config.penalty, h)?;
    let model = fitted.as_forecaster();
    let p = model.lags();
    let forecast_at = |s: usize| model.predict(&values[s + 1 - p..=s]);

    let mut aci = HorizonCalibrator::new(h, config.calibrator.aci())?;
    let mut bcaci = HorizonCalibrator::new(h, config.calibrator.clone())?;

    // Prime with the in-sample residuals of the last h forecasts whose
    // targets fall inside the training prefix, so that every streaming emit
    // has a non-empty buffer.
    let last_origin = train_len - 1 - h;
    let first_origin = (last_origin + 1).saturating_sub(h).max(p - 1);
    if first_origin > last_origin {
        return Err(HarnessError::Config(format!(
            "training prefix too short to prime horizon {h}"
        )));
    }
    for s in first_origin..=last_origin {
        let e = values[s + h] - forecast_at(s)?;
        aci.prime(e)?;
        bcaci.prime(e)?;
    }

    let n0 = config.calibrator.n0;
    let alpha = config.calibrator.alpha;
    let mut in_eval: VecDeque<bool> = VecDeque::with_capacity(h + 1);
    let mut aci_records = Vec::new();
    let mut bc_records = Vec::new();
    let mut trace_aci = Vec::new();
    let mut trace_bcaci = Vec::new();
    let (mut shift_sum, mut shift_count) = (0.0, 0usize);

    for s in train_len - 1..values.len() {
        if s + 1 >= train_len + h {
            let (t, y) = (s + 1, values[s]);
            let a = aci.observe(y)?;
            let b = bcaci.observe(y)?;
            if config.record_trace {
                trace_aci.push(TraceRow::new(t, y, a.prediction, &a.interval));
                trace_bcaci.push(TraceRow::new(t, y, b.prediction, &b.interval));
            }
            if shift_at.is_some_and(|shift| t > shift) {
                shift_sum += a.residual;
                shift_count += 1;
            }
            if in_eval.pop_front().unwrap_or(false) {
                aci_records.push(IntervalRecord::new(t, y, a.prediction, a.interval, alpha));
                bc_records.push(IntervalRecord::new(t, y, b.prediction, b.interval, alpha));
            }
        }
        if s + h < values.len() {
            let y_hat = forecast_at(s)?;
            in_eval.push_back(aci.observed() >= n0);
            aci.emit_at(s, y_hat)?;
            bcaci.emit_at(s, y_hat)?;
        }
    }

    let aci_checksum = stream_checksum(&aci_records);
    let bcaci_checksum = stream_checksum(&bc_records);
    if aci_checksum != bcaci_checksum {
        return Err(HarnessError::StreamMismatch(h));
    }
    Ok(HorizonResult {
        horizon: h,
        aci: aggregate(&aci_records)?,
        bcaci: aggregate(&bc_records)?,
        aci_checksum,
        bcaci_checksum,
        post_shift_bias: (shift_count > 0).then(|| shift_sum / shift_count as f64),
        trace_aci,
        trace_bcaci,
    })
}
