//! Adaptive conformal prediction intervals for multi-horizon forecasting,
//! with optional online bias correction of the nonconformity scores.
//!
//! The crate is organised bottom-up:
//!
//! - [`rng`]: portable seeded noise source (PCG64 + polar Gaussian).
//! - [`seriesgen`]: AR(1) regime-shift scenarios and CSV ingestion.
//! - [`forecasters`]: direct ridge regression on lag windows and the random walk.
//! - [`calibration`]: per-horizon ACI state machine, EWM bias estimate and
//!   MAD dead-zone. Plain ACI is the same state machine with correction off.
//! - [`metrics`]: Winkler score, coverage and width aggregation.
//! - [`stats`]: paired one-sided Wilcoxon signed-rank test.
//! - [`harness`]: experiment runs, the synthetic grid, the kill-test gate,
//!   parameter sweeps and JSON/CSV outputs.

pub mod calibration;
pub mod forecasters;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod seriesgen;
pub mod stats;

pub use calibration::{
    aci_update, conformal_quantile, mad, median, CalibrationError, CalibratorConfig,
    HorizonCalibrator, Interval, Observation,
};
pub use forecasters::{fit_ridge, random_walk_predict, ForecastError, RandomWalkModel, RidgeModel};
pub use harness::{
    kill_test, run_grid, run_one, AggregateReport, GridSpec, HarnessError, KillTestVerdict,
    ModelKind, RunConfig, RunResult,
};
pub use metrics::{aggregate, winkler, IntervalRecord, MetricsError, RunMetrics};
pub use rng::NoiseSource;
pub use seriesgen::{generate, load_csv, ScenarioKind, ScenarioSpec, Series, SeriesError};
pub use stats::{wilcoxon_one_sided, Alternative, StatsError, TestMethod, TestResult};
