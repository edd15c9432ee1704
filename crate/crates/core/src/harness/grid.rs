//! Synthetic grid: every (scenario, model, seed) run, reduced into per-scenario,
//! per-model and per-cell tables.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    kill_test, run_one, DataSource, HarnessError, KillTestVerdict, ModelKind, RunConfig, RunResult,
    DEFAULT_HORIZONS, DEFAULT_LAGS, DEFAULT_PENALTY,
};
use crate::calibration::CalibratorConfig;
use crate::metrics::RunMetrics;
use crate::seriesgen::{ScenarioKind, ScenarioSpec};
use crate::stats::{wilcoxon_one_sided, Alternative, StatsError};

/// Real-data runs of the full protocol; they need external datasets and are
/// not part of the synthetic grid.
pub const EXCLUDED_REAL_DATA_RUNS: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub scenarios: Vec<ScenarioKind>,
    pub models: Vec<ModelKind>,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub calibrator: CalibratorConfig,
    pub lags: usize,
    pub penalty: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            scenarios: ScenarioKind::ALL.to_vec(),
            models: ModelKind::ALL.to_vec(),
            horizons: DEFAULT_HORIZONS.to_vec(),
            seeds: (0..10).collect(),
            calibrator: CalibratorConfig::default(),
            lags: DEFAULT_LAGS,
            penalty: DEFAULT_PENALTY,
        }
    }
}

impl GridSpec {
    /// Run configs in canonical order: scenario, then model, then seed.
    pub fn configs(&self) -> Vec<RunConfig> {
        let mut out = Vec::with_capacity(self.scenarios.len() * self.models.len() * self.seeds.len());
        for &kind in &self.scenarios {
            for &model in &self.models {
                for &seed in &self.seeds {
                    out.push(RunConfig {
                        source: DataSource::Synthetic(ScenarioSpec::new(kind, seed)),
                        model,
                        horizons: self.horizons.clone(),
                        calibrator: self.calibrator.clone(),
                        lags: self.lags,
                        penalty: self.penalty,
                        record_trace: false,
                    });
                }
            }
        }
        out
    }
}

/// Mean over runs of one method's per-run metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub winkler: f64,
    pub coverage: f64,
    pub width: f64,
    pub correction_rate: f64,
}

impl MethodSummary {
    fn mean<'a>(metrics: impl ExactSizeIterator<Item = &'a RunMetrics>) -> Self {
        let n = metrics.len() as f64;
        let mut s = MethodSummary {
            winkler: 0.0,
            coverage: 0.0,
            width: 0.0,
            correction_rate: 0.0,
        };
        for m in metrics {
            s.winkler += m.mean_winkler;
            s.coverage += m.coverage;
            s.width += m.mean_width;
            s.correction_rate += m.correction_rate;
        }
        s.winkler /= n;
        s.coverage /= n;
        s.width /= n;
        s.correction_rate /= n;
        s
    }
}

/// Aggregate over a set of paired horizon-runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub aci: MethodSummary,
    pub bcaci: MethodSummary,
    /// BC-ACI mean Winkler over ACI mean Winkler.
    pub ratio: f64,
    /// One-sided Wilcoxon p for "BC-ACI Winkler < ACI Winkler"; `None` when
    /// every pair ties.
    pub p_value: Option<f64>,
    pub n_pairs: usize,
    /// Mean post-shift residual of the base model, when defined.
    pub post_shift_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: ScenarioKind,
    pub model: ModelKind,
    pub horizon: usize,
    #[serde(flatten)]
    pub summary: ScenarioSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub paired_runs: usize,
    pub method_runs: usize,
    pub excluded_real_data_runs: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: GridSpec,
    /// Keyed by scenario label.
    pub per_scenario: BTreeMap<String, ScenarioSummary>,
    /// Keyed by model label, then scenario label.
    pub per_model: BTreeMap<String, BTreeMap<String, ScenarioSummary>>,
    pub cells: Vec<CellSummary>,
    pub runs: RunCounts,
    pub kill_test: Option<KillTestVerdict>,
}

/// Executes every grid run on the current rayon pool; output order is
/// [`GridSpec::configs`] order regardless of scheduling.
pub fn run_grid_runs(spec: &GridSpec) -> Result<Vec<RunResult>, HarnessError> {
    spec.configs().par_iter().map(run_one).collect()
}

fn summarize_pairs(pairs: &[(&RunMetrics, &RunMetrics, Option<f64>)]) -> Result<ScenarioSummary, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::IncompleteReport("empty run set".into()));
    }
    let aci = MethodSummary::mean(pairs.iter().map(|p| p.0));
    let bcaci = MethodSummary::mean(pairs.iter().map(|p| p.1));
    let winkler_pairs: Vec<(f64, f64)> = pairs.iter().map(|p| (p.1.mean_winkler, p.0.mean_winkler)).collect();
    let p_value = match wilcoxon_one_sided(&winkler_pairs, Alternative::Less) {
        Ok(r) => Some(r.p_value),
        Err(StatsError::AllZero) => None,
        Err(e) => return Err(e.into()),
    };
    let biases: Vec<f64> = pairs.iter().filter_map(|p| p.2).collect();
    let post_shift_bias = (!biases.is_empty()).then(|| biases.iter().sum::<f64>() / biases.len() as f64);
    Ok(ScenarioSummary {
        ratio: bcaci.winkler / aci.winkler,
        aci,
        bcaci,
        p_value,
        n_pairs: pairs.len(),
        post_shift_bias,
    })
}

/// One summary over every horizon-run in `runs`, reduced in the same order as
/// the per-scenario tables of [`summarize`].
pub fn pooled_summary(runs: &[RunResult]) -> Result<ScenarioSummary, HarnessError> {
    let mut rows: Vec<_> = runs
        .iter()
        .flat_map(|r| r.horizons.iter().map(move |h| ((r.scenario, r.model, h.horizon, r.seed), h)))
        .collect();
    rows.sort_by_key(|r| r.0);
    let pairs: Vec<_> = rows.iter().map(|(_, h)| (&h.aci, &h.bcaci, h.post_shift_bias)).collect();
    summarize_pairs(&pairs)
}

/// Reduces runs into an [`AggregateReport`] without the kill-test verdict.
/// Every table is keyed or sorted by config, so input order does not matter.
pub fn summarize(spec: &GridSpec, runs: &[RunResult]) -> Result<AggregateReport, HarnessError> {
    type Pair<'a> = (&'a RunMetrics, &'a RunMetrics, Option<f64>);
    let mut by_scenario: BTreeMap<ScenarioKind, Vec<(u64, ModelKind, usize, Pair)>> = BTreeMap::new();
    for run in runs {
        let scenario = run
            .scenario
            .ok_or_else(|| HarnessError::IncompleteReport(format!("run `{}` is not synthetic", run.label)))?;
        for hr in &run.horizons {
            by_scenario.entry(scenario).or_default().push((
                run.seed.unwrap_or(0),
                run.model,
                hr.horizon,
                (&hr.aci, &hr.bcaci, hr.post_shift_bias),
            ));
        }
    }

    let mut per_scenario = BTreeMap::new();
    let mut per_model: BTreeMap<String, BTreeMap<String, ScenarioSummary>> = BTreeMap::new();
    let mut cells = Vec::new();
    let mut paired_runs = 0;
    for (scenario, mut rows) in by_scenario {
        rows.sort_by_key(|r| (r.1, r.2, r.0));
        paired_runs += rows.len();
        let all: Vec<Pair> = rows.iter().map(|r| r.3).collect();
        per_scenario.insert(scenario.label().to_string(), summarize_pairs(&all)?);
        for &model in &spec.models {
            let of_model: Vec<Pair> = rows.iter().filter(|r| r.1 == model).map(|r| r.3).collect();
            if of_model.is_empty() {
                continue;
            }
            per_model
                .entry(model.label().to_string())
                .or_default()
                .insert(scenario.label().to_string(), summarize_pairs(&of_model)?);
            for &h in &spec.horizons {
                let cell: Vec<Pair> = rows.iter().filter(|r| r.1 == model && r.2 == h).map(|r| r.3).collect();
                if cell.is_empty() {
                    continue;
                }
                cells.push(CellSummary {
                    scenario,
                    model,
                    horizon: h,
                    summary: summarize_pairs(&cell)?,
                });
            }
        }
    }

    Ok(AggregateReport {
        config: spec.clone(),
        per_scenario,
        per_model,
        cells,
        runs: RunCounts {
            paired_runs,
            method_runs: 2 * paired_runs,
            excluded_real_data_runs: EXCLUDED_REAL_DATA_RUNS,
            note: format!(
                "synthetic grid only; the {EXCLUDED_REAL_DATA_RUNS} real-data runs need external datasets (see --csv)"
            ),
        },
        kill_test: None,
    })
}

/// Full grid: runs, aggregates and the kill-test verdict (when all four
/// scenarios are present).
pub fn run_grid(spec: &GridSpec) -> Result<AggregateReport, HarnessError> {
    let runs = run_grid_runs(spec)?;
    let mut report = summarize(spec, &runs)?;
    if ScenarioKind::ALL.iter().all(|k| report.per_scenario.contains_key(k.label())) {
        report.kill_test = Some(kill_test(&report)?);
    }
    Ok(report)
}
