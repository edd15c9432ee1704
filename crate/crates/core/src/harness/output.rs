//! Report and trace files. Floats are written in shortest round-trip form, so
//! identical inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    run_one, AggregateReport, DataSource, GridSpec, HarnessError, HorizonResult, ModelKind, RunConfig,
    ScenarioSummary, TraceRow,
};
use crate::seriesgen::{ScenarioKind, ScenarioSpec};

/// The run whose per-step traces are exported next to the grid report.
pub const TRACE_SCENARIO: ScenarioKind = ScenarioKind::MeanShift;
pub const TRACE_MODEL: ModelKind = ModelKind::Ridge;
pub const TRACE_HORIZON: usize = 1;
pub const TRACE_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFiles {
    pub report_json: PathBuf,
    pub summary_csv: PathBuf,
    pub models_csv: PathBuf,
    pub cells_csv: PathBuf,
    pub scenario_csvs: Vec<PathBuf>,
    pub trace_csvs: Vec<PathBuf>,
}

const TRACE_HEADER: [&str; 9] = ["t", "y", "y_hat", "lower", "upper", "alpha_t", "b_hat", "tau", "corrected"];

const SUMMARY_COLUMNS: [&str; 12] = [
    "aci_winkler",
    "aci_coverage",
    "aci_width",
    "bcaci_winkler",
    "bcaci_coverage",
    "bcaci_width",
    "ratio",
    "p_value",
    "n_pairs",
    "aci_correction_rate",
    "bcaci_correction_rate",
    "post_shift_bias",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_fields(s: &ScenarioSummary) -> Vec<String> {
    vec![
        s.aci.winkler.to_string(),
        s.aci.coverage.to_string(),
        s.aci.width.to_string(),
        s.bcaci.winkler.to_string(),
        s.bcaci.coverage.to_string(),
        s.bcaci.width.to_string(),
        s.ratio.to_string(),
        opt(s.p_value),
        s.n_pairs.to_string(),
        s.aci.correction_rate.to_string(),
        s.bcaci.correction_rate.to_string(),
        opt(s.post_shift_bias),
    ]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_table(path: &Path, keys: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(keys.iter().chain(SUMMARY_COLUMNS.iter()))?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))
}

/// Renders a trace as CSV text.
pub fn trace_csv(rows: &[TraceRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.y.to_string(),
            r.y_hat.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.alpha_t.to_string(),
            r.b_hat.to_string(),
            r.tau.to_string(),
            u8::from(r.corrected).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<(), HarnessError> {
    fs::write(path, trace_csv(rows)?).map_err(io_err(path))
}

/// Re-runs the designated trace configuration under the grid's settings.
pub fn designated_trace(spec: &GridSpec) -> Result<HorizonResult, HarnessError> {
    let config = RunConfig {
        source: DataSource::Synthetic(ScenarioSpec::new(TRACE_SCENARIO, TRACE_SEED)),
        model: TRACE_MODEL,
        horizons: vec![TRACE_HORIZON],
        calibrator: spec.calibrator.clone(),
        lags: spec.lags,
        penalty: spec.penalty,
        record_trace: true,
    };
    let mut run = run_one(&config)?;
    Ok(run.horizons.remove(0))
}

/// Writes the report JSON, the summary tables and, when given, the two
/// per-step traces of one run into `out_dir` (created if absent).
pub fn emit_outputs(
    report: &AggregateReport,
    trace: Option<&HorizonResult>,
    out_dir: &Path,
) -> Result<OutputFiles, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let report_json = out_dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&report_json, text).map_err(io_err(&report_json))?;

    let summary_csv = out_dir.join("summary.csv");
    write_table(
        &summary_csv,
        &["scenario"],
        report.per_scenario.iter().map(|(k, s)| {
            let mut row = vec![k.clone()];
            row.extend(summary_fields(s));
            row
        }),
    )?;

    let models_csv = out_dir.join("models.csv");
    write_table(
        &models_csv,
        &["model", "scenario"],
        report.per_model.iter().flat_map(|(m, by_scenario)| {
            by_scenario.iter().map(move |(k, s)| {
                let mut row = vec![m.clone(), k.clone()];
                row.extend(summary_fields(s));
                row
            })
        }),
    )?;

    let cell_row = |c: &super::CellSummary| {
        let mut row = vec![c.scenario.label().to_string(), c.model.label().to_string(), c.horizon.to_string()];
        row.extend(summary_fields(&c.summary));
        row
    };
    let cells_csv = out_dir.join("cells.csv");
    write_table(&cells_csv, &["scenario", "model", "horizon"], report.cells.iter().map(cell_row))?;

    let mut scenario_csvs = Vec::new();
    for k in report.per_scenario.keys() {
        let path = out_dir.join(format!("scenario_{k}.csv"));
        write_table(
            &path,
            &["scenario", "model", "horizon"],
            report.cells.iter().filter(|c| c.scenario.label() == k).map(cell_row),
        )?;
        scenario_csvs.push(path);
    }

    let mut trace_csvs = Vec::new();
    if let Some(hr) = trace {
        for (name, rows) in [("trace_aci.csv", &hr.trace_aci), ("trace_bcaci.csv", &hr.trace_bcaci)] {
            let path = out_dir.join(name);
            write_trace_csv(&path, rows)?;
            trace_csvs.push(path);
        }
    }

    Ok(OutputFiles {
        report_json,
        summary_csv,
        models_csv,
        cells_csv,
        scenario_csvs,
        trace_csvs,
    })
}
