//! Pre-registered four-criterion gate over an aggregate report.

use serde::{Deserialize, Serialize};

use super::{AggregateReport, HarnessError};
use crate::seriesgen::ScenarioKind;

/// Ratio below which a non-stationary scenario counts as improved.
pub const IMPROVEMENT_RATIO: f64 = 0.95;
/// Ceiling on the Stable ratio.
pub const STABLE_RATIO_MAX: f64 = 1.05;
/// Floor on coverage in every (scenario, model, horizon) cell.
pub const CELL_COVERAGE_MIN: f64 = 0.80;
/// Significance level for the CompoundShift Wilcoxon test.
pub const COMPOUND_P_MAX: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KillTestVerdict {
    /// Ratio < 0.95 on at least two non-stationary scenarios.
    pub c1: bool,
    /// Stable ratio < 1.05.
    pub c2: bool,
    /// Coverage >= 0.80 for both methods in every cell.
    pub c3: bool,
    /// CompoundShift one-sided p < 0.05.
    pub c4: bool,
    pub pass: bool,
}

pub fn kill_test(report: &AggregateReport) -> Result<KillTestVerdict, HarnessError> {
    let get = |k: ScenarioKind| {
        report
            .per_scenario
            .get(k.label())
            .ok_or_else(|| HarnessError::IncompleteReport(format!("scenario `{k}` missing")))
    };
    let stable = get(ScenarioKind::Stable)?;
    let shifted = [ScenarioKind::MeanShift, ScenarioKind::VolShift, ScenarioKind::CompoundShift]
        .map(get)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    for k in ScenarioKind::ALL {
        if !report.cells.iter().any(|c| c.scenario == k) {
            return Err(HarnessError::IncompleteReport(format!("no cells for scenario `{k}`")));
        }
    }

    let c1 = shifted.iter().filter(|s| s.ratio < IMPROVEMENT_RATIO).count() >= 2;
    let c2 = stable.ratio < STABLE_RATIO_MAX;
    let c3 = report
        .cells
        .iter()
        .all(|c| c.summary.aci.coverage >= CELL_COVERAGE_MIN && c.summary.bcaci.coverage >= CELL_COVERAGE_MIN);
    let c4 = shifted[2].p_value.is_some_and(|p| p < COMPOUND_P_MAX);
    Ok(KillTestVerdict {
        c1,
        c2,
        c3,
        c4,
        pass: c1 && c2 && c3 && c4,
    })
}
