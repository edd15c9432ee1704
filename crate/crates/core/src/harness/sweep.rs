//! One-parameter sensitivity sweeps over the bias-correction settings.

use serde::{Deserialize, Serialize};

use super::{pooled_summary, run_grid_runs, GridSpec, HarnessError};
use crate::calibration::CalibratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub aci_winkler: f64,
    pub bcaci_winkler: f64,
    pub ratio: f64,
    pub bcaci_coverage: f64,
    pub correction_rate: f64,
}

fn sweep(
    spec: &GridSpec,
    parameter: &str,
    values: &[f64],
    set: impl Fn(&mut CalibratorConfig, f64),
) -> Result<Vec<SweepRow>, HarnessError> {
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = spec.clone();
        set(&mut s.calibrator, v);
        s.calibrator.validate()?;
        let pooled = pooled_summary(&run_grid_runs(&s)?)?;
        rows.push(SweepRow {
            parameter: parameter.to_string(),
            value: v,
            aci_winkler: pooled.aci.winkler,
            bcaci_winkler: pooled.bcaci.winkler,
            ratio: pooled.ratio,
            bcaci_coverage: pooled.bcaci.coverage,
            correction_rate: pooled.bcaci.correction_rate,
        });
    }
    Ok(rows)
}

/// BC-ACI over `spec` for each EWM rate in `lambdas`.
pub fn lambda_sweep(spec: &GridSpec, lambdas: &[f64]) -> Result<Vec<SweepRow>, HarnessError> {
    sweep(spec, "lambda", lambdas, |c, v| c.lambda = v)
}

/// BC-ACI over `spec` for each dead-zone multiplier in `ks`.
pub fn k_sweep(spec: &GridSpec, ks: &[f64]) -> Result<Vec<SweepRow>, HarnessError> {
    sweep(spec, "k", ks, |c, v| c.k = v)
}
