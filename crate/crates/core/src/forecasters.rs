//! Base forecasters: direct ridge regression on lag windows and the random walk.
//!
//! Windows are always ordered oldest-first, most-recent-last:
//! `window[p - 1]` is the latest observation. A ridge model's `weights[j]`
//! multiplies `window[j]`, so the lag-1 coefficient is `weights[p - 1]`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("training prefix of {have} points is too short: lags {lags} + horizon {horizon} need at least {need}")]
    InsufficientData {
        have: usize,
        need: usize,
        lags: usize,
        horizon: usize,
    },
    #[error("invalid ridge parameters: {0}")]
    InvalidParameter(String),
    #[error("normal equations are not positive definite (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("window has {got} values, model expects {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("window contains a non-finite value")]
    NonFiniteWindow,
    #[error("empty window")]
    EmptyWindow,
}

/// Anything producing a point forecast from the most recent observations.
pub trait Forecaster {
    /// Number of trailing observations the model reads.
    fn lags(&self) -> usize;

    /// Point forecast; `window` holds exactly `lags()` values, most recent last.
    fn predict(&self, window: &[f64]) -> Result<f64, ForecastError>;
}

/// Linear model `intercept + weights . window` fitted for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: f64,
    pub horizon: usize,
}

impl RidgeModel {
    /// Coefficient on the observation `lag` steps back (`lag = 1` is the latest).
    pub fn lag_weight(&self, lag: usize) -> f64 {
        self.weights[self.weights.len() - lag]
    }
}

impl Forecaster for RidgeModel {
    fn lags(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, window: &[f64]) -> Result<f64, ForecastError> {
        ridge_predict(self, window)
    }
}

/// Design rows and targets for a direct `horizon`-step model: every window
/// `train[s-p+1..=s]` paired with `train[s + horizon]`, both inside the prefix.
pub fn lag_design(train: &[f64], lags: usize, horizon: usize) -> (Vec<&[f64]>, Vec<f64>) {
    if train.len() < lags + horizon {
        return (Vec::new(), Vec::new());
    }
    (lags - 1..train.len() - horizon)
        .map(|s| (&train[s + 1 - lags..=s], train[s + horizon]))
        .unzip()
}

/// Fits a direct ridge model mapping a `lags`-long window to the value
/// `horizon` steps after its last element.
///
/// Solves `(A'A + penalty * D) beta = A'y` where `A = [X | 1]` and `D` is the
/// identity on the weight block with a zero for the intercept, so the
/// intercept is unpenalised. Features are raw lags (no standardisation).
pub fn fit_ridge(
    train: &[f64],
    lags: usize,
    penalty: f64,
    horizon: usize,
) -> Result<RidgeModel, ForecastError> {
    if lags == 0 || horizon == 0 {
        return Err(ForecastError::InvalidParameter(format!(
            "lags ({lags}) and horizon ({horizon}) must be at least 1"
        )));
    }
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(ForecastError::InvalidParameter(format!(
            "penalty {penalty} must be positive and finite"
        )));
    }
    let need = lags + horizon + 1;
    if train.len() < need {
        return Err(ForecastError::InsufficientData {
            have: train.len(),
            need,
            lags,
            horizon,
        });
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFiniteWindow);
    }

    let dim = lags + 1;
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let (rows, targets) = lag_design(train, lags, horizon);
    let mut row = vec![1.0; dim];
    for (window, target) in rows.iter().zip(&targets) {
        row[..lags].copy_from_slice(window);
        for i in 0..dim {
            rhs[i] += row[i] * target;
            for j in 0..=i {
                gram[i * dim + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[j * dim + i] = gram[i * dim + j];
        }
    }
    for i in 0..lags {
        gram[i * dim + i] += penalty;
    }

    let beta = cholesky_solve(&mut gram, &rhs, dim)?;
    let weights = beta[..lags].to_vec();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(ForecastError::Singular {
            column: 0,
            pivot: f64::NAN,
        });
    }
    Ok(RidgeModel {
        weights,
        intercept: beta[lags],
        penalty,
        horizon,
    })
}

pub fn ridge_predict(model: &RidgeModel, window: &[f64]) -> Result<f64, ForecastError> {
    if window.len() != model.weights.len() {
        return Err(ForecastError::WindowLength {
            expected: model.weights.len(),
            got: window.len(),
        });
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFiniteWindow);
    }
    Ok(model.intercept + model.weights.iter().zip(window).map(|(w, x)| w * x).sum::<f64>())
}

/// In-place Cholesky factorisation of the row-major SPD matrix `a`
/// followed by forward and back substitution.
fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Result<Vec<f64>, ForecastError> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d.is_nan() || d <= 0.0 {
            return Err(ForecastError::Singular { column: j, pivot: d });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= a[i * n + k] * z[k];
        }
        z[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= a[k * n + i] * z[k];
        }
        z[i] /= a[i * n + i];
    }
    Ok(z)
}

/// Random walk: the forecast at every horizon is the last observed value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RandomWalkModel;

impl Forecaster for RandomWalkModel {
    fn lags(&self) -> usize {
        1
    }

    fn predict(&self, window: &[f64]) -> Result<f64, ForecastError> {
        random_walk_predict(window)
    }
}

pub fn random_walk_predict(window: &[f64]) -> Result<f64, ForecastError> {
    match window.last() {
        Some(v) if v.is_finite() => Ok(*v),
        Some(_) => Err(ForecastError::NonFiniteWindow),
        None => Err(ForecastError::EmptyWindow),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seriesgen::{generate, ScenarioKind, ScenarioSpec};

    /// Independent reference: build the full normal equations explicitly and
    /// solve with Gaussian elimination (partial pivoting).
    #[allow(clippy::needless_range_loop)]
    fn reference_ridge(train: &[f64], p: usize, penalty: f64, h: usize) -> Vec<f64> {
        let dim = p + 1;
        let mut m = vec![vec![0.0; dim + 1]; dim];
        for s in (p - 1)..(train.len() - h) {
            let mut x: Vec<f64> = train[s + 1 - p..=s].to_vec();
            x.push(1.0);
            let y = train[s + h];
            for i in 0..dim {
                for j in 0..dim {
                    m[i][j] += x[i] * x[j];
                }
                m[i][dim] += x[i] * y;
            }
        }
        for (i, row) in m.iter_mut().enumerate().take(p) {
            row[i] += penalty;
        }
        for col in 0..dim {
            let piv = (col..dim)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for r in 0..dim {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=dim {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        (0..dim).map(|i| m[i][dim] / m[i][i]).collect()
    }

    #[test]
    fn constant_series_predicts_constant() {
        let train = vec![3.25; 200];
        let model = fit_ridge(&train, 24, 1.0, 1).unwrap();
        let pred = model.predict(&[3.25; 24]).unwrap();
        assert!((pred - 3.25).abs() < 1e-6, "{pred}");
    }

    #[test]
    fn noiseless_ar1_recovers_coefficient() {
        let train: Vec<f64> = (0..60).map(|k| 10.0 * 0.8f64.powi(k)).collect();
        let model = fit_ridge(&train, 1, 1e-12, 1).unwrap();
        assert!((model.lag_weight(1) - 0.8).abs() < 1e-4, "{}", model.lag_weight(1));
        assert!(model.intercept.abs() < 1e-4);

        // With more lags the geometric sequence makes the lag columns collinear,
        // so only the fitted values are identified.
        let p = 3;
        let model = fit_ridge(&train, p, 1e-9, 1).unwrap();
        for s in p - 1..train.len() - 1 {
            let pred = model.predict(&train[s + 1 - p..=s]).unwrap();
            assert!((pred - 0.8 * train[s]).abs() < 1e-4);
        }
    }

    #[test]
    fn matches_reference_on_stable_prefix() {
        let s = generate(&ScenarioSpec::new(ScenarioKind::Stable, 0)).unwrap();
        for h in [1, 5, 12, 24] {
            let model = fit_ridge(s.train(), 24, 1.0, h).unwrap();
            let reference = reference_ridge(s.train(), 24, 1.0, h);
            for (a, b) in model.weights.iter().chain([&model.intercept]).zip(&reference) {
                assert!((a - b).abs() < 1e-8, "h={h}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn normal_equations_hold() {
        let s = generate(&ScenarioSpec::new(ScenarioKind::Stable, 4)).unwrap();
        let (p, pen, h) = (24, 1.0, 5);
        let model = fit_ridge(s.train(), p, pen, h).unwrap();
        let mut beta = model.weights.clone();
        beta.push(model.intercept);
        let (rows, targets) = lag_design(s.train(), p, h);
        // gradient of the penalised objective: A'(A beta - y) + pen * D beta
        let mut grad = vec![0.0; p + 1];
        for (w, y) in rows.iter().zip(&targets) {
            let fitted = ridge_predict(&model, w).unwrap();
            for i in 0..p {
                grad[i] += w[i] * (fitted - y);
            }
            grad[p] += fitted - y;
        }
        for i in 0..p {
            grad[i] += pen * beta[i];
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-8, "residual norm {norm}");
    }

    #[test]
    fn predict_trivial_models() {
        let zero = RidgeModel {
            weights: vec![0.0; 4],
            intercept: 7.0,
            penalty: 1.0,
            horizon: 1,
        };
        assert_eq!(zero.predict(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 7.0);
        let last = RidgeModel {
            weights: vec![0.0, 0.0, 0.0, 1.0],
            intercept: 0.0,
            penalty: 1.0,
            horizon: 1,
        };
        assert_eq!(last.predict(&[9.0, 9.0, 9.0, 3.5]).unwrap(), 3.5);
        assert_eq!(
            last.predict(&[1.0, 2.0]),
            Err(ForecastError::WindowLength { expected: 4, got: 2 })
        );
    }

    #[test]
    fn insufficient_training_data() {
        let err = fit_ridge(&[1.0; 25], 24, 1.0, 1).unwrap_err();
        assert!(matches!(err, ForecastError::InsufficientData { need: 26, .. }));
        assert!(fit_ridge(&[1.0; 26], 24, 1.0, 1).is_ok());
        assert!(matches!(
            fit_ridge(&[1.0; 100], 24, 0.0, 1),
            Err(ForecastError::InvalidParameter(_))
        ));
    }

    #[test]
    fn random_walk() {
        assert_eq!(random_walk_predict(&[1.0, 2.0, 7.3]).unwrap(), 7.3);
        assert_eq!(RandomWalkModel.predict(&[7.3]).unwrap(), 7.3);
        assert_eq!(random_walk_predict(&[]), Err(ForecastError::EmptyWindow));
        let constant = [4.0; 10];
        for w in constant.windows(3) {
            assert_eq!(constant[0] - random_walk_predict(w).unwrap(), 0.0);
        }
    }

    fn post_shift_mean_residual(model: &dyn Forecaster, values: &[f64], h: usize) -> f64 {
        let p = model.lags();
        // forecasts made at 0-based s with target s + h beyond the shift (t > 1000)
        let res: Vec<f64> = (999..values.len() - h)
            .map(|s| values[s + h] - model.predict(&values[s + 1 - p..=s]).unwrap())
            .collect();
        res.iter().sum::<f64>() / res.len() as f64
    }

    #[test]
    fn persistent_versus_self_correcting_bias() {
        let mut ridge_h1 = Vec::new();
        let mut ridge_all = Vec::new();
        let mut rw_h1 = Vec::new();
        for seed in 0..10 {
            let s = generate(&ScenarioSpec::new(ScenarioKind::MeanShift, seed)).unwrap();
            for h in [1, 5, 12, 24] {
                let model = fit_ridge(s.train(), 24, 1.0, h).unwrap();
                let b = post_shift_mean_residual(&model, &s.values, h);
                ridge_all.push(b);
                if h == 1 {
                    ridge_h1.push(b);
                    rw_h1.push(post_shift_mean_residual(&RandomWalkModel, &s.values, 1));
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        // pooled over horizons, as in the model-breakdown table (40 runs)
        let pooled = mean(&ridge_all);
        assert!((pooled - 3.99).abs() < 0.5, "ridge pooled bias {pooled}");
        // at h = 1 the ridge keeps roughly (1 - sum of weights) * delta
        let h1 = mean(&ridge_h1);
        assert!(h1 > 0.5 && h1 < 2.0, "ridge h=1 bias {h1}");
        let rw = mean(&rw_h1);
        assert!(rw.abs() < 0.2, "random walk bias {rw}");
    }
}
