//! Per-horizon adaptive conformal calibration with optional bias correction.
//!
//! A [`HorizonCalibrator`] is driven by two calls per time step:
//!
//! 1. [`HorizonCalibrator::observe`] delivers the realised value for the
//!    oldest outstanding prediction (made `h` steps earlier). Its signed
//!    residual enters the FIFO buffer, the adaptive level is stepped with the
//!    miss indicator of the interval that was emitted for it, and the
//!    exponentially weighted bias estimate is updated (or initialised as the
//!    buffer mean once `n0` residuals are available).
//! 2. [`HorizonCalibrator::emit`] turns a new point prediction into an
//!    interval. When correction is enabled, initialised and the bias estimate
//!    leaves the dead-zone `|b| > k * MAD(buffer)`, scores are `|e_i - b|`
//!    and the interval is centred at `y_hat + b`; otherwise scores are `|e_i|`
//!    around `y_hat`. The half-width is the conformal quantile of the scores
//!    at the current adaptive level.
//!
//! Plain ACI is the same state machine with `bias_correction = false`.
//! Stored residuals are always raw; correction is applied to a scratch copy.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this many buffered residuals the half-width is the largest score.
pub const FALLBACK_MIN_BUFFER: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("invalid calibrator config: {0}")]
    InvalidConfig(String),
    #[error("empty score set")]
    EmptyScores,
    #[error("emit called before any residual is buffered (prime the calibrator first)")]
    ColdStart,
    #[error("observe called with no outstanding prediction")]
    NothingPending,
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorConfig {
    /// Target miscoverage level.
    pub alpha: f64,
    /// ACI step size.
    pub gamma: f64,
    /// EWM rate of the bias estimate.
    pub lambda: f64,
    /// Dead-zone multiplier on the buffer MAD.
    pub k: f64,
    /// Residual buffer capacity.
    pub window: usize,
    /// Residuals needed before the bias estimate is initialised.
    pub n0: usize,
    pub bias_correction: bool,
}

impl Default for CalibratorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            gamma: 0.005,
            lambda: 0.05,
            k: 0.5,
            window: 200,
            n0: 50,
            bias_correction: true,
        }
    }
}

impl CalibratorConfig {
    /// Same settings with bias correction switched off (standard ACI).
    pub fn aci(&self) -> Self {
        Self {
            bias_correction: false,
            ..self.clone()
        }
    }

    /// Same settings with bias correction switched on.
    pub fn bc_aci(&self) -> Self {
        Self {
            bias_correction: true,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma {} must be positive", self.gamma));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda {} not in (0, 1)", self.lambda));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return bad(format!("k {} must be non-negative", self.k));
        }
        if self.n0 == 0 || self.window < self.n0 {
            return bad(format!(
                "need window >= n0 >= 1, got window {} and n0 {}",
                self.window, self.n0
            ));
        }
        Ok(())
    }
}

/// A symmetric prediction interval plus the calibrator state that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub half_width: f64,
    /// Whether the bias correction fired for this interval.
    pub corrected: bool,
    /// Adaptive level the quantile was taken at.
    pub alpha_used: f64,
    /// Bias estimate at emission time (reported even when not applied).
    pub bias: f64,
    /// Dead-zone threshold `k * MAD` at emission time.
    pub threshold: f64,
}

impl Interval {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self {
            lower: center - half_width,
            upper: center + half_width,
            center,
            half_width,
            corrected: false,
            alpha_used: f64::NAN,
            bias: 0.0,
            threshold: 0.0,
        }
    }

    /// Closed-interval membership. This is the single coverage predicate used
    /// both for the ACI miss indicator and for coverage metrics.
    pub fn covers(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Result of delivering one realised value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Time index the interval was emitted at (as passed to `emit_at`).
    pub emitted_at: usize,
    pub prediction: f64,
    pub interval: Interval,
    pub y: f64,
    pub residual: f64,
    pub covered: bool,
}

#[derive(Debug, Clone)]
struct Pending {
    emitted_at: usize,
    prediction: f64,
    interval: Interval,
}

/// One step of the ACI level update: `alpha_t + gamma * (alpha - err)`.
/// The level is left unclamped.
pub fn aci_update(alpha_t: f64, gamma: f64, alpha: f64, miss: bool) -> f64 {
    alpha_t + gamma * (alpha - if miss { 1.0 } else { 0.0 })
}

/// 1-based order-statistic index `ceil((n + 1)(1 - alpha_t))` clamped to `[1, n]`.
pub fn quantile_rank(n: usize, alpha_t: f64) -> usize {
    let j = ((n as f64 + 1.0) * (1.0 - alpha_t)).ceil();
    if j.is_nan() || j > n as f64 {
        n
    } else if j < 1.0 {
        1
    } else {
        j as usize
    }
}

/// Conformal quantile: the `quantile_rank(n, alpha_t)`-th smallest score.
pub fn conformal_quantile(scores: &[f64], alpha_t: f64) -> Result<f64, CalibrationError> {
    let mut scratch = scores.to_vec();
    conformal_quantile_in_place(&mut scratch, alpha_t)
}

/// As [`conformal_quantile`] but reorders `scores` instead of copying.
pub fn conformal_quantile_in_place(scores: &mut [f64], alpha_t: f64) -> Result<f64, CalibrationError> {
    if scores.is_empty() {
        return Err(CalibrationError::EmptyScores);
    }
    let j = quantile_rank(scores.len(), alpha_t);
    Ok(*scores.select_nth_unstable_by(j - 1, f64::total_cmp).1)
}

fn median_in_place(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    let (_, upper, _) = xs.select_nth_unstable_by(n / 2, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        // the lower middle is the max of the left partition
        let lower = xs[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Median; even lengths average the two middle order statistics.
pub fn median(xs: &[f64]) -> Result<f64, CalibrationError> {
    if xs.is_empty() {
        return Err(CalibrationError::EmptyScores);
    }
    Ok(median_in_place(&mut xs.to_vec()))
}

/// Median absolute deviation `med(|e_i - med(e)|)`, unscaled.
pub fn mad<'a, I>(values: I) -> Result<f64, CalibrationError>
where
    I: IntoIterator<Item = &'a f64>,
{
    let mut scratch: Vec<f64> = values.into_iter().copied().collect();
    if scratch.is_empty() {
        return Err(CalibrationError::EmptyScores);
    }
    Ok(mad_in_place(&mut scratch))
}

fn mad_in_place(xs: &mut [f64]) -> f64 {
    let m = median_in_place(xs);
    for x in xs.iter_mut() {
        *x = (*x - m).abs();
    }
    median_in_place(xs)
}

/// Calibration state for a single forecast horizon.
#[derive(Debug, Clone)]
pub struct HorizonCalibrator {
    horizon: usize,
    cfg: CalibratorConfig,
    buffer: VecDeque<f64>,
    alpha_t: f64,
    bias: f64,
    initialized: bool,
    pending: VecDeque<Pending>,
    observed: usize,
    emitted: usize,
    scratch: Vec<f64>,
}

impl HorizonCalibrator {
    pub fn new(horizon: usize, cfg: CalibratorConfig) -> Result<Self, CalibrationError> {
        cfg.validate()?;
        if horizon == 0 {
            return Err(CalibrationError::InvalidConfig("horizon must be >= 1".into()));
        }
        Ok(Self {
            horizon,
            alpha_t: cfg.alpha,
            buffer: VecDeque::with_capacity(cfg.window),
            scratch: Vec::with_capacity(cfg.window),
            cfg,
            bias: 0.0,
            initialized: false,
            pending: VecDeque::with_capacity(horizon + 1),
            observed: 0,
            emitted: 0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn config(&self) -> &CalibratorConfig {
        &self.cfg
    }

    pub fn alpha_t(&self) -> f64 {
        self.alpha_t
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn buffer(&self) -> impl ExactSizeIterator<Item = &f64> + '_ {
        self.buffer.iter()
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Number of `observe` calls so far (primed residuals not included).
    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Seeds the buffer with a residual known before streaming starts
    /// (e.g. an in-sample residual). Does not touch the level or the bias.
    pub fn prime(&mut self, residual: f64) -> Result<(), CalibrationError> {
        if !residual.is_finite() {
            return Err(CalibrationError::NonFinite(residual));
        }
        self.push_residual(residual);
        Ok(())
    }

    fn push_residual(&mut self, e: f64) {
        if self.buffer.len() == self.cfg.window {
            self.buffer.pop_front();
        }
        self.buffer.push_back(e);
    }

    /// Current dead-zone threshold `k * MAD(buffer)`.
    pub fn threshold(&mut self) -> f64 {
        if self.buffer.is_empty() {
            return 0.0;
        }
        self.scratch.clear();
        self.scratch.extend(self.buffer.iter().copied());
        self.cfg.k * mad_in_place(&mut self.scratch)
    }

    /// Emits an interval for a new point prediction and queues it for
    /// a later [`observe`](Self::observe).
    pub fn emit(&mut self, y_hat: f64) -> Result<Interval, CalibrationError> {
        let t = self.emitted;
        self.emit_at(t, y_hat)
    }

    /// As [`emit`](Self::emit), tagging the pending record with a caller time index.
    pub fn emit_at(&mut self, t: usize, y_hat: f64) -> Result<Interval, CalibrationError> {
        if !y_hat.is_finite() {
            return Err(CalibrationError::NonFinite(y_hat));
        }
        if self.buffer.is_empty() {
            return Err(CalibrationError::ColdStart);
        }
        let threshold = self.threshold();
        let corrected = self.cfg.bias_correction && self.initialized && self.bias.abs() > threshold;
        let shift = if corrected { self.bias } else { 0.0 };

        self.scratch.clear();
        self.scratch.extend(self.buffer.iter().map(|e| (e - shift).abs()));
        let (half_width, alpha_used) = if self.buffer.len() < FALLBACK_MIN_BUFFER {
            let max = self.scratch.iter().copied().fold(0.0, f64::max);
            (max, self.cfg.alpha)
        } else {
            let q = conformal_quantile_in_place(&mut self.scratch, self.alpha_t)?;
            (q, self.alpha_t)
        };

        let center = y_hat + shift;
        let interval = Interval {
            lower: center - half_width,
            upper: center + half_width,
            center,
            half_width,
            corrected,
            alpha_used,
            bias: self.bias,
            threshold,
        };
        self.pending.push_back(Pending {
            emitted_at: t,
            prediction: y_hat,
            interval,
        });
        self.emitted += 1;
        Ok(interval)
    }

    /// Delivers the realised value for the oldest outstanding prediction.
    pub fn observe(&mut self, y: f64) -> Result<Observation, CalibrationError> {
        if !y.is_finite() {
            return Err(CalibrationError::NonFinite(y));
        }
        let Pending {
            emitted_at,
            prediction,
            interval,
        } = self.pending.pop_front().ok_or(CalibrationError::NothingPending)?;

        let e = y - prediction;
        self.push_residual(e);
        let covered = interval.covers(y);
        self.alpha_t = aci_update(self.alpha_t, self.cfg.gamma, self.cfg.alpha, !covered);

        if !self.initialized && self.buffer.len() >= self.cfg.n0 {
            self.bias = self.buffer.iter().sum::<f64>() / self.buffer.len() as f64;
            self.initialized = true;
        } else if self.initialized {
            self.bias = (1.0 - self.cfg.lambda) * self.bias + self.cfg.lambda * e;
        }
        self.observed += 1;

        Ok(Observation {
            emitted_at,
            prediction,
            interval,
            y,
            residual: e,
            covered,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseSource;

    fn cfg() -> CalibratorConfig {
        CalibratorConfig::default()
    }

    #[test]
    fn aci_update_arithmetic() {
        assert!((aci_update(0.10, 0.005, 0.10, true) - 0.0955).abs() < 1e-15);
        assert!((aci_update(0.10, 0.005, 0.10, false) - 0.1005).abs() < 1e-15);
    }

    #[test]
    fn quantile_rank_examples() {
        assert_eq!(quantile_rank(200, 0.10), 181);
        assert_eq!(quantile_rank(5, 0.0), 5);
        assert_eq!(quantile_rank(5, -0.3), 5);
        assert_eq!(quantile_rank(5, 1.0), 1);
        assert_eq!(quantile_rank(5, 1.7), 1);
    }

    #[test]
    fn quantile_clamps() {
        let s = [3.0, 1.0, 5.0, 2.0, 4.0];
        assert_eq!(conformal_quantile(&s, 0.0).unwrap(), 5.0);
        assert_eq!(conformal_quantile(&s, 1.0).unwrap(), 1.0);
        let scores: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(conformal_quantile(&scores, 0.10).unwrap(), 181.0);
        assert_eq!(conformal_quantile(&[], 0.1), Err(CalibrationError::EmptyScores));
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap(), 1.0);
        assert_eq!(mad(&[2.5; 7]).unwrap(), 0.0);
        // even length: med = 2.5, deviations {1.5, 0.5, 0.5, 1.5} -> 1.0
        assert_eq!(mad(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert!(mad(&[]).is_err());
    }

    #[test]
    fn mad_of_gaussian() {
        let mut r = NoiseSource::new(9);
        let xs: Vec<f64> = (0..10_000).map(|_| r.gaussian()).collect();
        let m = mad(&xs).unwrap();
        assert!((m - 0.6745).abs() < 0.02, "{m}");
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        for bad in [
            CalibratorConfig { alpha: 0.0, ..cfg() },
            CalibratorConfig { alpha: 1.0, ..cfg() },
            CalibratorConfig { gamma: 0.0, ..cfg() },
            CalibratorConfig { lambda: 1.0, ..cfg() },
            CalibratorConfig { k: -0.1, ..cfg() },
            CalibratorConfig { n0: 0, ..cfg() },
            CalibratorConfig { window: 10, n0: 50, ..cfg() },
        ] {
            assert!(HorizonCalibrator::new(1, bad).is_err());
        }
        assert!(HorizonCalibrator::new(0, cfg()).is_err());
    }

    #[test]
    fn protocol_errors() {
        let mut c = HorizonCalibrator::new(1, cfg()).unwrap();
        assert_eq!(c.emit(1.0), Err(CalibrationError::ColdStart));
        assert_eq!(c.observe(1.0).unwrap_err(), CalibrationError::NothingPending);
        c.prime(0.5).unwrap();
        assert!(c.emit(1.0).is_ok());
        assert!(matches!(c.observe(f64::NAN), Err(CalibrationError::NonFinite(_))));
        assert!(c.observe(1.0).is_ok());
        assert_eq!(c.pending_len(), 0);
    }

    /// Builds an initialised calibrator whose buffer holds `residuals`.
    fn loaded(residuals: &[f64], cfg: CalibratorConfig) -> HorizonCalibrator {
        let mut c = HorizonCalibrator::new(1, cfg).unwrap();
        c.prime(residuals[0]).unwrap();
        for &e in &residuals[1..] {
            // emit at 0 then observe e so the residual is exactly e
            c.emit(0.0).unwrap();
            c.observe(e).unwrap();
        }
        c
    }

    #[test]
    fn ewm_single_step() {
        let mut c = loaded(&[0.0; 60], cfg());
        assert!(c.is_initialized());
        assert_eq!(c.bias(), 0.0);
        c.emit(0.0).unwrap();
        c.observe(4.0).unwrap();
        assert!((c.bias() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn bias_initialises_to_buffer_mean_at_n0() {
        let residuals: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() + 0.3).collect();
        let mut c = loaded(&residuals[..49], cfg());
        assert!(!c.is_initialized());
        assert_eq!(c.bias(), 0.0);
        c.emit(0.0).unwrap();
        c.observe(residuals[49]).unwrap();
        assert!(c.is_initialized());
        let mean = residuals.iter().sum::<f64>() / 50.0;
        assert!((c.bias() - mean).abs() < 1e-12);
    }

    #[test]
    fn ewm_converges_on_constant_stream() {
        let mut c = loaded(&[0.0; 50], cfg());
        assert!(c.is_initialized());
        let target = 3.0;
        // ceil(ln 0.01 / ln 0.95) = 90
        let steps = (0.01f64.ln() / 0.95f64.ln()).ceil() as usize;
        assert_eq!(steps, 90);
        for _ in 0..steps {
            c.emit(0.0).unwrap();
            c.observe(target).unwrap();
        }
        assert!((c.bias() - target).abs() < 0.01 * target);
    }

    #[test]
    fn fired_correction_recenters() {
        // buffer of residuals 4 +/- 1 so |b| = 4 exceeds k * MAD = 0.5
        let residuals: Vec<f64> = (0..100).map(|i| 4.0 + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut c = loaded(&residuals, cfg());
        assert!((c.bias() - 4.0).abs() < 0.1, "{}", c.bias());
        let b = c.bias();
        let scores: Vec<f64> = c.buffer().map(|e| (e - b).abs()).collect();
        let expected_q = conformal_quantile(&scores, c.alpha_t()).unwrap();
        let iv = c.emit(10.0).unwrap();
        assert!(iv.corrected);
        assert_eq!(iv.center, 10.0 + b);
        assert_eq!(iv.half_width, expected_q);
        assert_eq!(iv.lower, iv.center - iv.half_width);
        assert_eq!(iv.upper, iv.center + iv.half_width);
    }

    #[test]
    fn line_by_line_example() {
        // buffer {2, 6}: b = 4, MAD = 2 so tau = 1 and the correction fires;
        // corrected scores are {2, 2} so q = 2
        let mut c = HorizonCalibrator::new(1, CalibratorConfig { n0: 2, ..cfg() }).unwrap();
        c.prime(2.0).unwrap();
        c.emit(0.0).unwrap();
        c.observe(6.0).unwrap();
        assert_eq!(c.bias(), 4.0);
        let iv = c.emit(10.0).unwrap();
        assert!(iv.corrected);
        assert_eq!(iv.threshold, 1.0);
        assert_eq!((iv.lower, iv.center, iv.upper), (12.0, 14.0, 16.0));
    }

    #[test]
    fn dead_zone_branch_equals_aci() {
        let mut noise = NoiseSource::new(5);
        let stream: Vec<f64> = (0..600).map(|_| noise.gaussian()).collect();
        let mut aci = HorizonCalibrator::new(1, cfg().aci()).unwrap();
        // enormous k keeps every bias estimate inside the dead-zone
        let mut bc = HorizonCalibrator::new(1, CalibratorConfig { k: 1e12, ..cfg() }).unwrap();
        aci.prime(stream[0]).unwrap();
        bc.prime(stream[0]).unwrap();
        for &y in &stream[1..] {
            let a = aci.emit(0.0).unwrap();
            let b = bc.emit(0.0).unwrap();
            assert!(!b.corrected);
            assert_eq!(a.lower.to_bits(), b.lower.to_bits());
            assert_eq!(a.upper.to_bits(), b.upper.to_bits());
            aci.observe(y).unwrap();
            bc.observe(y).unwrap();
        }
        assert!(bc.is_initialized());
    }

    #[test]
    fn pending_conservation() {
        let h = 4;
        let mut c = HorizonCalibrator::new(h, cfg()).unwrap();
        c.prime(1.0).unwrap();
        let mut noise = NoiseSource::new(1);
        let mut emits = 0usize;
        let mut observes = 0usize;
        for t in 0..300 {
            if t >= h {
                c.observe(noise.gaussian()).unwrap();
                observes += 1;
            }
            c.emit_at(t, 0.0).unwrap();
            emits += 1;
            assert_eq!(emits - observes, c.pending_len());
            assert!(c.pending_len() <= h);
            assert!(c.buffer_len() <= c.config().window);
        }
    }

    #[test]
    fn observation_reports_emission_time() {
        let mut c = HorizonCalibrator::new(2, cfg()).unwrap();
        c.prime(1.0).unwrap();
        c.emit_at(10, 1.0).unwrap();
        c.emit_at(11, 2.0).unwrap();
        let o = c.observe(1.5).unwrap();
        assert_eq!(o.emitted_at, 10);
        assert_eq!(o.prediction, 1.0);
        assert_eq!(o.residual, 0.5);
    }

    #[test]
    fn boundary_counts_as_covered() {
        let iv = Interval::new(1.0, 1.0);
        assert!(iv.covers(0.0));
        assert!(iv.covers(2.0));
        assert!(!iv.covers(2.0 + 1e-12));
    }

    #[test]
    fn fallback_uses_max_score_at_target_level() {
        let mut c = HorizonCalibrator::new(1, cfg()).unwrap();
        c.prime(-3.0).unwrap();
        c.emit(0.0).unwrap();
        c.observe(1.0).unwrap();
        let iv = c.emit(0.0).unwrap();
        assert_eq!(iv.half_width, 3.0);
        assert_eq!(iv.alpha_used, 0.10);
    }

    #[test]
    fn buffer_evicts_fifo() {
        let mut c = HorizonCalibrator::new(1, CalibratorConfig { window: 50, n0: 50, ..cfg() }).unwrap();
        c.prime(0.0).unwrap();
        for i in 1..=120 {
            c.emit(0.0).unwrap();
            c.observe(i as f64).unwrap();
        }
        assert_eq!(c.buffer_len(), 50);
        let kept: Vec<f64> = c.buffer().copied().collect();
        assert_eq!(kept.first(), Some(&71.0));
        assert_eq!(kept.last(), Some(&120.0));
    }
}
