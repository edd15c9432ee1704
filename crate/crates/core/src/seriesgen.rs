//! Synthetic regime-shift scenarios and external series ingestion.
//!
//! All scenarios share a stationary AR(1) backbone `y_t = phi * y_{t-1} + eps_t`
//! started from `y_0 = 0` with a discarded burn-in. After `shift_at` the
//! scenario kind decides what changes:
//!
//! | kind          | innovation std-dev | emitted value     |
//! |---------------|--------------------|-------------------|
//! | Stable        | `pre_sigma`        | `y_t`             |
//! | MeanShift     | `pre_sigma`        | `y_t + level_delta` |
//! | VolShift      | `post_sigma`       | `y_t`             |
//! | CompoundShift | `post_sigma`       | `y_t + level_delta` |
//!
//! The level shift is added to the emitted observation only; the recursion
//! itself never sees it.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::NoiseSource;

/// Burn-in steps discarded before the first emitted value.
pub const BURN_IN: usize = 200;

/// Default length of the training prefix.
pub const DEFAULT_TRAIN_LEN: usize = 500;

/// Default truncation length for ingested series.
pub const DEFAULT_MAX_LEN: usize = 2000;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{cell}` as a number")]
    Unparsable { row: usize, cell: String },
    #[error("row {row}: non-finite value `{cell}`")]
    NonFinite { row: usize, cell: String },
    #[error("series has {len} values, needs more than the {train_len}-point training prefix")]
    TooShort { len: usize, train_len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Stable,
    MeanShift,
    VolShift,
    CompoundShift,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Stable,
        ScenarioKind::MeanShift,
        ScenarioKind::VolShift,
        ScenarioKind::CompoundShift,
    ];

    /// Snake-case label used in reports and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::Stable => "stable",
            ScenarioKind::MeanShift => "mean_shift",
            ScenarioKind::VolShift => "vol_shift",
            ScenarioKind::CompoundShift => "compound_shift",
        }
    }

    pub fn has_level_shift(self) -> bool {
        matches!(self, ScenarioKind::MeanShift | ScenarioKind::CompoundShift)
    }

    pub fn has_vol_shift(self) -> bool {
        matches!(self, ScenarioKind::VolShift | ScenarioKind::CompoundShift)
    }

    fn stream_id(self) -> u64 {
        match self {
            ScenarioKind::Stable => 0,
            ScenarioKind::MeanShift => 1,
            ScenarioKind::VolShift => 2,
            ScenarioKind::CompoundShift => 3,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "stable" | "fm0" => Ok(ScenarioKind::Stable),
            "mean_shift" | "mean" | "fm1" => Ok(ScenarioKind::MeanShift),
            "vol_shift" | "vol" | "volatility" | "fm2" => Ok(ScenarioKind::VolShift),
            "compound_shift" | "compound" | "fm3" => Ok(ScenarioKind::CompoundShift),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// Parameters of one synthetic series.
///
/// `post_sigma` only takes effect for the volatility kinds and `level_delta`
/// only for the level-shift kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub shift_at: usize,
    pub phi: f64,
    pub pre_sigma: f64,
    pub post_sigma: f64,
    pub level_delta: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            n: 2000,
            shift_at: 1000,
            phi: 0.8,
            pre_sigma: 1.0,
            post_sigma: 2.0,
            level_delta: 5.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        let bad = |msg: String| Err(SeriesError::InvalidSpec(msg));
        if self.shift_at == 0 || self.shift_at >= self.n {
            return bad(format!("shift_at {} must lie in (0, {})", self.shift_at, self.n));
        }
        if self.phi.is_nan() || self.phi.abs() >= 1.0 {
            return bad(format!("|phi| = {} must be < 1", self.phi.abs()));
        }
        if !(self.pre_sigma.is_finite() && self.pre_sigma > 0.0) {
            return bad(format!("pre_sigma {} must be positive", self.pre_sigma));
        }
        if !(self.post_sigma.is_finite() && self.post_sigma > 0.0) {
            return bad(format!("post_sigma {} must be positive", self.post_sigma));
        }
        if !self.level_delta.is_finite() {
            return bad(format!("level_delta {} must be finite", self.level_delta));
        }
        Ok(())
    }

    /// Innovation std-dev at 1-based time `t`.
    pub fn sigma_at(&self, t: usize) -> f64 {
        if t > self.shift_at && self.kind.has_vol_shift() {
            self.post_sigma
        } else {
            self.pre_sigma
        }
    }

    /// Additive offset on the emitted value at 1-based time `t`.
    pub fn offset_at(&self, t: usize) -> f64 {
        if t > self.shift_at && self.kind.has_level_shift() {
            self.level_delta
        } else {
            0.0
        }
    }
}

/// Where a series came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SeriesSource {
    Synthetic(ScenarioSpec),
    Csv { path: PathBuf, column: String },
}

/// A univariate series with its training-prefix length.
///
/// `values[i]` is the observation at 1-based time `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    pub source: SeriesSource,
    pub train_len: usize,
}

impl Series {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn train(&self) -> &[f64] {
        &self.values[..self.train_len.min(self.values.len())]
    }

    /// Human-readable dataset label for reports.
    pub fn label(&self) -> String {
        match &self.source {
            SeriesSource::Synthetic(spec) => spec.kind.label().to_string(),
            SeriesSource::Csv { path, column } => {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "csv".to_string());
                format!("{stem}:{column}")
            }
        }
    }
}

/// Generates the synthetic series described by `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<Series, SeriesError> {
    spec.validate()?;
    if spec.n <= DEFAULT_TRAIN_LEN {
        return Err(SeriesError::TooShort {
            len: spec.n,
            train_len: DEFAULT_TRAIN_LEN,
        });
    }
    let mut noise = NoiseSource::with_stream(spec.seed, spec.kind.stream_id());
    let mut y = 0.0;
    for _ in 0..BURN_IN {
        y = spec.phi * y + spec.pre_sigma * noise.gaussian();
    }
    let values = (1..=spec.n)
        .map(|t| {
            y = spec.phi * y + spec.sigma_at(t) * noise.gaussian();
            y + spec.offset_at(t)
        })
        .collect();
    Ok(Series {
        values,
        source: SeriesSource::Synthetic(spec.clone()),
        train_len: DEFAULT_TRAIN_LEN,
    })
}

/// Reads one named numeric column from a headed CSV file.
///
/// The series is truncated to `max_len` values and the training prefix is
/// fixed at 500 points. Row numbers in errors are 1-based data rows (the
/// header is not counted).
pub fn load_csv(path: &Path, column: &str, max_len: usize) -> Result<Series, SeriesError> {
    let file = std::fs::File::open(path).map_err(|source| SeriesError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let idx = reader
        .headers()?
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| SeriesError::MissingColumn(column.to_string()))?;

    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        if values.len() >= max_len {
            break;
        }
        let record = record?;
        let row = i + 1;
        let cell = record.get(idx).unwrap_or("").trim();
        let v: f64 = cell.parse().map_err(|_| SeriesError::Unparsable {
            row,
            cell: cell.to_string(),
        })?;
        if !v.is_finite() {
            return Err(SeriesError::NonFinite {
                row,
                cell: cell.to_string(),
            });
        }
        values.push(v);
    }
    Ok(Series {
        values,
        source: SeriesSource::Csv {
            path: path.to_path_buf(),
            column: column.to_string(),
        },
        train_len: DEFAULT_TRAIN_LEN,
    })
}
