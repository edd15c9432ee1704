//! Paired one-sided Wilcoxon signed-rank test.
//!
//! Zero differences are dropped, tied magnitudes get mid-ranks and the
//! statistic is the rank sum of the positive differences. Up to
//! [`EXACT_MAX_N`] tie-free differences the p-value comes from the exact null
//! distribution (all `2^n` sign patterns equally likely, counted by dynamic
//! programming over rank sums); otherwise a normal approximation with
//! tie-corrected variance and a 0.5 continuity correction is used.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest effective sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("all paired differences are zero")]
    AllZero,
    #[error("non-finite value in pairs")]
    NonFinite,
}

/// Direction of the one-sided alternative for `d = a - b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `a` tends to be smaller than `b`.
    Less,
    /// `a` tends to be larger than `b`.
    Greater,
}

impl Alternative {
    pub fn flipped(self) -> Self {
        match self {
            Alternative::Less => Alternative::Greater,
            Alternative::Greater => Alternative::Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Rank sum of the positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: TestMethod,
}

struct Ranked {
    w_plus: f64,
    n: usize,
    /// Sum over tie groups of `t^3 - t`.
    tie_term: f64,
}

fn rank_differences(pairs: &[(f64, f64)]) -> Result<Ranked, StatsError> {
    let mut diffs = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        let d = a - b;
        if !d.is_finite() {
            return Err(StatsError::NonFinite);
        }
        if d != 0.0 {
            diffs.push(d);
        }
    }
    if diffs.is_empty() {
        return Err(StatsError::AllZero);
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    let n = diffs.len();
    let mut w_plus = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && diffs[j].abs() == diffs[i].abs() {
            j += 1;
        }
        // positions i..j (0-based) share the mid-rank of 1-based ranks i+1..=j
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        w_plus += mid_rank * diffs[i..j].iter().filter(|d| **d > 0.0).count() as f64;
        i = j;
    }
    Ok(Ranked { w_plus, n, tie_term })
}

/// Number of sign patterns giving each rank sum `0..=n(n+1)/2` for ranks `1..=n`.
fn exact_null_counts(n: usize) -> Vec<f64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    for rank in 1..=n {
        for w in (rank..=max).rev() {
            counts[w] += counts[w - rank];
        }
    }
    counts
}

fn exact_p(w_plus: f64, n: usize, alt: Alternative) -> f64 {
    let counts = exact_null_counts(n);
    let total = 2f64.powi(n as i32);
    let w = w_plus.round() as usize;
    let tail: f64 = match alt {
        Alternative::Greater => counts[w..].iter().sum(),
        Alternative::Less => counts[..=w].iter().sum(),
    };
    (tail / total).clamp(0.0, 1.0)
}

fn normal_p(w_plus: f64, n: usize, tie_term: f64, alt: Alternative) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = match alt {
        Alternative::Greater => std_normal.sf((w_plus - mean - 0.5) / sd),
        Alternative::Less => std_normal.cdf((w_plus - mean + 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// One-sided paired Wilcoxon signed-rank test on `d = a - b`.
pub fn wilcoxon_one_sided(pairs: &[(f64, f64)], alt: Alternative) -> Result<TestResult, StatsError> {
    let ranked = rank_differences(pairs)?;
    let method = if ranked.n <= EXACT_MAX_N && ranked.tie_term == 0.0 {
        TestMethod::Exact
    } else {
        TestMethod::NormalApprox
    };
    wilcoxon_ranked(&ranked, alt, method)
}

/// Same test with the p-value method forced. Exact enumeration requires
/// tie-free differences; with ties the normal approximation is used anyway.
pub fn wilcoxon_with_method(
    pairs: &[(f64, f64)],
    alt: Alternative,
    method: TestMethod,
) -> Result<TestResult, StatsError> {
    let ranked = rank_differences(pairs)?;
    let method = if ranked.tie_term > 0.0 { TestMethod::NormalApprox } else { method };
    wilcoxon_ranked(&ranked, alt, method)
}

fn wilcoxon_ranked(r: &Ranked, alt: Alternative, method: TestMethod) -> Result<TestResult, StatsError> {
    let p_value = match method {
        TestMethod::Exact => exact_p(r.w_plus, r.n, alt),
        TestMethod::NormalApprox => normal_p(r.w_plus, r.n, r.tie_term, alt),
    };
    Ok(TestResult {
        statistic: r.w_plus,
        p_value,
        n_effective: r.n,
        method,
    })
}
