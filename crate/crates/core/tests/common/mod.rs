//! Independent reference implementations used as test oracles. None of these
//! call into the crate's algorithms.

#![allow(dead_code)]

use std::collections::VecDeque;

/// Smallest score `q` with `#{s <= q} >= j`, by scanning every candidate.
pub fn scan_quantile(scores: &[f64], alpha_t: f64) -> f64 {
    let n = scores.len();
    let raw = ((n as f64 + 1.0) * (1.0 - alpha_t)).ceil();
    let j = if raw.is_nan() || raw > n as f64 {
        n
    } else if raw < 1.0 {
        1
    } else {
        raw as usize
    };
    let mut best = f64::INFINITY;
    for &q in scores {
        let count = scores.iter().filter(|&&s| s <= q).count();
        if count >= j && q < best {
            best = q;
        }
    }
    best
}

fn sorted_median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median absolute deviation by full sorting.
pub fn sorted_mad(xs: &[f64]) -> f64 {
    let m = sorted_median(xs);
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    sorted_median(&dev)
}

/// Mid-ranks of `|d|` by pairwise comparison.
fn mid_ranks(abs: &[f64]) -> Vec<f64> {
    abs.iter()
        .map(|&a| {
            let below = abs.iter().filter(|&&b| b < a).count() as f64;
            let equal = abs.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// One-sided signed-rank p by enumerating all `2^n` sign assignments.
/// `greater = true` tests `a > b`.
pub fn sign_enumeration_p(pairs: &[(f64, f64)], greater: bool) -> f64 {
    let d: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = d.len();
    assert!(n <= 20, "enumeration oracle is for small n");
    let ranks = mid_ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        let extreme = if greater { w >= observed - 1e-9 } else { w <= observed + 1e-9 };
        hits += u64::from(extreme);
    }
    hits as f64 / (1u64 << n) as f64
}

/// Ridge with unpenalised intercept via Gaussian elimination with partial
/// pivoting on the normal equations. Returns `[weights.., intercept]`, weights
/// ordered oldest lag first.
#[allow(clippy::needless_range_loop)]
pub fn normal_equation_ridge(train: &[f64], p: usize, penalty: f64, h: usize) -> Vec<f64> {
    let dim = p + 1;
    let mut a = vec![vec![0.0; dim + 1]; dim];
    for s in p - 1..train.len() - h {
        let mut x: Vec<f64> = train[s + 1 - p..=s].to_vec();
        x.push(1.0);
        let y = train[s + h];
        for i in 0..dim {
            for j in 0..dim {
                a[i][j] += x[i] * x[j];
            }
            a[i][dim] += x[i] * y;
        }
    }
    for (i, row) in a.iter_mut().enumerate().take(p) {
        row[i] += penalty;
    }
    for col in 0..dim {
        let piv = (col..dim)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        for r in col + 1..dim {
            let f = a[r][col] / a[col][col];
            for c in col..=dim {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut beta = vec![0.0; dim];
    for i in (0..dim).rev() {
        let s: f64 = (i + 1..dim).map(|j| a[i][j] * beta[j]).sum();
        beta[i] = (a[i][dim] - s) / a[i][i];
    }
    beta
}

/// Plain ACI written from its definition: FIFO buffer of raw residuals,
/// absolute-residual scores, level stepped by the miss indicator.
pub struct StandaloneAci {
    alpha: f64,
    gamma: f64,
    window: usize,
    fallback_below: usize,
    pub alpha_t: f64,
    buf: VecDeque<f64>,
    pending: VecDeque<(f64, f64, f64)>,
}

impl StandaloneAci {
    pub fn new(alpha: f64, gamma: f64, window: usize, fallback_below: usize) -> Self {
        Self {
            alpha,
            gamma,
            window,
            fallback_below,
            alpha_t: alpha,
            buf: VecDeque::new(),
            pending: VecDeque::new(),
        }
    }

    fn push(&mut self, e: f64) {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(e);
    }

    pub fn prime(&mut self, e: f64) {
        self.push(e);
    }

    /// Returns `(lower, upper)`.
    pub fn emit(&mut self, y_hat: f64) -> (f64, f64) {
        let scores: Vec<f64> = self.buf.iter().map(|e| e.abs()).collect();
        let q = if scores.len() < self.fallback_below {
            scores.iter().copied().fold(0.0, f64::max)
        } else {
            scan_quantile(&scores, self.alpha_t)
        };
        let iv = (y_hat - q, y_hat + q);
        self.pending.push_back((y_hat, iv.0, iv.1));
        iv
    }

    /// Returns whether the interval covered `y`.
    pub fn observe(&mut self, y: f64) -> bool {
        let (y_hat, lo, hi) = self.pending.pop_front().expect("nothing pending");
        self.push(y - y_hat);
        let covered = lo <= y && y <= hi;
        let err = if covered { 0.0 } else { 1.0 };
        self.alpha_t += self.gamma * (self.alpha - err);
        covered
    }
}
