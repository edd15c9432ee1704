//! Seeded noise source.
//!
//! Uniforms come from PCG64 (XSL-RR 128/64, O'Neill 2014) and are mapped to
//! `[0, 1)` by taking the top 53 bits of each `u64`. Gaussians use the
//! Marsaglia polar method, which consumes uniform pairs and yields two
//! variates per accepted pair; the second is cached and returned by the next
//! call. Both steps are written out here rather than delegated, so the stream
//! for a given `(seed, stream)` pair is fixed independently of library
//! versions and platforms.

use rand_core::Rng;
use rand_pcg::Pcg64;

/// Default PCG increment selector used when no explicit stream is given.
const DEFAULT_STREAM: u128 = 0xa02b_db6b_c2d4_7f3d;

/// Deterministic source of uniform and standard-normal variates.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: Pcg64,
    spare: Option<f64>,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Generator for an independent stream. Distinct `stream` values give
    /// non-overlapping sequences for the same `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let state = (u128::from(seed) << 64) | u128::from(splitmix64(seed));
        let stream = DEFAULT_STREAM ^ (u128::from(stream) << 1);
        Self {
            rng: Pcg64::new(state, stream),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform variate in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate (polar method).
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
