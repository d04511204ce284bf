//! Seeded randomness shared by every stochastic step of the pipeline.
//!
//! All draws come from SplitMix64 so that a seed pins down balancing,
//! splitting, initialization, shuffling and synthetic data exactly.
//! Derived quantities use fixed recipes:
//!
//! - `next_f64`: the top 53 bits scaled into `[0, 1)`.
//! - `below(n)`: multiply-high reduction `(x * n) >> 64` (one draw, no rejection).
//! - Gaussians: Box–Muller on two consecutive draws, yielding the cosine
//!   branch first and caching the sine branch for the next call.

use std::f64::consts::TAU;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The SplitMix64 output function applied to a single word.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the independent stream used for item `index` of a seeded job.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    mix64((seed ^ index).wrapping_add(GOLDEN_GAMMA))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..bound`. `bound` must be positive.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as usize
    }

    /// Standard normal deviate.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn gaussian(&mut self, mean: f64, sigma: f64) -> f64 {
        mean + sigma * self.normal()
    }

    /// Partial Fisher–Yates: the first `take` entries of a shuffled `0..n`.
    ///
    /// Step `i` swaps position `i` with `i + below(n - i)`.
    pub fn sample_indices(&mut self, n: usize, take: usize) -> Vec<usize> {
        let take = take.min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..take {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(take);
        idx
    }

    /// Full Fisher–Yates shuffle of `items`, same step rule as `sample_indices`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        for i in 0..n.saturating_sub(1) {
            let j = i + self.below(n - i);
            items.swap(i, j);
        }
    }
}
