//! Reproducible random stream.
//!
//! The generator is ChaCha8 (a counter-based stream cipher) keyed through
//! `SeedableRng::seed_from_u64`, which rand_core specifies as portable. All
//! derived draws are defined here rather than delegated to `rand`, so that
//! the sequence of crops, splits and triplets is fixed by this file alone:
//!
//! - `uniform_below(n)`: draw `x = next_u64()`, reject while
//!   `x < 2^64 mod n`, return `x mod n`.
//! - `uniform_inclusive(lo, hi)`: `lo + uniform_below(hi - lo + 1)`.
//! - `shuffle`: Fisher-Yates from the last index down, swapping `i` with
//!   `uniform_below(i + 1)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeedStream {
    rng: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn uniform_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "uniform_below needs a non-empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn uniform_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi);
        lo + self.uniform_below((hi - lo) as u64 + 1) as usize
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit_f64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
