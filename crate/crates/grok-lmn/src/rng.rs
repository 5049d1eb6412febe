//! Seeded pseudo-randomness with a pinned algorithm.
//!
//! Every stochastic choice in this crate — train/test splits, parameter
//! initialization, probe subsampling, k-means seeding — draws from
//! [`SplitMix64`], so a 64-bit seed determines the outcome bit for bit on
//! any platform. The generator is pinned here rather than borrowed from a
//! crate so that the exact stream can be reproduced from this description
//! alone:
//!
//! * `next_u64` is the SplitMix64 mixer (Steele, Lea & Flood 2014): the
//!   state advances by the constant `0x9E3779B97F4A7C15` and the output is
//!   the advanced state passed through two xor-shift-multiply rounds with
//!   constants `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`.
//! * `next_f64` takes the top 53 bits of `next_u64`, giving a uniform
//!   value in `[0, 1)`.
//! * `below(bound)` maps one `next_u64` draw through Lemire's multiply-shift
//!   reduction `(u128(x) * bound) >> 64`.
//! * `shuffle` is a top-down Fisher-Yates: for `i` from `len-1` down to 1,
//!   swap element `i` with element `below(i + 1)`.

/// SplitMix64 generator. One instance per independent random stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `[0, bound)` via Lemire multiply-shift reduction.
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below(0) is undefined");
        (((self.next_u64() as u128) * (bound as u128)) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }

    /// `k` distinct indices sampled uniformly from `0..n`, returned sorted
    /// ascending. Draws a full shuffle of `0..n` and keeps the first `k`.
    pub fn sample_sorted(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx.truncate(k);
        idx.sort_unstable();
        idx
    }
}
