//! Seeded random number generation.
//!
//! Every stochastic piece of the system (parameter init, corpus splitting,
//! epoch shuffling, dropout masks, synthetic data) draws from [`SeededRng`],
//! a thin wrapper over the ChaCha8 stream cipher. The mapping from raw bits
//! to floats and the shuffle algorithm are spelled out here so that a seed
//! pins down the exact value stream on every platform.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Deterministic generator. Identical seed and stream id give an identical
/// sequence of values everywhere.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

/// Named sub-streams so different stages never share draws. Adding a stage
/// must not shift the draws of existing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Train,
    Split,
    Synthetic,
    Embed,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 0,
            Stream::Train => 1,
            Stream::Split => 2,
            Stream::Synthetic => 3,
            Stream::Embed => 4,
        }
    }
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for one named stage, independent of the others.
    pub fn stream(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream.id());
        SeededRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1): the top 53 bits of a u64 scaled by 2^-53.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.unit_f64() * (hi - lo)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit_f64() < p
    }

    /// Uniform in 0..n via rejection sampling, so every value is exactly
    /// equally likely.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle, back to front.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Draw an index from a discrete distribution. Weights must be
    /// non-negative and sum to something positive.
    pub fn categorical(&mut self, weights: &[f64]) -> Result<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::invalid("categorical weights must sum to a positive finite value"));
        }
        let target = self.unit_f64() * total;
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w < 0.0 {
                return Err(Error::invalid("negative categorical weight"));
            }
            acc += w;
            if target < acc {
                return Ok(i);
            }
        }
        // Rounding can push the accumulator fractionally below `total`;
        // fall back to the last positively weighted index.
        Ok(weights
            .iter()
            .rposition(|&w| w > 0.0)
            .expect("positive total implies a positive weight"))
    }
}

/// Tensor filled with draws from U[lo, hi).
pub fn uniform_init(shape: &[usize], lo: f64, hi: f64, rng: &mut SeededRng) -> Result<Tensor> {
    if shape.is_empty() {
        return Err(Error::invalid("uniform_init: empty shape"));
    }
    if !(lo < hi) {
        return Err(Error::invalid("uniform_init: lo must be strictly below hi"));
    }
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::new(shape.to_vec(), data)
}
