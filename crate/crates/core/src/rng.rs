//! Per-trial random substreams.
//!
//! Every trial draws its randomness from a ChaCha8 keystream keyed by the
//! master seed and positioned on the stream numbered by the trial index. The
//! mapping `(seed, index) -> stream` is a pure function, so trials can be
//! evaluated in any order and on any number of threads with identical
//! results.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent master seed for a labelled sub-experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

fn key_for(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    key
}

/// Key material for one master seed; cheap to copy, shared across trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { key: key_for(seed) }
    }

    /// The substream for trial `index`.
    pub fn substream(&self, index: u64) -> TrialRng {
        let mut inner = ChaCha8Rng::from_seed(self.key);
        inner.set_stream(index);
        TrialRng { inner }
    }
}

/// The random source handed to a model's hidden-state sampler.
#[derive(Debug, Clone)]
pub struct TrialRng {
    inner: ChaCha8Rng,
}

impl TrialRng {
    pub fn new(seed: u64, index: u64) -> Self {
        StreamKey::new(seed).substream(index)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `{0, .., k-1}`.
    pub fn index(&mut self, k: usize) -> usize {
        self.inner.random_range(0..k)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    /// Uniform point on the unit sphere: `z` uniform on `[-1, 1]`, azimuth
    /// uniform on `[0, 2π)`.
    pub fn unit_vector(&mut self) -> [f64; 3] {
        let z = 2.0 * self.uniform() - 1.0;
        let phi = TAU * self.uniform();
        let r = (1.0 - z * z).max(0.0).sqrt();
        [r * phi.cos(), r * phi.sin(), z]
    }
}
