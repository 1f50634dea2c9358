//! Seed-derived random streams.
//!
//! Every stochastic component draws from a [`SimRng`]. Streams are split by
//! deriving a child seed from `(parent seed, label)`, so work scheduled in
//! any order (or on any thread) sees the same numbers for the same label.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Serializable position of a [`SimRng`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream keyed by `label`. Does not advance `self`.
    pub fn derive(&self, label: u64) -> Self {
        let mut seed = self.inner.get_seed();
        let mixed = splitmix64(label ^ u64::from_le_bytes(seed[..8].try_into().unwrap()));
        for (i, b) in mixed.to_le_bytes().iter().enumerate() {
            seed[i] ^= b;
        }
        let mut inner = ChaCha8Rng::from_seed(seed);
        inner.set_stream(self.inner.get_stream().wrapping_add(label));
        Self { inner }
    }

    /// Child stream keyed by a label drawn from `self` (advances `self`).
    pub fn fork(&mut self) -> Self {
        let label = self.inner.next_u64();
        self.derive(label)
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.inner.get_seed(),
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos(),
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut inner = ChaCha8Rng::from_seed(state.seed);
        inner.set_stream(state.stream);
        inner.set_word_pos(state.word_pos);
        Self { inner }
    }

    /// Uniform sample in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f32 {
        self.inner.random::<f32>()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f32) -> bool {
        p > 0.0 && self.uniform() < p
    }

    pub fn range_f32(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, in random order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }

    pub fn normal(&mut self) -> f32 {
        // Box-Muller; one of the pair is discarded so the stream stays simple to reason about.
        let u1 = self.uniform().max(f32::MIN_POSITIVE);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f32::consts::TAU * u2).cos()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
