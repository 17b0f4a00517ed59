//! Deterministic seeded random streams.
//!
//! All randomness in the toolkit flows through [`Rng`]: a ChaCha8 keystream
//! keyed from a 64-bit seed, with named substreams so that every tensor,
//! corpus word, or shuffle draws from its own independent sequence. The
//! float and integer mappings are written out explicitly here so the value
//! sequences are pinned by this file, not by a dependency's sampling
//! internals.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{Scalar, Tensor};

/// SplitMix64 step; used only to expand seeds into ChaCha keys.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a tag string, to key substreams by name.
fn fnv1a(tag: &str) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for b in tag.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Seeded deterministic generator. Identical seeds yield identical draw
/// sequences across runs.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seeded(seed: u64) -> Rng {
        Rng::with_state(seed)
    }

    /// Independent substream identified by a tag and an index, e.g. one per
    /// parameter tensor or per corpus word.
    pub fn stream(seed: u64, tag: &str, index: u64) -> Rng {
        Rng::with_state(seed ^ fnv1a(tag) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    fn with_state(mut state: u64) -> Rng {
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Rng { inner: ChaCha8Rng::from_seed(key) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in [0, 1) using the top 53 bits of the keystream.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in [0, n) via a 128-bit widening multiply.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Uniform integer in [lo, hi] inclusive.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Tensor with elements drawn uniformly from (-limit, limit).
    pub fn uniform_tensor<T: Scalar>(&mut self, shape: &[usize], limit: f64) -> Tensor<T> {
        Tensor::from_fn(shape, |_| T::from_f64(self.uniform(-limit, limit)))
    }

    /// Scaled-uniform init: limit = sqrt(1 / fan_in).
    pub fn fan_in_tensor<T: Scalar>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        debug_assert!(fan_in > 0);
        self.uniform_tensor(shape, (1.0 / fan_in as f64).sqrt())
    }
}
