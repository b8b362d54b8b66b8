//! Keyed counter-based randomness.
//!
//! Every random decision is a pure function of `(seed, stream, counter)`, so
//! results do not depend on the order in which pairs or groups are visited.

use rand::rand_core::{impls, RngCore};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a `(seed, stream, counter)` triple to 64 random bits.
#[inline]
pub fn keyed_u64(seed: u64, stream: u64, counter: u64) -> u64 {
    let a = mix64(seed.wrapping_add(GOLDEN));
    let b = mix64(a ^ stream.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
    mix64(b ^ counter.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(GOLDEN))
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn keyed_unit(seed: u64, stream: u64, counter: u64) -> f64 {
    (keyed_u64(seed, stream, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Hash a lattice offset into a stream identifier.
pub fn offset_key(offset: &[i64]) -> u64 {
    offset.iter().fold(0x2545_F491_4F6C_DD1D_u64, |acc, &c| {
        mix64(acc ^ (c as u64).wrapping_mul(GOLDEN))
    })
}

/// Derive the seed of the `index`-th run from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    keyed_u64(base, 0x5EED, index)
}

/// A SplitMix64 stream positioned by `(seed, stream)`.
///
/// Implements [`RngCore`] so distribution samplers from `rand_distr` can run on
/// keyed streams.
#[derive(Clone, Debug)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            state: keyed_u64(seed, stream, 0),
        }
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
