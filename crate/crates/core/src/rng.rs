//! Deterministic seeded randomness.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Result};

/// ChaCha8 stream generator. Independent sub-streams for parallel trials are
/// ChaCha stream ids under the same seed, so they never overlap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream `stream` of `seed`; stream 0 equals [`Rng::new`].
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng(inner)
    }

    /// A child generator seeded from this one.
    pub fn fork(&mut self) -> Self {
        Rng::new(self.0.next_u64())
    }

    /// Uniform bucket in `[0, n)` for a power-of-two `n`. Always consumes
    /// exactly one 64-bit word.
    pub fn random_bucket(&mut self, n: usize) -> Result<usize> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidParameter("bucket count must be a power of two"));
        }
        Ok(self.bucket_pow2(n))
    }

    #[inline]
    pub(crate) fn bucket_pow2(&mut self, n: usize) -> usize {
        debug_assert!(n.is_power_of_two());
        (self.0.next_u64() & (n as u64 - 1)) as usize
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
