//! Keyed hash family mapping element keys to buckets.
//!
//! Each `(seed, epoch, level)` triple selects a Speck64/128 key; the
//! plaintext block is `(table_index, key)`. Rebuilding a level advances its
//! epoch, which gives every table of the new level a fresh, independent
//! mapping.

use crate::{Error, Result};

const SPECK_ROUNDS: usize = 27;

/// Speck64/128 with an expanded key schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Speck64 {
    round_keys: [u32; SPECK_ROUNDS],
}

impl Speck64 {
    /// `key` is `(l2, l1, l0, k0)` in the order of the reference test vectors.
    pub(crate) fn new(key: [u32; 4]) -> Self {
        let mut round_keys = [0u32; SPECK_ROUNDS];
        let mut l = [key[2], key[1], key[0]];
        let mut k = key[3];
        for (i, rk) in round_keys.iter_mut().enumerate() {
            *rk = k;
            let slot = i % 3;
            let next_l = k.wrapping_add(l[slot].rotate_right(8)) ^ i as u32;
            k = k.rotate_left(3) ^ next_l;
            l[slot] = next_l;
        }
        Speck64 { round_keys }
    }

    pub(crate) fn encrypt(&self, mut x: u32, mut y: u32) -> (u32, u32) {
        for &k in &self.round_keys {
            x = x.rotate_right(8).wrapping_add(y) ^ k;
            y = y.rotate_left(3) ^ x;
        }
        (x, y)
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Master seed plus rebuild counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HashFamily {
    pub seed: u64,
    pub epoch: u64,
}

impl HashFamily {
    pub fn new(seed: u64) -> Self {
        HashFamily { seed, epoch: 0 }
    }

    /// Same seed, next epoch.
    pub fn fresh_epoch(&self) -> Result<Self> {
        let epoch = self.epoch.checked_add(1).ok_or(Error::CounterExhausted)?;
        Ok(HashFamily { seed: self.seed, epoch })
    }

    /// Expands the PRF key for one level.
    pub fn keyed(&self, level: u32) -> KeyedHash {
        let a = mix64(self.seed ^ 0x243f_6a88_85a3_08d3);
        let b = mix64(a ^ self.epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let lo = mix64(b ^ (level as u64).wrapping_mul(0xd1b5_4a32_d192_ed03));
        let hi = mix64(lo ^ 0x1319_8a2e_0370_7344);
        KeyedHash { cipher: Speck64::new([lo as u32, (lo >> 32) as u32, hi as u32, (hi >> 32) as u32]) }
    }
}

/// The hash functions of one level, one per table index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyedHash {
    cipher: Speck64,
}

impl KeyedHash {
    /// Raw 64-bit PRF output for `(table_index, key)`.
    pub fn eval(&self, table_index: u32, key: u32) -> u64 {
        let (x, y) = self.cipher.encrypt(table_index, key);
        ((x as u64) << 32) | y as u64
    }

    /// Bucket in `[0, n)`; `n` must be positive.
    #[inline]
    pub fn bucket(&self, table_index: u32, key: u32, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.eval(table_index, key) as u128 * n as u128) >> 64) as usize
    }
}

/// One-shot evaluation of `h_{level, table_index}(key)` over `n` buckets.
pub fn hash_bucket(fam: &HashFamily, level: u32, table_index: u32, key: u32, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::InvalidParameter("bucket count must be positive"));
    }
    Ok(fam.keyed(level).bucket(table_index, key, n))
}
