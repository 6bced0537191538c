//! The one random number source used for sampling and weight init.
//!
//! `SeededRng` is ChaCha8 (the `rand_chacha` stream cipher RNG) keyed through
//! `SeedableRng::seed_from_u64`. Bounded integers use rejection sampling on
//! raw 64-bit outputs: with `r = 2^64 mod n`, draws above `u64::MAX - r` are
//! discarded and the rest reduced modulo `n`. This keeps index draws unbiased
//! and independent of `rand`'s range-sampling internals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let rem = (u64::MAX % n + 1) % n;
        let limit = u64::MAX - rem;
        loop {
            let x = self.inner.next_u64();
            if x <= limit {
                return x % n;
            }
        }
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

/// Stable 64-bit digest of a byte string (first 8 bytes of SHA-256, little endian).
pub fn stable_hash(bytes: &[u8]) -> u64 {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(buf)
}
