//! Seeded, portable random streams.
//!
//! Every random draw in the toolkit comes from ChaCha20 (the `rand_chacha`
//! implementation, 20 rounds). A stream is identified by a master seed, a
//! domain tag and an index:
//!
//! * the 256-bit key is four consecutive SplitMix64 outputs started from
//!   `seed ^ domain_tag`, each written little-endian;
//! * the ChaCha stream id is the index.
//!
//! Uniform reals are `(next_u64 >> 11) * 2^-53` mapped affinely onto the
//! requested interval. Uniform integers below `n` use rejection on the
//! largest multiple of `n` below `2^64`. Nothing here depends on the
//! platform or on `rand`'s distribution code, so streams can be reproduced
//! in any language with a ChaCha20 implementation.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Domain tags separating independent consumers of one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Sources = 0x736f_7572_6365_7331,
    Mixing = 0x6d69_7869_6e67_3031,
    NewtonInit = 0x6e65_7774_6f6e_3031,
    Anneal = 0x616e_6e65_616c_3031,
    StatementSources = 0x7374_6174_6573_3031,
    StatementMixing = 0x7374_6174_656d_3031,
    Sweep = 0x7377_6565_7030_3031,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed; used where one run needs per-cell master seeds.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    let mut s = seed ^ domain as u64;
    let a = splitmix64(&mut s);
    let mut t = a ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03);
    splitmix64(&mut t)
}

/// A seeded random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    inner: ChaCha20Rng,
}

impl Stream {
    pub fn new(seed: u64, domain: Domain, index: u64) -> Self {
        let mut state = seed ^ domain as u64;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream(index);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle driven by [`Stream::index`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
