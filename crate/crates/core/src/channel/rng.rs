//! Counter-based, hierarchically splittable random streams.
//!
//! A stream is a pair of 64-bit keys plus a counter; output `i` is a pure
//! function of (keys, i), so any sub-stream can be reproduced without
//! replaying its siblings. Keys are derived with the SplitMix64 finalizer.
//! Not cryptographically secure.

use rand_core::{impls, Error, RngCore};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const ROOT_SALT: u64 = 0x5851_F42D_4C95_7F2D;
const SIDE_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    side: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let key = mix64(seed ^ ROOT_SALT);
        Self { key, side: mix64(key ^ SIDE_SALT), counter: 0 }
    }

    /// Builds the stream at `seed / path[0] / path[1] / ...`.
    pub fn at_path(seed: u64, path: &[u64]) -> Self {
        path.iter().fold(Self::new(seed), |s, &i| s.substream(i))
    }

    /// Independent child stream `index`. Does not depend on or advance the
    /// parent's counter.
    #[inline]
    pub fn substream(&self, index: u64) -> Self {
        let key = mix64(self.key ^ mix64(index.wrapping_add(GOLDEN)));
        Self { key, side: mix64(key ^ SIDE_SALT), counter: 0 }
    }

    #[inline]
    fn output(&self, counter: u64) -> u64 {
        mix64(mix64(self.key.wrapping_add(counter.wrapping_mul(GOLDEN))) ^ self.side)
    }

    #[inline]
    pub fn next_raw(&mut self) -> u64 {
        let z = self.output(self.counter);
        self.counter = self.counter.wrapping_add(1);
        z
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.next_raw() >> 11) as f64 + 0.5) * SCALE
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
