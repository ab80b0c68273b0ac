//! Deterministic pseudorandom numbers for masks, phantoms, and noise.
//!
//! A splitmix-style 64-bit generator is spelled out here in full so that
//! every sampled artifact (masks, phantom geometry, noise draws) is
//! bit-reproducible across platforms and implementations. Do not swap this
//! for a library RNG: file fixtures depend on the exact stream.

use std::f64::consts::TAU;

/// Splitmix64: golden-gamma state advance followed by a 64-bit finalizer.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Drawn as `next_u64() % n`; the modulo bias
    /// is irrelevant at the grid sizes used here and keeps the draw portable.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Pair of independent standard normals (Box-Muller; consumes two uniforms).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        // 1 - u keeps the argument of ln strictly positive.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }
}
