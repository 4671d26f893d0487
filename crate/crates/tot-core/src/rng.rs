//! Deterministic random numbers for synthetic fixtures and seeded weight
//! initialization.
//!
//! The generator is SplitMix64, chosen because its entire state is one u64
//! and the update rule below is short enough to re-implement anywhere.
//! Every step does:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15                      (wrapping)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9         (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB         (wrapping)
//! output = z ^ (z >> 31)
//! ```
//!
//! Floats are derived as `(output >> 11) * 2^-53`, the standard 53-bit
//! mantissa construction, so the same seed yields the same stream of
//! integers, floats, and token ids on every platform. All downstream
//! sampling (uniform intervals, token draws) goes through these two
//! primitives only; nothing depends on libm.

/// SplitMix64 stream. Same seed, same sequence, everywhere.
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

    /// Uniform draw from [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Modulo bias is below n / 2^64 and is
    /// accepted for fixture generation.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below needs a positive bound");
        self.next_u64() % n
    }
}
