//! Fixed-point carrier for encrypted values.
//!
//! Group exponents are integers, so real-valued centroids are scaled by
//! `2^f_bits` and rounded before encryption. The per-client magnitude bound
//! `B` keeps every sum of `n` encrypted values inside the `±n·B` window the
//! discrete-log recovery can search, and `2·n·B < p` makes the signed sum
//! unambiguous mod p.

use serde::{Deserialize, Serialize};

/// A signed fixed-point integer at scale `2^f_bits`.
///
/// Per-client values satisfy `|value| ≤ B`; decrypted aggregates of `n`
/// clients extend the range to `±n·B`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct FixedPointValue(pub i64);

/// The `(f_bits, B)` pair quantization runs under; embedded in
/// [`super::PublicParams`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FixedPointSpec {
    /// Fraction bits: reals are scaled by `2^f_bits`.
    pub f_bits: u32,
    /// Per-client magnitude bound on the scaled integer.
    pub bound: u64,
}

impl FixedPointSpec {
    /// Largest representable real magnitude, `B / 2^f_bits`.
    pub fn real_bound(&self) -> f64 {
        self.bound as f64 / (1u64 << self.f_bits) as f64
    }

    /// Quantize a real to fixed point: `round(clip(w, ±B/2^f_bits) · 2^f_bits)`.
    ///
    /// Out-of-range values (and non-finite inputs) clip to the bound; NaN
    /// clips to zero. Never fails.
    pub fn quantize(&self, w: f64) -> FixedPointValue {
        let limit = self.real_bound();
        let clipped = if w.is_nan() { 0.0 } else { w.clamp(-limit, limit) };
        FixedPointValue((clipped * (1u64 << self.f_bits) as f64).round() as i64)
    }

    /// Map a fixed-point integer back to a real at scale `2^-f_bits`.
    pub fn dequantize(&self, x: FixedPointValue) -> f64 {
        x.0 as f64 / (1u64 << self.f_bits) as f64
    }
}
