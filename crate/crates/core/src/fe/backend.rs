//! Group-arithmetic contract behind the encryption scheme.
//!
//! The protocol layer (key shares, ciphertexts, decryption) is written once
//! against [`GroupBackend`] and instantiated twice: with a real pairing on a
//! BLS12-381-class curve ([`super::bls381::Bls381Backend`]) and with a mock
//! that tracks exponents in the clear over the same prime field
//! ([`super::mock::MockBackend`]). Protocol logic bugs surface in
//! milliseconds on the mock; curve-level behavior is covered by the real
//! backend.
//!
//! Both backends share one scalar field ([`Scalar`], the prime field of
//! order `p`), so plaintext-bound arithmetic (`2·n·B < p`) is identical in
//! either instantiation. Group operations are written additively: `add` is
//! the group law, `mul` is scalar multiplication (exponentiation in
//! multiplicative notation).

use std::fmt::Debug;

/// The scalar field Z_p shared by every backend.
///
/// `p` is the prime order of the BLS12-381 G1/G2/GT groups; the mock backend
/// reuses it so bound checks and mask arithmetic carry over unchanged.
pub type Scalar = ark_bls12_381::Fr;

/// An element of one of the three groups of the pairing setting.
///
/// Implementations must provide a canonical, fixed-width serialization:
/// `to_bytes` always returns exactly [`GroupElement::COMPRESSED_LEN`] bytes
/// and `from_bytes ∘ to_bytes` is the identity. Canonical bytes double as
/// hash-table keys during discrete-log recovery.
pub trait GroupElement: Clone + PartialEq + Eq + Debug + Send + Sync + 'static {
    /// Byte length of the canonical serialization.
    const COMPRESSED_LEN: usize;

    /// The neutral element.
    fn identity() -> Self;

    /// Group law.
    fn add(&self, other: &Self) -> Self;

    /// Inverse element.
    fn neg(&self) -> Self;

    /// Scalar multiplication (`self` combined with itself `k` times).
    fn mul(&self, k: &Scalar) -> Self;

    /// Canonical fixed-width serialization.
    fn to_bytes(&self) -> Vec<u8>;

    /// Inverse of [`GroupElement::to_bytes`]; `None` on malformed input
    /// (wrong length, not a valid canonical encoding, wrong subgroup).
    fn from_bytes(bytes: &[u8]) -> Option<Self>;

    /// `self − other`, provided for readability at call sites.
    fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }
}

/// An asymmetric pairing setting `e: G1 × G2 → GT` with hash-to-G1.
pub trait GroupBackend: Copy + PartialEq + Eq + Debug + Send + Sync + 'static {
    /// Human-readable backend name, used in logs and config files.
    const NAME: &'static str;

    type G1: GroupElement;
    type G2: GroupElement;
    type Gt: GroupElement;

    /// Fixed generator of G1.
    fn g1_generator() -> Self::G1;

    /// Fixed generator of G2.
    fn g2_generator() -> Self::G2;

    /// The bilinear map. `pairing(a·g1, b·g2) = (a·b)·e(g1, g2)`.
    fn pairing(a: &Self::G1, b: &Self::G2) -> Self::Gt;

    /// Hash arbitrary bytes onto G1 under a domain-separation tag.
    ///
    /// Deterministic; distinct `(dst, msg)` pairs land on independent
    /// points (standardized hash-to-curve on the real backend, a
    /// hash-to-scalar exponent on the mock).
    fn hash_to_g1(dst: &[u8], msg: &[u8]) -> Self::G1;

    /// Discrete-log peek for backends that track exponents in the clear.
    ///
    /// The mock backend returns the exponent of `x` with respect to
    /// `e(g1, g2)` directly, letting tests and desk-scale federations skip
    /// the baby-step giant-step search. Real backends return `None`.
    fn exponent_hint(x: &Self::Gt) -> Option<Scalar> {
        let _ = x;
        None
    }
}
