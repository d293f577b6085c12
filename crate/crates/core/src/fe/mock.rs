//! Exponent-tracking mock backend.
//!
//! Every "group element" is just its discrete logarithm with respect to the
//! (notional) generator, stored as a [`Scalar`]. The pairing multiplies
//! exponents, hash-to-group hashes into the exponent, and serialization is
//! the canonical 32-byte little-endian field encoding. All protocol algebra
//! — mask cancellation, label binding, bounded-sum recovery — behaves
//! exactly as on a real curve over the same prime field, at a tiny fraction
//! of the cost, which is what makes full federation runs practical in CI.
//!
//! The mock provides no confidentiality whatsoever (the "ciphertext" *is*
//! the masked exponent); it exists to test protocol logic, not security.

use ark_ff::{AdditiveGroup, Field};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};

use super::backend::{GroupBackend, GroupElement, Scalar};
use super::hashing::hash_to_scalar;

/// Pairing setting that stores exponents in the clear over Z_p.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MockBackend;

macro_rules! mock_group {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Copy, PartialEq, Eq, Debug)]
        pub struct $name(pub Scalar);

        impl GroupElement for $name {
            const COMPRESSED_LEN: usize = 32;

            fn identity() -> Self {
                $name(Scalar::ZERO)
            }

            fn add(&self, other: &Self) -> Self {
                $name(self.0 + other.0)
            }

            fn neg(&self) -> Self {
                $name(-self.0)
            }

            fn mul(&self, k: &Scalar) -> Self {
                $name(self.0 * k)
            }

            fn to_bytes(&self) -> Vec<u8> {
                let mut out = Vec::with_capacity(Self::COMPRESSED_LEN);
                self.0
                    .serialize_compressed(&mut out)
                    .expect("field serialization into a Vec cannot fail");
                out
            }

            fn from_bytes(bytes: &[u8]) -> Option<Self> {
                if bytes.len() != Self::COMPRESSED_LEN {
                    return None;
                }
                Scalar::deserialize_compressed(bytes).ok().map($name)
            }
        }
    };
}

mock_group!(
    /// Mock G1 element: the exponent of `g1`.
    MockG1
);
mock_group!(
    /// Mock G2 element: the exponent of `g2`.
    MockG2
);
mock_group!(
    /// Mock GT element: the exponent of `e(g1, g2)`.
    MockGt
);

impl GroupBackend for MockBackend {
    const NAME: &'static str = "mock";

    type G1 = MockG1;
    type G2 = MockG2;
    type Gt = MockGt;

    fn g1_generator() -> MockG1 {
        MockG1(Scalar::ONE)
    }

    fn g2_generator() -> MockG2 {
        MockG2(Scalar::ONE)
    }

    fn pairing(a: &MockG1, b: &MockG2) -> MockGt {
        // e(a·g1, b·g2) = (a·b)·e(g1, g2): exponents multiply.
        MockGt(a.0 * b.0)
    }

    fn hash_to_g1(dst: &[u8], msg: &[u8]) -> MockG1 {
        MockG1(hash_to_scalar(dst, msg))
    }

    fn exponent_hint(x: &MockGt) -> Option<Scalar> {
        Some(x.0)
    }
}
