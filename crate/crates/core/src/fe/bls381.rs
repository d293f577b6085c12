//! BLS12-381 pairing backend.
//!
//! G1/G2 elements serialize to the standard 48/96-byte compressed point
//! encodings; GT elements use the canonical field serialization of the
//! pairing output (used only as in-memory discrete-log table keys, never on
//! the wire). Hash-to-G1 is the standardized simplified-SWU construction
//! with SHA-256 expansion, domain-separated by the caller's tag.

use ark_bls12_381::{g1, g2, Bls12_381};
use ark_ec::hashing::curve_maps::wb::WBMap;
use ark_ec::hashing::map_to_curve_hasher::MapToCurveBasedHasher;
use ark_ec::hashing::HashToCurve;
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::short_weierstrass::Projective;
use ark_ec::{CurveGroup, PrimeGroup};
use ark_ff::field_hashers::DefaultFieldHasher;
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use sha2::Sha256;

use super::backend::{GroupBackend, GroupElement, Scalar};

/// Pairing setting over the BLS12-381 curve (~128-bit group security).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bls381Backend;

// Fully normalized projective types: the upstream `G1Projective`/
// `G2Projective` aliases go through `Bls12Config` associated types, which
// the coherence checker cannot prove disjoint when implementing a trait for
// both.
type G1Projective = Projective<g1::Config>;
type G2Projective = Projective<g2::Config>;

type Gt = PairingOutput<Bls12_381>;
type G1Hasher = MapToCurveBasedHasher<G1Projective, DefaultFieldHasher<Sha256, 128>, WBMap<g1::Config>>;

macro_rules! impl_group_element {
    ($ty:ty, $len:expr) => {
        impl GroupElement for $ty {
            const COMPRESSED_LEN: usize = $len;

            fn identity() -> Self {
                <$ty as Default>::default()
            }

            fn add(&self, other: &Self) -> Self {
                *self + *other
            }

            fn neg(&self) -> Self {
                -*self
            }

            fn mul(&self, k: &Scalar) -> Self {
                *self * *k
            }

            fn to_bytes(&self) -> Vec<u8> {
                let mut out = Vec::with_capacity(Self::COMPRESSED_LEN);
                self.serialize_compressed(&mut out)
                    .expect("point serialization into a Vec cannot fail");
                out
            }

            fn from_bytes(bytes: &[u8]) -> Option<Self> {
                if bytes.len() != Self::COMPRESSED_LEN {
                    return None;
                }
                // `deserialize_compressed` validates the encoding, curve
                // membership, and prime-order subgroup membership.
                <$ty>::deserialize_compressed(bytes).ok()
            }
        }
    };
}

impl_group_element!(G1Projective, 48);
impl_group_element!(G2Projective, 96);
impl_group_element!(Gt, 576);

impl GroupBackend for Bls381Backend {
    const NAME: &'static str = "bls12-381";

    type G1 = G1Projective;
    type G2 = G2Projective;
    type Gt = Gt;

    fn g1_generator() -> G1Projective {
        G1Projective::generator()
    }

    fn g2_generator() -> G2Projective {
        G2Projective::generator()
    }

    fn pairing(a: &G1Projective, b: &G2Projective) -> Gt {
        Bls12_381::pairing(a.into_affine(), b.into_affine())
    }

    fn hash_to_g1(dst: &[u8], msg: &[u8]) -> G1Projective {
        let hasher = G1Hasher::new(dst).expect("hash-to-curve accepts any non-empty tag");
        hasher
            .hash(msg)
            .expect("simplified-SWU hashing is total over byte strings")
            .into()
    }
}
