//! Deterministic hashing into the scalar field, plus the keyed mask PRF.
//!
//! Everything here is built from SHA-256 / HMAC-SHA-256. Each logical hash
//! expands to 64 bytes before reduction mod p, so the bias of the reduced
//! scalar is below 2^(-255) — negligible against the 128-bit security target.
//! All inputs are length-framed, making the encodings prefix-free: no two
//! distinct `(dst, msg)` pairs feed the same digest input.

use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::{Digest, Sha256};

use super::backend::Scalar;
use ark_ff::PrimeField;

type HmacSha256 = Hmac<Sha256>;

/// Reduce 64 uniform bytes into the scalar field.
pub fn scalar_from_wide(bytes: &[u8; 64]) -> Scalar {
    Scalar::from_le_bytes_mod_order(bytes)
}

/// Draw a near-uniform scalar from a seeded RNG stream.
pub fn random_scalar<R: RngCore>(rng: &mut R) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    scalar_from_wide(&wide)
}

/// Hash `(dst, msg)` into the scalar field.
///
/// The 64-byte expansion is two SHA-256 invocations over the length-framed
/// input, distinguished by a trailing block counter.
pub fn hash_to_scalar(dst: &[u8], msg: &[u8]) -> Scalar {
    let mut wide = [0u8; 64];
    for (block, chunk) in wide.chunks_exact_mut(32).enumerate() {
        let mut h = Sha256::new();
        h.update((dst.len() as u64).to_be_bytes());
        h.update(dst);
        h.update((msg.len() as u64).to_be_bytes());
        h.update(msg);
        h.update([block as u8]);
        chunk.copy_from_slice(&h.finalize());
    }
    scalar_from_wide(&wide)
}

/// Hash `(dst, msg)` into a pair of scalars (indexed expansion of
/// [`hash_to_scalar`]).
pub fn hash_to_scalar_pair(dst: &[u8], msg: &[u8]) -> [Scalar; 2] {
    let mut indexed = Vec::with_capacity(msg.len() + 1);
    [0u8, 1u8].map(|k| {
        indexed.clear();
        indexed.extend_from_slice(msg);
        indexed.push(k);
        hash_to_scalar(dst, &indexed)
    })
}

/// Keyed pseudorandom expansion of `(round, participant digest)` into a
/// 2×2 scalar matrix — the pairwise mask PRF `F(seed_ij, r, P)`.
///
/// Each cell expands two HMAC-SHA-256 blocks to 64 bytes and reduces mod p.
/// The same `(seed, r, digest)` triple always yields the same matrix, which
/// is what lets the two endpoints of a pair derive identical masks without
/// talking to each other.
pub fn mask_matrix(seed: &[u8; 32], round: u64, participant_digest: &[u8; 32]) -> [[Scalar; 2]; 2] {
    let mut out = [[Scalar::default(); 2]; 2];
    for (row, out_row) in out.iter_mut().enumerate() {
        for (col, cell) in out_row.iter_mut().enumerate() {
            let mut wide = [0u8; 64];
            for (block, chunk) in wide.chunks_exact_mut(32).enumerate() {
                let mut mac = HmacSha256::new_from_slice(seed)
                    .expect("HMAC-SHA-256 accepts any key length");
                mac.update(b"fe-mask-v1");
                mac.update(&round.to_be_bytes());
                mac.update(participant_digest);
                mac.update(&[row as u8, col as u8, block as u8]);
                chunk.copy_from_slice(&mac.finalize().into_bytes());
            }
            *cell = scalar_from_wide(&wide);
        }
    }
    out
}
