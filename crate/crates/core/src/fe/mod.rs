//! Decentralized multi-client functional encryption for label-bound sums.
//!
//! `n` clients each hold a two-scalar secret `s_i` plus pairwise mask seeds.
//! Per federation round `r` every client encrypts its fixed-point value
//! under the round label and independently derives a *share* of the round's
//! functional decryption key:
//!
//! ```text
//!   ct_i  = g1^{x_i} · u1^{s_{i,1}} · u2^{s_{i,2}}      (u1, u2) = H_G1(r)
//!   dk_i  = [ s_i + T_i·v ]_G2                          v = H_Zp(f ∥ r ∥ P)
//! ```
//!
//! The masks `T_i` are pairwise PRF outputs with a sign convention that
//! telescopes to zero over the participant set `P`, so combining **all**
//! shares yields `dk_f = [Σ s_i]_G2` — and nothing else. Decryption pairs
//! the ciphertext product against `g2`, cancels the key part, and recovers
//! the bounded aggregate `Σ x_i` by baby-step giant-step:
//!
//! ```text
//!   α_T = e(Π ct_i, g2) · ( e(u1, dk_{f,1}) · e(u2, dk_{f,2}) )^{-1}
//!       = e(g1, g2)^{Σ x_i}        — iff every participant is present
//! ```
//!
//! Omit, duplicate, or replay any ciphertext or share and the masks no
//! longer cancel against the ciphertext layer: `α_T` is a uniformly
//! random-looking group element, the bounded search finds nothing, and
//! decryption fails closed ([`DecryptError::DecryptionFailure`]). That
//! range-exhaustion check is heuristic, not authenticated: a fluke in-range
//! match has probability ≤ (2nB+1)/p ≈ 2^{-231} at default parameters.
//!
//! Label binding works the same way: the round label enters through the
//! hashed bases `(u1, u2)`, so ciphertexts decrypt only in the round they
//! were produced for. [`decrypt`] never inspects the label *tags* carried by
//! ciphertexts — enforcement is purely algebraic, the tags exist for
//! serialization and server bookkeeping.

pub mod backend;
pub mod bls381;
pub mod bsgs;
pub mod fixed;
pub mod hashing;
pub mod mock;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use ark_ff::{BigInteger, PrimeField};
use hmac::{Hmac, Mac};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{GroupBackend, GroupElement, Scalar};
pub use bls381::Bls381Backend;
pub use bsgs::{bsgs_dlog, BsgsTable};
pub use fixed::{FixedPointSpec, FixedPointValue};
pub use mock::MockBackend;

/// Round identifier; serialized as 8 big-endian bytes on every wire format.
pub type RoundLabel = u64;

/// Numeric client identity, stable across a federation's lifetime.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct ClientId(pub u32);

/// Identifier of the function a decryption key reveals.
///
/// This artifact only ever issues keys for the all-ones sum ([`FunctionId::sum`]);
/// the identifier is hashed into the key-share derivation so that keys for
/// distinct functions could never be combined.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct FunctionId(String);

impl FunctionId {
    /// The plain (unweighted) sum over all participants.
    pub fn sum() -> Self {
        FunctionId("sum".to_owned())
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

/// A deduplicated, sorted set of round participants.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ParticipantSet {
    ids: Vec<ClientId>,
}

impl ParticipantSet {
    pub fn new(ids: impl IntoIterator<Item = ClientId>) -> Self {
        let set: BTreeSet<ClientId> = ids.into_iter().collect();
        ParticipantSet { ids: set.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: ClientId) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.ids.iter().copied()
    }

    /// SHA-256 over the sorted client ids (4 big-endian bytes each).
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for id in &self.ids {
            h.update(id.0.to_be_bytes());
        }
        h.finalize().into()
    }
}

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SetupError {
    #[error("unsupported security level {0} (this artifact accepts 256)")]
    UnsupportedSecurityLevel(u32),
    #[error("plaintext bound too large: 2·n·B must stay below the group order and n·B below 2^62")]
    BoundTooLarge,
    #[error("client count {0} is below the minimum of 2")]
    InvalidClientCount(u32),
    #[error("fraction bits {0} exceed the supported maximum of 32")]
    UnsupportedFixedPoint(u32),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error("identity {0:?} was already issued a key")]
    DuplicateIdentity(ClientId),
    #[error("identity {0:?} is outside the federation universe")]
    UnknownIdentity(ClientId),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ShareError {
    #[error("client {0:?} is not a member of the participant set")]
    NotAParticipant(ClientId),
    #[error("no pairwise seed for participant {0:?}")]
    MissingSeed(ClientId),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum CombineError {
    #[error("share set mismatch: {0}")]
    MismatchedShares(&'static str),
    #[error("missing key shares: expected {expected}, got {got}")]
    MissingShare { expected: usize, got: usize },
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EncryptError {
    #[error("plaintext magnitude {value} exceeds the per-client bound {bound}")]
    PlaintextOutOfBound { value: i64, bound: u64 },
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum DecryptError {
    #[error(
        "no aggregate within ±n·B matches: an omitted/extra/foreign-label ciphertext, \
         a tampered key share, or an unauthorized aggregation"
    )]
    DecryptionFailure,
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("{what}: expected {expected} bytes, got {got}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("{what}: invalid group-element encoding")]
    Point { what: &'static str },
}

// ── Public parameters ───────────────────────────────────────────────────

const LABEL_DST: &[u8] = b"FEDVEIL-DMCFE-V1:LABEL-G1";
const FUNC_DST: &[u8] = b"FEDVEIL-DMCFE-V1:FUNC-ZP";
const KEYGEN_DST: &[u8] = b"FEDVEIL-DMCFE-V1:KEYGEN";

/// Parameters shared by every federation member.
///
/// Carries the group descriptor (via the backend type parameter), the
/// hash-domain tags, the client count, and the fixed-point spec. The GT
/// discrete-log table is materialized lazily on first decryption and then
/// shared read-only.
#[derive(Debug)]
pub struct PublicParams<B: GroupBackend> {
    security_bits: u32,
    n: u32,
    fixed: FixedPointSpec,
    label_dst: Vec<u8>,
    func_dst: Vec<u8>,
    gt_base: OnceLock<B::Gt>,
    bsgs: OnceLock<BsgsTable<B::Gt>>,
}

impl<B: GroupBackend> PublicParams<B> {
    /// Number of clients in the federation universe.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Security-parameter input recorded at setup.
    pub fn security_bits(&self) -> u32 {
        self.security_bits
    }

    /// Fixed-point encoding parameters (`f_bits`, per-client bound `B`).
    pub fn fixed(&self) -> FixedPointSpec {
        self.fixed
    }

    /// Inclusive recovery bound for decrypted aggregates, `n·B`.
    pub fn sum_bound(&self) -> u64 {
        self.n as u64 * self.fixed.bound
    }

    /// `e(g1, g2)`, the base the decrypted aggregate is an exponent of.
    pub fn gt_base(&self) -> &B::Gt {
        self.gt_base
            .get_or_init(|| B::pairing(&B::g1_generator(), &B::g2_generator()))
    }

    /// The lazily built baby-step table for exponents in `±n·B`.
    pub fn bsgs_table(&self) -> &BsgsTable<B::Gt> {
        self.bsgs
            .get_or_init(|| BsgsTable::build(self.gt_base(), self.sum_bound()))
    }

    /// The two round-label base points `(u1, u2) = H_G1(r)`.
    pub fn label_bases(&self, round: RoundLabel) -> [B::G1; 2] {
        [1u8, 2u8].map(|k| {
            let mut msg = [0u8; 9];
            msg[..8].copy_from_slice(&round.to_be_bytes());
            msg[8] = k;
            B::hash_to_g1(&self.label_dst, &msg)
        })
    }

    fn function_vector(&self, f_id: &FunctionId, round: RoundLabel, digest: &[u8; 32]) -> [Scalar; 2] {
        let mut msg = Vec::with_capacity(f_id.as_bytes().len() + 8 + 32);
        msg.extend_from_slice(f_id.as_bytes());
        msg.extend_from_slice(&round.to_be_bytes());
        msg.extend_from_slice(digest);
        hashing::hash_to_scalar_pair(&self.func_dst, &msg)
    }
}

/// Select group parameters for a federation of `n` clients.
///
/// `security_bits` must be 256 (the input selects a pairing-friendly curve
/// of the BLS12-381 class, ≥128-bit group security). The bound is taken as
/// a big integer so that out-of-range requests — up to and including the
/// group order itself — are rejected rather than silently truncated:
/// `2·n·B < p` keeps signed-sum recovery unambiguous, and `n·B < 2^62`
/// keeps aggregates inside `i64` and the discrete-log table addressable.
pub fn setup<B: GroupBackend>(
    security_bits: u32,
    n: u32,
    f_bits: u32,
    bound: &BigUint,
) -> Result<PublicParams<B>, SetupError> {
    if security_bits != 256 {
        return Err(SetupError::UnsupportedSecurityLevel(security_bits));
    }
    if n < 2 {
        return Err(SetupError::InvalidClientCount(n));
    }
    if f_bits > 32 {
        return Err(SetupError::UnsupportedFixedPoint(f_bits));
    }
    let p = BigUint::from_bytes_le(&Scalar::MODULUS.to_bytes_le());
    if BigUint::from(2u32) * n * bound >= p {
        return Err(SetupError::BoundTooLarge);
    }
    let max_bound = BigUint::from(1u64 << 62) / n;
    if *bound == BigUint::ZERO || *bound > max_bound {
        return Err(SetupError::BoundTooLarge);
    }
    let bound_u64 = u64::try_from(bound).map_err(|_| SetupError::BoundTooLarge)?;
    Ok(PublicParams {
        security_bits,
        n,
        fixed: FixedPointSpec { f_bits, bound: bound_u64 },
        label_dst: LABEL_DST.to_vec(),
        func_dst: FUNC_DST.to_vec(),
        gt_base: OnceLock::new(),
        bsgs: OnceLock::new(),
    })
}

// ── Key material ────────────────────────────────────────────────────────

/// Per-client secret: the scalar pair `s_i` plus one symmetric mask seed per
/// other federation member.
#[derive(Clone)]
pub struct ClientSecretKey {
    id: ClientId,
    s: [Scalar; 2],
    seeds: BTreeMap<ClientId, [u8; 32]>,
}

impl ClientSecretKey {
    pub fn id(&self) -> ClientId {
        self.id
    }

    #[cfg(test)]
    pub(crate) fn seed_for(&self, other: ClientId) -> Option<&[u8; 32]> {
        self.seeds.get(&other)
    }
}

impl std::fmt::Debug for ClientSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSecretKey")
            .field("id", &self.id)
            .field("s", &"<redacted>")
            .field("seeds", &format_args!("<{} redacted>", self.seeds.len()))
            .finish()
    }
}

/// Encryption half of a client's key material; shares the scalar pair with
/// the secret key and is bound to exactly one identity.
#[derive(Clone)]
pub struct EncryptionKey {
    id: ClientId,
    s: [Scalar; 2],
}

impl EncryptionKey {
    pub fn id(&self) -> ClientId {
        self.id
    }
}

impl std::fmt::Debug for EncryptionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncryptionKey")
            .field("id", &self.id)
            .field("s", &"<redacted>")
            .finish()
    }
}

/// Trusted in-process source of pairwise shared seeds.
///
/// Stands in for an authenticated pairwise key agreement: both endpoints of
/// a pair derive the identical 256-bit seed, and every identity is issued
/// key material at most once. A production deployment would replace this
/// with a real key-agreement protocol; the simulator's clients are assumed
/// to run key generation correctly.
#[derive(Debug)]
pub struct TrustedBootstrap {
    master: [u8; 32],
    n: u32,
    issued: BTreeSet<ClientId>,
}

impl TrustedBootstrap {
    pub fn new(n: u32, seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"fe-bootstrap-v1");
        h.update(seed.to_be_bytes());
        TrustedBootstrap { master: h.finalize().into(), n, issued: BTreeSet::new() }
    }

    fn pair_seed(&self, a: ClientId, b: ClientId) -> [u8; 32] {
        let (lo, hi) = if a.0 <= b.0 { (a, b) } else { (b, a) };
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.master)
            .expect("HMAC-SHA-256 accepts any key length");
        mac.update(b"fe-pair-v1");
        mac.update(&lo.0.to_be_bytes());
        mac.update(&hi.0.to_be_bytes());
        mac.finalize().into_bytes().into()
    }
}

/// Issue key material for one client identity.
///
/// `s_i` is derived uniformly from the bootstrap's master randomness; the
/// pairwise seeds are symmetric by construction (`seed_ij = seed_ji`). Each
/// identity can be issued at most once per bootstrap.
pub fn keygen<B: GroupBackend>(
    pp: &PublicParams<B>,
    id: ClientId,
    bootstrap: &mut TrustedBootstrap,
) -> Result<(ClientSecretKey, EncryptionKey), KeyError> {
    if id.0 >= pp.n() || id.0 >= bootstrap.n {
        return Err(KeyError::UnknownIdentity(id));
    }
    if !bootstrap.issued.insert(id) {
        return Err(KeyError::DuplicateIdentity(id));
    }
    let s = [0u8, 1u8].map(|k| {
        let mut msg = Vec::with_capacity(37);
        msg.extend_from_slice(&bootstrap.master);
        msg.extend_from_slice(&id.0.to_be_bytes());
        msg.push(k);
        hashing::hash_to_scalar(KEYGEN_DST, &msg)
    });
    let seeds = (0..bootstrap.n)
        .map(ClientId)
        .filter(|j| *j != id)
        .map(|j| (j, bootstrap.pair_seed(id, j)))
        .collect();
    Ok((ClientSecretKey { id, s, seeds }, EncryptionKey { id, s }))
}

// ── Key shares ──────────────────────────────────────────────────────────

/// One client's share of a round's functional decryption key.
///
/// Valid only for the `(function, round, participant set)` it was derived
/// for; the round label and participant digest ride along so the combiner
/// can reject mismatched sets before doing any group arithmetic.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PartialDecKey<B: GroupBackend> {
    key: [B::G2; 2],
    round: RoundLabel,
    function: FunctionId,
    participant_digest: [u8; 32],
}

impl<B: GroupBackend> PartialDecKey<B> {
    pub fn round(&self) -> RoundLabel {
        self.round
    }

    pub fn function(&self) -> &FunctionId {
        &self.function
    }

    pub fn participant_digest(&self) -> &[u8; 32] {
        &self.participant_digest
    }
}

/// The combined functional decryption key `[Σ_{i∈P} s_i]_G2` for one round.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FunctionalDecKey<B: GroupBackend> {
    key: [B::G2; 2],
    round: RoundLabel,
}

impl<B: GroupBackend> FunctionalDecKey<B> {
    pub fn round(&self) -> RoundLabel {
        self.round
    }
}

/// The client's pairwise mask `T_i = Σ_{j<i} F(seed_ij, r, P) − Σ_{j>i} F(seed_ij, r, P)`.
///
/// The sign convention telescopes: summed over every `i ∈ P`, each pair's
/// matrix appears once positively and once negatively, so `Σ_{i∈P} T_i = 0`
/// exactly. Exposed so tests and diagnostics can verify the cancellation
/// without reimplementing the derivation.
pub fn pairwise_mask(
    sk: &ClientSecretKey,
    round: RoundLabel,
    participants: &ParticipantSet,
) -> Result<[[Scalar; 2]; 2], ShareError> {
    if !participants.contains(sk.id) {
        return Err(ShareError::NotAParticipant(sk.id));
    }
    let digest = participants.digest();
    let mut total = [[Scalar::default(); 2]; 2];
    for j in participants.iter().filter(|j| *j != sk.id) {
        let seed = sk.seeds.get(&j).ok_or(ShareError::MissingSeed(j))?;
        let m = hashing::mask_matrix(seed, round, &digest);
        for (row, m_row) in m.iter().enumerate() {
            for (col, cell) in m_row.iter().enumerate() {
                if j < sk.id {
                    total[row][col] += cell;
                } else {
                    total[row][col] -= cell;
                }
            }
        }
    }
    Ok(total)
}

/// Derive this client's partial decryption key for `(f_id, round, P)`.
///
/// `dk_i = [ y_i·s_i + T_i·v ]_G2` with `y_i = 1` (summation) and
/// `v = H_Zp(f_id ∥ r ∥ digest(P))`. Deterministic: the same inputs always
/// produce the same share.
pub fn dkey_share<B: GroupBackend>(
    sk: &ClientSecretKey,
    f_id: &FunctionId,
    round: RoundLabel,
    participants: &ParticipantSet,
    pp: &PublicParams<B>,
) -> Result<PartialDecKey<B>, ShareError> {
    let mask = pairwise_mask(sk, round, participants)?;
    let digest = participants.digest();
    let v = pp.function_vector(f_id, round, &digest);
    let g2 = B::g2_generator();
    let key = [0usize, 1usize].map(|row| {
        let exponent = sk.s[row] + mask[row][0] * v[0] + mask[row][1] * v[1];
        g2.mul(&exponent)
    });
    Ok(PartialDecKey { key, round, function: f_id.clone(), participant_digest: digest })
}

/// Combine one share per participant into the functional decryption key.
///
/// Rejects inconsistent inputs before touching group arithmetic: a short
/// share set ([`CombineError::MissingShare`], counted against `expected`),
/// or shares disagreeing on round, function, or participant digest
/// ([`CombineError::MismatchedShares`]). Note the checks are bookkeeping,
/// not enforcement — a server that bypasses them (see
/// [`dkey_comb_unchecked`]) still cannot decrypt anything but the complete
/// aggregate, because the pairwise masks only cancel over the full set.
pub fn dkey_comb<B: GroupBackend>(
    shares: &[PartialDecKey<B>],
    expected: &ParticipantSet,
) -> Result<FunctionalDecKey<B>, CombineError> {
    if shares.len() < expected.len() {
        return Err(CombineError::MissingShare { expected: expected.len(), got: shares.len() });
    }
    if shares.len() > expected.len() {
        return Err(CombineError::MismatchedShares("more shares than participants"));
    }
    let digest = expected.digest();
    let first = &shares[0];
    for share in shares {
        if share.round != first.round {
            return Err(CombineError::MismatchedShares("round labels differ"));
        }
        if share.function != first.function {
            return Err(CombineError::MismatchedShares("function identifiers differ"));
        }
        if share.participant_digest != digest {
            return Err(CombineError::MismatchedShares("participant digest differs"));
        }
    }
    Ok(combine_shares(shares))
}

/// Sum shares componentwise with no consistency checks.
///
/// Exists for two reasons: servers that track share provenance themselves,
/// and tests that deliberately combine incomplete or cross-round share sets
/// to confirm that the resulting key decrypts nothing (Theorem-1 behavior
/// lives in the algebra, not in the bookkeeping of [`dkey_comb`]).
pub fn dkey_comb_unchecked<B: GroupBackend>(
    shares: &[PartialDecKey<B>],
) -> Result<FunctionalDecKey<B>, CombineError> {
    if shares.is_empty() {
        return Err(CombineError::MissingShare { expected: 1, got: 0 });
    }
    Ok(combine_shares(shares))
}

fn combine_shares<B: GroupBackend>(shares: &[PartialDecKey<B>]) -> FunctionalDecKey<B> {
    let mut key = [B::G2::identity(), B::G2::identity()];
    for share in shares {
        key[0] = key[0].add(&share.key[0]);
        key[1] = key[1].add(&share.key[1]);
    }
    FunctionalDecKey { key, round: shares[0].round }
}

// ── Encryption / decryption ─────────────────────────────────────────────

/// A client's encrypted fixed-point value for one round.
///
/// Constant-size: one compressed G1 element plus the label, independent of
/// the plaintext value and of whether the sender was learning or unlearning.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ciphertext<B: GroupBackend> {
    point: B::G1,
    round: RoundLabel,
}

impl<B: GroupBackend> Ciphertext<B> {
    pub fn round(&self) -> RoundLabel {
        self.round
    }
}

fn scalar_from_i64(x: i64) -> Scalar {
    if x >= 0 {
        Scalar::from(x as u64)
    } else {
        -Scalar::from(x.unsigned_abs())
    }
}

/// Encrypt one fixed-point value under the round label.
///
/// `ct = g1^x · u1^{s_{i,1}} · u2^{s_{i,2}}` with `(u1, u2) = H_G1(r)`;
/// signed `x` is encoded as `x mod p`.
pub fn encrypt<B: GroupBackend>(
    ek: &EncryptionKey,
    x: FixedPointValue,
    round: RoundLabel,
    pp: &PublicParams<B>,
) -> Result<Ciphertext<B>, EncryptError> {
    let [u1, u2] = pp.label_bases(round);
    encrypt_with_bases(ek, x, round, &[u1, u2], pp)
}

/// Encrypt a batch under one label, deriving the label bases once.
pub fn encrypt_many<B: GroupBackend>(
    ek: &EncryptionKey,
    xs: &[FixedPointValue],
    round: RoundLabel,
    pp: &PublicParams<B>,
) -> Result<Vec<Ciphertext<B>>, EncryptError> {
    let bases = pp.label_bases(round);
    xs.iter().map(|x| encrypt_with_bases(ek, *x, round, &bases, pp)).collect()
}

fn encrypt_with_bases<B: GroupBackend>(
    ek: &EncryptionKey,
    x: FixedPointValue,
    round: RoundLabel,
    bases: &[B::G1; 2],
    pp: &PublicParams<B>,
) -> Result<Ciphertext<B>, EncryptError> {
    if x.0.unsigned_abs() > pp.fixed.bound {
        return Err(EncryptError::PlaintextOutOfBound { value: x.0, bound: pp.fixed.bound });
    }
    let point = B::g1_generator()
        .mul(&scalar_from_i64(x.0))
        .add(&bases[0].mul(&ek.s[0]))
        .add(&bases[1].mul(&ek.s[1]));
    Ok(Ciphertext { point, round })
}

/// Per-round decryption state: the key-cancellation term is fixed per
/// `(dk_f, r)`, so servers decrypting many indices per round derive it once.
pub struct RoundDecryptor<'a, B: GroupBackend> {
    correction: B::Gt,
    pp: &'a PublicParams<B>,
}

impl<'a, B: GroupBackend> RoundDecryptor<'a, B> {
    /// Pair the functional key against the label bases of `round`.
    pub fn new(dk: &FunctionalDecKey<B>, round: RoundLabel, pp: &'a PublicParams<B>) -> Self {
        let [u1, u2] = pp.label_bases(round);
        let key_part = B::pairing(&u1, &dk.key[0]).add(&B::pairing(&u2, &dk.key[1]));
        RoundDecryptor { correction: key_part.neg(), pp }
    }

    /// Recover the bounded aggregate from a combined ciphertext product.
    pub fn recover(&self, combined: &B::G1) -> Result<FixedPointValue, DecryptError> {
        let alpha_t = B::pairing(combined, &B::g2_generator()).add(&self.correction);
        let bound = self.pp.sum_bound();
        let alpha = match B::exponent_hint(&alpha_t) {
            Some(exponent) => signed_in_bound(&exponent, bound),
            None => self.pp.bsgs_table().solve(&alpha_t),
        };
        alpha.map(FixedPointValue).ok_or(DecryptError::DecryptionFailure)
    }

    /// Fold a ciphertext tuple and recover its aggregate.
    pub fn decrypt_sum(&self, cts: &[Ciphertext<B>]) -> Result<FixedPointValue, DecryptError> {
        let combined = cts
            .iter()
            .fold(B::G1::identity(), |acc, ct| acc.add(&ct.point));
        self.recover(&combined)
    }
}

/// Decrypt the aggregate of one ciphertext per participant.
///
/// `round` must be the label the ciphertexts were produced under and the
/// key derived for. The label is never compared against the tags carried by
/// the ciphertexts: it enters through the hashed bases `(u1, u2)`, so any
/// cross-round input — like any omitted or foreign ciphertext — lands
/// outside the searchable range and fails as
/// [`DecryptError::DecryptionFailure`].
pub fn decrypt<B: GroupBackend>(
    cts: &[Ciphertext<B>],
    dk: &FunctionalDecKey<B>,
    round: RoundLabel,
    pp: &PublicParams<B>,
) -> Result<FixedPointValue, DecryptError> {
    RoundDecryptor::new(dk, round, pp).decrypt_sum(cts)
}

/// Interpret a field element as a signed integer within `±bound`, if possible.
fn signed_in_bound(x: &Scalar, bound: u64) -> Option<i64> {
    let bound_big = <Scalar as PrimeField>::BigInt::from(bound);
    let big = x.into_bigint();
    if big <= bound_big {
        return Some(big.0[0] as i64);
    }
    let neg = (-*x).into_bigint();
    if neg <= bound_big {
        return Some(-(neg.0[0] as i64));
    }
    None
}

/// Quantize a real under the federation's fixed-point spec.
pub fn quantize<B: GroupBackend>(w: f64, pp: &PublicParams<B>) -> FixedPointValue {
    pp.fixed.quantize(w)
}

/// Map a fixed-point value (or decrypted aggregate) back to a real.
pub fn dequantize<B: GroupBackend>(x: FixedPointValue, pp: &PublicParams<B>) -> f64 {
    pp.fixed.dequantize(x)
}

// ── Wire encodings ──────────────────────────────────────────────────────

/// Serialized ciphertext length: compressed G1 point ∥ 8-byte label.
pub fn ciphertext_wire_len<B: GroupBackend>() -> usize {
    B::G1::COMPRESSED_LEN + 8
}

/// Serialized share length: two compressed G2 points ∥ label ∥ digest.
pub fn partial_dec_key_wire_len<B: GroupBackend>() -> usize {
    2 * B::G2::COMPRESSED_LEN + 8 + 32
}

impl<B: GroupBackend> Ciphertext<B> {
    /// Compressed G1 point ∥ 8-byte big-endian round label.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.point.to_bytes();
        out.extend_from_slice(&self.round.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let expected = ciphertext_wire_len::<B>();
        if bytes.len() != expected {
            return Err(WireError::Length { what: "ciphertext", expected, got: bytes.len() });
        }
        let (point_bytes, label) = bytes.split_at(B::G1::COMPRESSED_LEN);
        let point =
            B::G1::from_bytes(point_bytes).ok_or(WireError::Point { what: "ciphertext" })?;
        Ok(Ciphertext { point, round: u64::from_be_bytes(label.try_into().expect("split is 8 bytes")) })
    }
}

impl<B: GroupBackend> PartialDecKey<B> {
    /// Two compressed G2 points ∥ 8-byte big-endian label ∥ 32-byte
    /// participant digest. The function identifier is not serialized — the
    /// wire format carries shares of the summation key only.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.key[0].to_bytes();
        out.extend_from_slice(&self.key[1].to_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&self.participant_digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let expected = partial_dec_key_wire_len::<B>();
        if bytes.len() != expected {
            return Err(WireError::Length { what: "key share", expected, got: bytes.len() });
        }
        let g2_len = B::G2::COMPRESSED_LEN;
        let k0 = B::G2::from_bytes(&bytes[..g2_len]).ok_or(WireError::Point { what: "key share" })?;
        let k1 = B::G2::from_bytes(&bytes[g2_len..2 * g2_len])
            .ok_or(WireError::Point { what: "key share" })?;
        let round = u64::from_be_bytes(bytes[2 * g2_len..2 * g2_len + 8].try_into().expect("8 bytes"));
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&bytes[2 * g2_len + 8..]);
        Ok(PartialDecKey { key: [k0, k1], round, function: FunctionId::sum(), participant_digest: digest })
    }
}

impl<B: GroupBackend> FunctionalDecKey<B> {
    /// Two compressed G2 points ∥ 8-byte big-endian label (artifact-internal
    /// format, used by the foreign-function layer).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.key[0].to_bytes();
        out.extend_from_slice(&self.key[1].to_bytes());
        out.extend_from_slice(&self.round.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let expected = 2 * B::G2::COMPRESSED_LEN + 8;
        if bytes.len() != expected {
            return Err(WireError::Length { what: "functional key", expected, got: bytes.len() });
        }
        let g2_len = B::G2::COMPRESSED_LEN;
        let k0 =
            B::G2::from_bytes(&bytes[..g2_len]).ok_or(WireError::Point { what: "functional key" })?;
        let k1 = B::G2::from_bytes(&bytes[g2_len..2 * g2_len])
            .ok_or(WireError::Point { what: "functional key" })?;
        let round = u64::from_be_bytes(bytes[2 * g2_len..].try_into().expect("8 bytes"));
        Ok(FunctionalDecKey { key: [k0, k1], round })
    }
}
