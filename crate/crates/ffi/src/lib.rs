//! C ABI over the fedveil library.
//!
//! Two surfaces:
//!
//! 1. **Byte-level DMCFE primitives** behind an opaque [`FvDmcfe`] handle:
//!    per-party encryption of bounded fixed-point integers under a round
//!    label, per-party key shares, and the all-parties sum decryption. Wire
//!    blobs are exactly the library's serialized forms, so they interoperate
//!    with updates produced by the Rust API.
//! 2. **Whole-experiment execution** ([`fv_run_experiment`]): run a TOML
//!    config into a run directory, identical to `fedveil run`.
//!
//! Conventions: every fallible function returns an `int32_t` status
//! (`FV_OK` = 0, negative on failure); the last failure message per thread
//! is retrievable via [`fv_last_error_message`]. Out-parameters are written
//! only on success. Panics never cross the boundary — they map to
//! `FV_ERR_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;

use num_bigint::BigUint;

use fedveil::cli::{cmd_run, RunArgs};
use fedveil::fe::backend::GroupBackend;
use fedveil::fe::{
    ciphertext_wire_len, dkey_comb, dkey_share, encrypt, keygen, partial_dec_key_wire_len, setup,
    Bls381Backend, Ciphertext, ClientId, ClientSecretKey, EncryptionKey, FixedPointValue,
    FunctionId, MockBackend, ParticipantSet, PartialDecKey, PublicParams, RoundDecryptor,
    TrustedBootstrap,
};

/// Success.
pub const FV_OK: i32 = 0;
/// A required pointer argument was NULL.
pub const FV_ERR_NULL_POINTER: i32 = -1;
/// A string argument was not valid UTF-8.
pub const FV_ERR_INVALID_UTF8: i32 = -2;
/// An argument was out of range (party index, buffer geometry, …).
pub const FV_ERR_INVALID_ARGUMENT: i32 = -3;
/// The caller-supplied buffer is smaller than the required length.
pub const FV_ERR_BUFFER_TOO_SMALL: i32 = -4;
/// Configuration parse or validation failure.
pub const FV_ERR_CONFIG: i32 = -5;
/// Dataset ingestion failure.
pub const FV_ERR_DATA: i32 = -6;
/// Cryptographic failure (setup, encryption, share combination,
/// or an unauthorized/tampered aggregation rejected at decryption).
pub const FV_ERR_CRYPTO: i32 = -7;
/// Experiment execution failure (I/O, missing artifacts, simulation).
pub const FV_ERR_RUN: i32 = -8;
/// An internal panic was caught at the boundary.
pub const FV_ERR_PANIC: i32 = -9;

/// Group backend selector for [`fv_dmcfe_new`].
#[repr(i32)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FvBackend {
    /// Exponent-tracking test backend: same algebra, no pairings.
    Mock = 0,
    /// BLS12-381 pairing backend.
    Bls381 = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

fn fail(err: Failure) -> i32 {
    let code = err.code;
    LAST_ERROR.with(|slot| {
        let sanitized: Vec<u8> =
            err.message.bytes().map(|b| if b == 0 { b' ' } else { b }).collect();
        *slot.borrow_mut() = CString::new(sanitized).expect("NULs stripped");
    });
    code
}

/// Run `body`, translating both failures and panics into status codes.
fn guarded(body: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FV_OK,
        Ok(Err(err)) => fail(err),
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(Failure::new(FV_ERR_PANIC, format!("internal panic: {message}")))
        }
    }
}

unsafe fn required<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure::new(FV_ERR_NULL_POINTER, format!("{name} is NULL")))
}

unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(FV_ERR_NULL_POINTER, format!("{name} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::new(FV_ERR_INVALID_UTF8, format!("{name} is not valid UTF-8")))
}

// ── DMCFE handle ────────────────────────────────────────────────────────

/// One DMCFE instance for a fixed party count: public parameters plus every
/// party's key material (this ABI targets embedding and testing, where one
/// process simulates all parties). Key shares authorize the all-parties sum.
struct Instance<B: GroupBackend> {
    pp: PublicParams<B>,
    participants: ParticipantSet,
    secrets: Vec<ClientSecretKey>,
    encryptors: Vec<EncryptionKey>,
}

impl<B: GroupBackend> Instance<B> {
    fn new(parties: u32, seed: u64, f_bits: u32, bound: u64) -> Result<Self, Failure> {
        let pp = setup::<B>(256, parties, f_bits, &BigUint::from(bound))
            .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
        let mut bootstrap = TrustedBootstrap::new(parties, seed);
        let mut secrets = Vec::with_capacity(parties as usize);
        let mut encryptors = Vec::with_capacity(parties as usize);
        for id in 0..parties {
            let (sk, ek) = keygen(&pp, ClientId(id), &mut bootstrap)
                .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
            secrets.push(sk);
            encryptors.push(ek);
        }
        Ok(Instance {
            pp,
            participants: ParticipantSet::new((0..parties).map(ClientId)),
            secrets,
            encryptors,
        })
    }

    fn party(&self, index: u32) -> Result<usize, Failure> {
        if (index as usize) < self.encryptors.len() {
            Ok(index as usize)
        } else {
            Err(Failure::new(
                FV_ERR_INVALID_ARGUMENT,
                format!("party {index} out of range for {} parties", self.encryptors.len()),
            ))
        }
    }

    fn encrypt_bytes(&self, party: u32, units: i64, round: u64) -> Result<Vec<u8>, Failure> {
        let i = self.party(party)?;
        let ct = encrypt(&self.encryptors[i], FixedPointValue(units), round, &self.pp)
            .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
        Ok(ct.to_bytes())
    }

    fn key_share_bytes(&self, party: u32, round: u64) -> Result<Vec<u8>, Failure> {
        let i = self.party(party)?;
        let share =
            dkey_share(&self.secrets[i], &FunctionId::sum(), round, &self.participants, &self.pp)
                .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
        Ok(share.to_bytes())
    }

    fn decrypt_sum(&self, round: u64, cts: &[u8], shares: &[u8]) -> Result<i64, Failure> {
        let n = self.encryptors.len();
        let ct_len = ciphertext_wire_len::<B>();
        let share_len = partial_dec_key_wire_len::<B>();
        if cts.len() != n * ct_len {
            return Err(Failure::new(
                FV_ERR_INVALID_ARGUMENT,
                format!("ciphertext buffer is {} bytes, expected {}·{ct_len}", cts.len(), n),
            ));
        }
        if shares.len() != n * share_len {
            return Err(Failure::new(
                FV_ERR_INVALID_ARGUMENT,
                format!("key-share buffer is {} bytes, expected {}·{share_len}", shares.len(), n),
            ));
        }
        let cts: Vec<Ciphertext<B>> = cts
            .chunks_exact(ct_len)
            .map(Ciphertext::from_bytes)
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
        let shares: Vec<PartialDecKey<B>> = shares
            .chunks_exact(share_len)
            .map(PartialDecKey::from_bytes)
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
        let dk = dkey_comb(&shares, &self.participants)
            .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
        let sum = RoundDecryptor::new(&dk, round, &self.pp)
            .decrypt_sum(&cts)
            .map_err(|e| Failure::new(FV_ERR_CRYPTO, e.to_string()))?;
        Ok(sum.0)
    }
}

enum Inner {
    Mock(Instance<MockBackend>),
    Bls381(Instance<Bls381Backend>),
}

/// Opaque DMCFE instance; create with [`fv_dmcfe_new`], release with
/// [`fv_dmcfe_free`].
pub struct FvDmcfe {
    inner: Inner,
}

macro_rules! dispatch {
    ($handle:expr, $inst:ident => $body:expr) => {
        match &$handle.inner {
            Inner::Mock($inst) => $body,
            Inner::Bls381($inst) => $body,
        }
    };
}

fn write_blob(blob: &[u8], out: *mut u8, out_len: usize) -> Result<(), Failure> {
    if out_len < blob.len() {
        return Err(Failure::new(
            FV_ERR_BUFFER_TOO_SMALL,
            format!("need {} bytes, got {out_len}", blob.len()),
        ));
    }
    unsafe { std::ptr::copy_nonoverlapping(blob.as_ptr(), out, blob.len()) };
    Ok(())
}

// ── Exported functions ──────────────────────────────────────────────────

/// Library version as a static NUL-terminated string; never NULL.
#[no_mangle]
pub extern "C" fn fv_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).expect("version has no NUL"))
        .as_ptr()
}

/// Message for this thread's most recent failure; empty string if none.
/// Valid until the next failing `fv_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a DMCFE instance for `parties` parties (≥ 2).
///
/// `seed` drives the trusted key-material bootstrap deterministically.
/// `f_bits`/`bound` fix the plaintext window: per-party integers must stay
/// within `±bound`, and decrypted sums within `±parties·bound`. Pass the
/// protocol defaults `f_bits = 16`, `bound = 1 << 19` to interoperate with
/// federation updates. On success writes a handle to `out`; free it with
/// [`fv_dmcfe_free`].
///
/// # Safety
/// `out` must be a valid pointer to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fv_dmcfe_new(
    parties: u32,
    seed: u64,
    backend: FvBackend,
    f_bits: u32,
    bound: u64,
    out: *mut *mut FvDmcfe,
) -> i32 {
    guarded(|| {
        if out.is_null() {
            return Err(Failure::new(FV_ERR_NULL_POINTER, "out is NULL"));
        }
        let inner = match backend {
            FvBackend::Mock => Inner::Mock(Instance::new(parties, seed, f_bits, bound)?),
            FvBackend::Bls381 => Inner::Bls381(Instance::new(parties, seed, f_bits, bound)?),
        };
        out.write(Box::into_raw(Box::new(FvDmcfe { inner })));
        Ok(())
    })
}

/// Release a handle created by [`fv_dmcfe_new`]. NULL is a no-op.
///
/// # Safety
/// `handle` must be NULL or a pointer previously returned by
/// [`fv_dmcfe_new`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fv_dmcfe_free(handle: *mut FvDmcfe) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Serialized ciphertext length in bytes for this instance's backend.
///
/// # Safety
/// `handle` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fv_dmcfe_ciphertext_len(
    handle: *const FvDmcfe,
    out_len: *mut usize,
) -> i32 {
    guarded(|| {
        let handle = required(handle, "handle")?;
        if out_len.is_null() {
            return Err(Failure::new(FV_ERR_NULL_POINTER, "out_len is NULL"));
        }
        let len = match &handle.inner {
            Inner::Mock(_) => ciphertext_wire_len::<MockBackend>(),
            Inner::Bls381(_) => ciphertext_wire_len::<Bls381Backend>(),
        };
        out_len.write(len);
        Ok(())
    })
}

/// Serialized key-share length in bytes for this instance's backend.
///
/// # Safety
/// `handle` must be a live handle; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fv_dmcfe_key_share_len(
    handle: *const FvDmcfe,
    out_len: *mut usize,
) -> i32 {
    guarded(|| {
        let handle = required(handle, "handle")?;
        if out_len.is_null() {
            return Err(Failure::new(FV_ERR_NULL_POINTER, "out_len is NULL"));
        }
        let len = match &handle.inner {
            Inner::Mock(_) => partial_dec_key_wire_len::<MockBackend>(),
            Inner::Bls381(_) => partial_dec_key_wire_len::<Bls381Backend>(),
        };
        out_len.write(len);
        Ok(())
    })
}

/// Encrypt one fixed-point integer (`|value_units| ≤ bound`) for `party`
/// under `round`. Writes exactly the ciphertext length (see
/// [`fv_dmcfe_ciphertext_len`]) into `out`.
///
/// # Safety
/// `handle` must be a live handle; `out` must point to at least `out_len`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fv_dmcfe_encrypt(
    handle: *const FvDmcfe,
    party: u32,
    value_units: i64,
    round: u64,
    out: *mut u8,
    out_len: usize,
) -> i32 {
    guarded(|| {
        let handle = required(handle, "handle")?;
        if out.is_null() {
            return Err(Failure::new(FV_ERR_NULL_POINTER, "out is NULL"));
        }
        let blob = dispatch!(handle, inst => inst.encrypt_bytes(party, value_units, round))?;
        write_blob(&blob, out, out_len)
    })
}

/// Derive `party`'s share of the round's functional decryption key (bound
/// to the all-parties participant set). Writes exactly the key-share length
/// (see [`fv_dmcfe_key_share_len`]) into `out`.
///
/// # Safety
/// `handle` must be a live handle; `out` must point to at least `out_len`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fv_dmcfe_key_share(
    handle: *const FvDmcfe,
    party: u32,
    round: u64,
    out: *mut u8,
    out_len: usize,
) -> i32 {
    guarded(|| {
        let handle = required(handle, "handle")?;
        if out.is_null() {
            return Err(Failure::new(FV_ERR_NULL_POINTER, "out is NULL"));
        }
        let blob = dispatch!(handle, inst => inst.key_share_bytes(party, round))?;
        write_blob(&blob, out, out_len)
    })
}

/// Decrypt the sum of one ciphertext per party.
///
/// `ciphertexts` is the concatenation of all parties' ciphertext blobs (in
/// any order), `key_shares` the concatenation of all parties' key-share
/// blobs; both lengths must be exact multiples covering every party. Any
/// omission, substitution, cross-round blob, or tampered byte fails with
/// `FV_ERR_CRYPTO` — there are no partial aggregates.
///
/// # Safety
/// `handle` must be a live handle; the two input buffers must be readable
/// for their stated lengths; `out_sum_units` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fv_dmcfe_decrypt_sum(
    handle: *const FvDmcfe,
    round: u64,
    ciphertexts: *const u8,
    ciphertexts_len: usize,
    key_shares: *const u8,
    key_shares_len: usize,
    out_sum_units: *mut i64,
) -> i32 {
    guarded(|| {
        let handle = required(handle, "handle")?;
        if ciphertexts.is_null() || key_shares.is_null() || out_sum_units.is_null() {
            return Err(Failure::new(FV_ERR_NULL_POINTER, "buffer argument is NULL"));
        }
        let cts = std::slice::from_raw_parts(ciphertexts, ciphertexts_len);
        let shares = std::slice::from_raw_parts(key_shares, key_shares_len);
        let sum = dispatch!(handle, inst => inst.decrypt_sum(round, cts, shares))?;
        out_sum_units.write(sum);
        Ok(())
    })
}

/// Execute an experiment config into a run directory, exactly like
/// `fedveil run --config CONFIG --out OUT`. A non-negative `seed_override`
/// replaces the config's training seed; pass a negative value to keep it.
///
/// # Safety
/// `config_path` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fv_run_experiment(
    config_path: *const c_char,
    out_dir: *const c_char,
    seed_override: i64,
) -> i32 {
    guarded(|| {
        let config = required_str(config_path, "config_path")?;
        let out = required_str(out_dir, "out_dir")?;
        let args = RunArgs {
            config: PathBuf::from(config),
            out: PathBuf::from(out),
            seed: (seed_override >= 0).then_some(seed_override as u64),
        };
        cmd_run(&args).map_err(|e| {
            let code = match e.category() {
                "config" => FV_ERR_CONFIG,
                "data" => FV_ERR_DATA,
                "crypto" => FV_ERR_CRYPTO,
                _ => FV_ERR_RUN,
            };
            Failure::new(code, e.to_string())
        })
    })
}
