//! Exercises the C ABI exactly as a foreign caller would: raw pointers,
//! caller-allocated buffers, status codes, and the thread-local error
//! message.

use std::ffi::CStr;
use std::ptr;

use fedveil_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(fv_last_error_message()) }.to_string_lossy().into_owned()
}

struct Handle(*mut FvDmcfe);

impl Handle {
    fn new(parties: u32, seed: u64, backend: FvBackend) -> Self {
        let mut raw = ptr::null_mut();
        let rc = unsafe { fv_dmcfe_new(parties, seed, backend, 16, 1 << 19, &mut raw) };
        assert_eq!(rc, FV_OK, "fv_dmcfe_new: {}", last_error());
        assert!(!raw.is_null());
        Handle(raw)
    }

    fn ct_len(&self) -> usize {
        let mut len = 0usize;
        assert_eq!(unsafe { fv_dmcfe_ciphertext_len(self.0, &mut len) }, FV_OK);
        len
    }

    fn share_len(&self) -> usize {
        let mut len = 0usize;
        assert_eq!(unsafe { fv_dmcfe_key_share_len(self.0, &mut len) }, FV_OK);
        len
    }

    fn encrypt(&self, party: u32, units: i64, round: u64) -> Vec<u8> {
        let mut buf = vec![0u8; self.ct_len()];
        let rc =
            unsafe { fv_dmcfe_encrypt(self.0, party, units, round, buf.as_mut_ptr(), buf.len()) };
        assert_eq!(rc, FV_OK, "fv_dmcfe_encrypt: {}", last_error());
        buf
    }

    fn key_share(&self, party: u32, round: u64) -> Vec<u8> {
        let mut buf = vec![0u8; self.share_len()];
        let rc =
            unsafe { fv_dmcfe_key_share(self.0, party, round, buf.as_mut_ptr(), buf.len()) };
        assert_eq!(rc, FV_OK, "fv_dmcfe_key_share: {}", last_error());
        buf
    }

    fn decrypt_sum(&self, round: u64, cts: &[u8], shares: &[u8]) -> Result<i64, i32> {
        let mut sum = 0i64;
        let rc = unsafe {
            fv_dmcfe_decrypt_sum(
                self.0,
                round,
                cts.as_ptr(),
                cts.len(),
                shares.as_ptr(),
                shares.len(),
                &mut sum,
            )
        };
        if rc == FV_OK {
            Ok(sum)
        } else {
            Err(rc)
        }
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { fv_dmcfe_free(self.0) };
    }
}

fn concat(blobs: &[Vec<u8>]) -> Vec<u8> {
    blobs.iter().flatten().copied().collect()
}

#[test]
fn version_is_a_nonempty_c_string() {
    let version = unsafe { CStr::from_ptr(fv_version()) }.to_str().unwrap();
    assert!(!version.is_empty());
    assert!(version.chars().next().unwrap().is_ascii_digit());
}

#[test]
fn mock_backend_round_trips_a_sum() {
    let handle = Handle::new(4, 99, FvBackend::Mock);
    let values = [1500i64, -7, 0, 42_000];
    let round = 12;
    let cts = concat(&values
        .iter()
        .enumerate()
        .map(|(i, &v)| handle.encrypt(i as u32, v, round))
        .collect::<Vec<_>>());
    let shares =
        concat(&(0..4).map(|i| handle.key_share(i, round)).collect::<Vec<_>>());
    let sum = handle.decrypt_sum(round, &cts, &shares).unwrap();
    assert_eq!(sum, values.iter().sum::<i64>());
}

#[test]
fn bls381_backend_round_trips_a_sum() {
    let handle = Handle::new(2, 7, FvBackend::Bls381);
    let round = 3;
    let cts = concat(&[handle.encrypt(0, 250, round), handle.encrypt(1, -75, round)]);
    let shares = concat(&[handle.key_share(0, round), handle.key_share(1, round)]);
    assert_eq!(handle.decrypt_sum(round, &cts, &shares).unwrap(), 175);
}

#[test]
fn cross_round_material_is_rejected() {
    let handle = Handle::new(3, 5, FvBackend::Mock);
    let good: Vec<_> = (0..3).map(|i| handle.encrypt(i, 10 + i as i64, 1)).collect();
    let shares = concat(&(0..3).map(|i| handle.key_share(i, 1)).collect::<Vec<_>>());

    // One ciphertext from a different round.
    let mut mixed = good.clone();
    mixed[1] = handle.encrypt(1, 11, 2);
    let err = handle.decrypt_sum(1, &concat(&mixed), &shares).unwrap_err();
    assert_eq!(err, FV_ERR_CRYPTO);
    assert!(last_error().contains("no aggregate"), "{}", last_error());

    // A share set mixing two rounds never cancels its masks.
    let mut mixed_shares: Vec<_> = (0..3).map(|i| handle.key_share(i, 1)).collect();
    mixed_shares[2] = handle.key_share(2, 4);
    let err = handle.decrypt_sum(1, &concat(&good), &concat(&mixed_shares)).unwrap_err();
    assert_eq!(err, FV_ERR_CRYPTO);

    // The untampered tuple still decrypts.
    assert_eq!(handle.decrypt_sum(1, &concat(&good), &shares).unwrap(), 33);
}

#[test]
fn buffer_and_argument_errors_are_distinguished() {
    let handle = Handle::new(2, 1, FvBackend::Mock);

    let mut short = vec![0u8; handle.ct_len() - 1];
    let rc = unsafe {
        fv_dmcfe_encrypt(handle.0, 0, 5, 0, short.as_mut_ptr(), short.len())
    };
    assert_eq!(rc, FV_ERR_BUFFER_TOO_SMALL);

    let mut buf = vec![0u8; handle.ct_len()];
    let rc = unsafe { fv_dmcfe_encrypt(handle.0, 7, 5, 0, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(rc, FV_ERR_INVALID_ARGUMENT);
    assert!(last_error().contains("party 7"), "{}", last_error());

    // Out-of-bound plaintext is a cryptographic precondition violation.
    let rc = unsafe {
        fv_dmcfe_encrypt(handle.0, 0, (1 << 19) + 1, 0, buf.as_mut_ptr(), buf.len())
    };
    assert_eq!(rc, FV_ERR_CRYPTO);

    // Misaligned aggregate buffers.
    let cts = concat(&[handle.encrypt(0, 1, 0), handle.encrypt(1, 2, 0)]);
    let shares = concat(&[handle.key_share(0, 0), handle.key_share(1, 0)]);
    assert_eq!(handle.decrypt_sum(0, &cts[1..], &shares).unwrap_err(), FV_ERR_INVALID_ARGUMENT);
    assert_eq!(handle.decrypt_sum(0, &cts, &shares[..shares.len() - 1]).unwrap_err(),
        FV_ERR_INVALID_ARGUMENT);

    // Null pointers.
    let rc = unsafe { fv_dmcfe_encrypt(ptr::null(), 0, 5, 0, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(rc, FV_ERR_NULL_POINTER);
    let rc = unsafe { fv_dmcfe_new(2, 0, FvBackend::Mock, 16, 1 << 19, ptr::null_mut()) };
    assert_eq!(rc, FV_ERR_NULL_POINTER);
    unsafe { fv_dmcfe_free(ptr::null_mut()) };
}

#[test]
fn setup_below_two_parties_fails_closed() {
    let mut raw = ptr::null_mut();
    let rc = unsafe { fv_dmcfe_new(1, 0, FvBackend::Mock, 16, 1 << 19, &mut raw) };
    assert_eq!(rc, FV_ERR_CRYPTO);
    assert!(raw.is_null());
}

#[test]
fn run_experiment_produces_a_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.toml");
    std::fs::write(
        &config_path,
        r#"
backend = "mock"

[dataset]
source = "blobs"
classes = 3
samples_per_class = 40
rows = 3
cols = 3
seed = 2

[federation]
clients = 3
rounds = 3
kappa = 8
batch_size = 16
unlearn_start_round = 2
unlearn_window = 1
unlearning_clients = 1

[federation.forget]
mode = "class-wise"
gamma_c = 0.34
classes = [0]
seed = 5

[federation.architecture]
input_dim = 9
hidden = [6]
heads = [3]
"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let config_c = std::ffi::CString::new(config_path.to_str().unwrap()).unwrap();
    let out_c = std::ffi::CString::new(out.to_str().unwrap()).unwrap();
    let rc = unsafe { fv_run_experiment(config_c.as_ptr(), out_c.as_ptr(), 31) };
    assert_eq!(rc, FV_OK, "fv_run_experiment: {}", last_error());
    assert!(out.join("rounds.jsonl").exists());
    assert!(out.join("metrics.json").exists());
    assert!(out.join("checkpoints/final.bin").exists());

    // Missing config maps to the config category.
    let missing = std::ffi::CString::new(dir.path().join("nope.toml").to_str().unwrap()).unwrap();
    let rc = unsafe { fv_run_experiment(missing.as_ptr(), out_c.as_ptr(), -1) };
    assert_eq!(rc, FV_ERR_CONFIG);
    let rc = unsafe { fv_run_experiment(ptr::null(), out_c.as_ptr(), -1) };
    assert_eq!(rc, FV_ERR_NULL_POINTER);
}

#[test]
fn generated_header_declares_the_full_surface() {
    let header = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/fedveil.h"),
    )
    .expect("build.rs generates include/fedveil.h");
    for symbol in [
        "FEDVEIL_H",
        "fv_version",
        "fv_last_error_message",
        "fv_dmcfe_new",
        "fv_dmcfe_free",
        "fv_dmcfe_ciphertext_len",
        "fv_dmcfe_key_share_len",
        "fv_dmcfe_encrypt",
        "fv_dmcfe_key_share",
        "fv_dmcfe_decrypt_sum",
        "fv_run_experiment",
        "FV_OK",
        "FV_ERR_CRYPTO",
        "FvDmcfe",
        "FvBackend",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
    // The handle stays opaque: declared, never defined.
    assert!(!header.contains("struct FvDmcfe {"));
}
