/* fedveil C ABI — generated by cbindgen; do not edit by hand. */

#ifndef FEDVEIL_H
#define FEDVEIL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define FV_OK 0

// A required pointer argument was NULL.
#define FV_ERR_NULL_POINTER -1

// A string argument was not valid UTF-8.
#define FV_ERR_INVALID_UTF8 -2

// An argument was out of range (party index, buffer geometry, …).
#define FV_ERR_INVALID_ARGUMENT -3

// The caller-supplied buffer is smaller than the required length.
#define FV_ERR_BUFFER_TOO_SMALL -4

// Configuration parse or validation failure.
#define FV_ERR_CONFIG -5

// Dataset ingestion failure.
#define FV_ERR_DATA -6

// Cryptographic failure (setup, encryption, share combination,
// or an unauthorized/tampered aggregation rejected at decryption).
#define FV_ERR_CRYPTO -7

// Experiment execution failure (I/O, missing artifacts, simulation).
#define FV_ERR_RUN -8

// An internal panic was caught at the boundary.
#define FV_ERR_PANIC -9

// Group backend selector for [`fv_dmcfe_new`].
enum FvBackend
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  // Exponent-tracking test backend: same algebra, no pairings.
  FV_BACKEND_MOCK = 0,
  // BLS12-381 pairing backend.
  FV_BACKEND_BLS381 = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum FvBackend FvBackend;
#else
typedef int32_t FvBackend;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque DMCFE instance; create with [`fv_dmcfe_new`], release with
// [`fv_dmcfe_free`].
typedef struct FvDmcfe FvDmcfe;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string; never NULL.
const char *fv_version(void);

// Message for this thread's most recent failure; empty string if none.
// Valid until the next failing `fv_*` call on the same thread.
const char *fv_last_error_message(void);

// Create a DMCFE instance for `parties` parties (≥ 2).
//
// `seed` drives the trusted key-material bootstrap deterministically.
// `f_bits`/`bound` fix the plaintext window: per-party integers must stay
// within `±bound`, and decrypted sums within `±parties·bound`. Pass the
// protocol defaults `f_bits = 16`, `bound = 1 << 19` to interoperate with
// federation updates. On success writes a handle to `out`; free it with
// [`fv_dmcfe_free`].
//
// # Safety
// `out` must be a valid pointer to writable memory for one pointer.
int32_t fv_dmcfe_new(uint32_t parties,
                     uint64_t seed,
                     FvBackend backend,
                     uint32_t f_bits,
                     uint64_t bound,
                     struct FvDmcfe **out);

// Release a handle created by [`fv_dmcfe_new`]. NULL is a no-op.
//
// # Safety
// `handle` must be NULL or a pointer previously returned by
// [`fv_dmcfe_new`] that has not been freed.
void fv_dmcfe_free(struct FvDmcfe *handle);

// Serialized ciphertext length in bytes for this instance's backend.
//
// # Safety
// `handle` must be a live handle; `out_len` must be writable.
int32_t fv_dmcfe_ciphertext_len(const struct FvDmcfe *handle, size_t *out_len);

// Serialized key-share length in bytes for this instance's backend.
//
// # Safety
// `handle` must be a live handle; `out_len` must be writable.
int32_t fv_dmcfe_key_share_len(const struct FvDmcfe *handle, size_t *out_len);

// Encrypt one fixed-point integer (`|value_units| ≤ bound`) for `party`
// under `round`. Writes exactly the ciphertext length (see
// [`fv_dmcfe_ciphertext_len`]) into `out`.
//
// # Safety
// `handle` must be a live handle; `out` must point to at least `out_len`
// writable bytes.
int32_t fv_dmcfe_encrypt(const struct FvDmcfe *handle,
                         uint32_t party,
                         int64_t value_units,
                         uint64_t round,
                         uint8_t *out,
                         size_t out_len);

// Derive `party`'s share of the round's functional decryption key (bound
// to the all-parties participant set). Writes exactly the key-share length
// (see [`fv_dmcfe_key_share_len`]) into `out`.
//
// # Safety
// `handle` must be a live handle; `out` must point to at least `out_len`
// writable bytes.
int32_t fv_dmcfe_key_share(const struct FvDmcfe *handle,
                           uint32_t party,
                           uint64_t round,
                           uint8_t *out,
                           size_t out_len);

// Decrypt the sum of one ciphertext per party.
//
// `ciphertexts` is the concatenation of all parties' ciphertext blobs (in
// any order), `key_shares` the concatenation of all parties' key-share
// blobs; both lengths must be exact multiples covering every party. Any
// omission, substitution, cross-round blob, or tampered byte fails with
// `FV_ERR_CRYPTO` — there are no partial aggregates.
//
// # Safety
// `handle` must be a live handle; the two input buffers must be readable
// for their stated lengths; `out_sum_units` must be writable.
int32_t fv_dmcfe_decrypt_sum(const struct FvDmcfe *handle,
                             uint64_t round,
                             const uint8_t *ciphertexts,
                             size_t ciphertexts_len,
                             const uint8_t *key_shares,
                             size_t key_shares_len,
                             int64_t *out_sum_units);

// Execute an experiment config into a run directory, exactly like
// `fedveil run --config CONFIG --out OUT`. A non-negative `seed_override`
// replaces the config's training seed; pass a negative value to keep it.
//
// # Safety
// `config_path` and `out_dir` must be NUL-terminated strings.
int32_t fv_run_experiment(const char *config_path, const char *out_dir, int64_t seed_override);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDVEIL_H */
