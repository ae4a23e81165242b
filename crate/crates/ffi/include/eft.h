#ifndef EFT_H
#define EFT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum EftStatus {
  EFT_STATUS_OK = 0,
  // A required pointer was null.
  EFT_STATUS_NULL_ARGUMENT = 1,
  // A string was not valid UTF-8.
  EFT_STATUS_INVALID_UTF8 = 2,
  // Malformed JSON or an argument out of range.
  EFT_STATUS_INVALID_ARGUMENT = 3,
  // A protocol or business rule refused the operation; see the error code.
  EFT_STATUS_REJECTED = 4,
  // A service or the local store was unavailable; retrying may succeed.
  EFT_STATUS_UNAVAILABLE = 5,
  // The library panicked. The handle involved should be discarded.
  EFT_STATUS_PANIC = 6,
} EftStatus;

// An open wallet.
typedef struct EftWallet EftWallet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, statically allocated.
const char *eft_version(void);

// Message for the last failure on this thread, or null. Valid until the
// next library call on the same thread.
const char *eft_last_error_message(void);

// Machine-readable rejection code (such as `double-spend`) for the last
// failure on this thread, or null when there is none.
const char *eft_last_error_code(void);

// Release a string returned through an `out` parameter. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void eft_string_free(char *s);

// Re-encode a JSON document canonically: sorted keys, no whitespace.
//
// # Safety
// `json` must be a valid string; `out` must be writable.
enum EftStatus eft_canonical_json(const char *json, char **out);

// SHA-256 of the canonical encoding, base64url without padding.
//
// # Safety
// `json` must be a valid string; `out` must be writable.
enum EftStatus eft_digest(const char *json, char **out);

// Create a wallet, fetching keys from the issuer at `issuer_url`.
// A null `path` keeps the wallet in memory; `claim_id` may be null.
//
// # Safety
// String arguments must be valid or null where allowed; `out` must be writable.
enum EftStatus eft_wallet_create(const char *path,
                                 const char *passphrase,
                                 const char *issuer_url,
                                 const char *claim_id,
                                 struct EftWallet **out);

// Open an existing encrypted wallet store.
//
// # Safety
// String arguments must be valid; `out` must be writable.
enum EftStatus eft_wallet_open(const char *path, const char *passphrase, struct EftWallet **out);

// Close a wallet. Null is ignored.
//
// # Safety
// `wallet` must come from [`eft_wallet_create`] or [`eft_wallet_open`] and
// not have been freed.
void eft_wallet_free(struct EftWallet *wallet);

// Balance as JSON.
//
// # Safety
// `wallet` must be a live handle; `out` must be writable.
enum EftStatus eft_wallet_balance(const struct EftWallet *wallet, char **out);

// Obtain tokens worth `amount`; writes the new token ids and
// denominations as JSON. `claim_id` may be null to use the stored claim.
//
// # Safety
// `wallet` must be a live handle; `out` must be writable.
enum EftStatus eft_wallet_request_tokens(const struct EftWallet *wallet,
                                         const char *claim_id,
                                         uint64_t amount,
                                         char **out);

// Pay an invoice given as JSON; writes the payment outcome as JSON.
// Paying the same invoice again returns the earlier outcome.
//
// # Safety
// `wallet` must be a live handle; `invoice_json` valid; `out` writable.
enum EftStatus eft_wallet_pay(const struct EftWallet *wallet, const char *invoice_json, char **out);

// Write an encrypted backup to `path`, which must not exist.
//
// # Safety
// `wallet` must be a live handle; strings must be valid.
enum EftStatus eft_wallet_export_backup(const struct EftWallet *wallet,
                                        const char *passphrase,
                                        const char *path);

// Merge a backup file into the wallet; writes a merge summary as JSON.
//
// # Safety
// `wallet` must be a live handle; strings must be valid; `out` writable.
enum EftStatus eft_wallet_import_backup(const struct EftWallet *wallet,
                                        const char *passphrase,
                                        const char *path,
                                        char **out);

// Dispatch one request to the wallet's local HTTP API without a socket.
// `method` is `GET` or `POST`; `body` may be null. The HTTP status goes to
// `out_status` and the JSON body to `out_body`; a non-2xx status is not a
// library failure.
//
// # Safety
// `wallet` must be a live handle; strings valid; out pointers writable.
enum EftStatus eft_wallet_call(const struct EftWallet *wallet,
                               const char *method,
                               const char *path,
                               const char *body,
                               uint16_t *out_status,
                               char **out_body);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EFT_H */
