//! C ABI over the wallet and the canonical encoding.
//!
//! Conventions:
//! - Every fallible function returns an [`EftStatus`]; details of the last
//!   failure on the calling thread are available from
//!   [`eft_last_error_message`] and [`eft_last_error_code`].
//! - Strings are NUL-terminated UTF-8. Strings handed out through `out`
//!   parameters are owned by the caller and released with [`eft_string_free`].
//! - Handles are opaque; release them with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use eft_core::api::{ApiRequest, Handler, HttpTransport, Method};
use eft_core::canonical::{to_canonical_string, Digest};
use eft_core::clock::SystemClock;
use eft_core::merchant::Invoice;
use eft_core::wallet::{Wallet, WalletConfig, WalletError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EftStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// A string was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Malformed JSON or an argument out of range.
    InvalidArgument = 3,
    /// A protocol or business rule refused the operation; see the error code.
    Rejected = 4,
    /// A service or the local store was unavailable; retrying may succeed.
    Unavailable = 5,
    /// The library panicked. The handle involved should be discarded.
    Panic = 6,
}

/// An open wallet.
pub struct EftWallet {
    inner: Wallet,
}

struct Failure {
    status: EftStatus,
    code: Option<String>,
    message: String,
}

impl Failure {
    fn new(status: EftStatus, message: impl Into<String>) -> Self {
        Self { status, code: None, message: message.into() }
    }
}

impl From<WalletError> for Failure {
    fn from(e: WalletError) -> Self {
        let status = if e.status() == 503 { EftStatus::Unavailable } else { EftStatus::Rejected };
        Self { status, code: Some(e.code().to_string()), message: e.to_string() }
    }
}

#[derive(Default)]
struct LastError {
    code: Option<CString>,
    message: Option<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<LastError> = RefCell::new(LastError::default());
}

fn c_string(text: String) -> CString {
    CString::new(text.replace('\0', "")).expect("NULs removed")
}

fn record(failure: &Failure) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = LastError {
            code: failure.code.clone().map(c_string),
            message: Some(c_string(failure.message.clone())),
        };
    });
}

/// Run `body`, translating failures and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EftStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = LastError::default());
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EftStatus::Ok,
        Ok(Err(failure)) => {
            record(&failure);
            failure.status
        }
        Err(_) => {
            record(&Failure::new(EftStatus::Panic, "internal panic"));
            EftStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::new(EftStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure::new(EftStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn optional_str<'a>(ptr: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        required_str(ptr, name).map(Some)
    }
}

unsafe fn wallet_ref<'a>(wallet: *const EftWallet) -> Result<&'a Wallet, Failure> {
    wallet.as_ref().map(|w| &w.inner).ok_or_else(|| Failure::new(EftStatus::NullArgument, "wallet is null"))
}

unsafe fn put_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(EftStatus::NullArgument, "out is null"));
    }
    *out = c_string(text).into_raw();
    Ok(())
}

unsafe fn put_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> Result<(), Failure> {
    put_string(out, to_canonical_string(value))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::new(EftStatus::InvalidArgument, format!("{name}: {e}")))
}

fn config(path: Option<&str>, passphrase: &str) -> WalletConfig {
    WalletConfig::new(path.map(PathBuf::from), passphrase)
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn eft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn eft_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().message.as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Machine-readable rejection code (such as `double-spend`) for the last
/// failure on this thread, or null when there is none.
#[no_mangle]
pub extern "C" fn eft_last_error_code() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().code.as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned through an `out` parameter. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn eft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Re-encode a JSON document canonically: sorted keys, no whitespace.
///
/// # Safety
/// `json` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eft_canonical_json(json: *const c_char, out: *mut *mut c_char) -> EftStatus {
    guard(|| {
        let value: serde_json::Value = parse_json(required_str(json, "json")?, "json")?;
        put_json(out, &value)
    })
}

/// SHA-256 of the canonical encoding, base64url without padding.
///
/// # Safety
/// `json` must be a valid string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eft_digest(json: *const c_char, out: *mut *mut c_char) -> EftStatus {
    guard(|| {
        let value: serde_json::Value = parse_json(required_str(json, "json")?, "json")?;
        put_string(out, Digest::of(&value).to_b64())
    })
}

/// Create a wallet, fetching keys from the issuer at `issuer_url`.
/// A null `path` keeps the wallet in memory; `claim_id` may be null.
///
/// # Safety
/// String arguments must be valid or null where allowed; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_create(
    path: *const c_char,
    passphrase: *const c_char,
    issuer_url: *const c_char,
    claim_id: *const c_char,
    out: *mut *mut EftWallet,
) -> EftStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(EftStatus::NullArgument, "out is null"));
        }
        let config = config(optional_str(path, "path")?, required_str(passphrase, "passphrase")?);
        let issuer = required_str(issuer_url, "issuer_url")?;
        let claim = optional_str(claim_id, "claim_id")?.map(str::to_string);
        let inner = Wallet::create(config, Arc::new(SystemClock), Arc::new(HttpTransport::new()), issuer, claim)?;
        *out = Box::into_raw(Box::new(EftWallet { inner }));
        Ok(())
    })
}

/// Open an existing encrypted wallet store.
///
/// # Safety
/// String arguments must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_open(
    path: *const c_char,
    passphrase: *const c_char,
    out: *mut *mut EftWallet,
) -> EftStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::new(EftStatus::NullArgument, "out is null"));
        }
        let config = config(Some(required_str(path, "path")?), required_str(passphrase, "passphrase")?);
        let inner = Wallet::open(config, Arc::new(SystemClock), Arc::new(HttpTransport::new()))?;
        *out = Box::into_raw(Box::new(EftWallet { inner }));
        Ok(())
    })
}

/// Close a wallet. Null is ignored.
///
/// # Safety
/// `wallet` must come from [`eft_wallet_create`] or [`eft_wallet_open`] and
/// not have been freed.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_free(wallet: *mut EftWallet) {
    if !wallet.is_null() {
        drop(Box::from_raw(wallet));
    }
}

/// Balance as JSON.
///
/// # Safety
/// `wallet` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_balance(wallet: *const EftWallet, out: *mut *mut c_char) -> EftStatus {
    guard(|| put_json(out, &wallet_ref(wallet)?.balance()))
}

/// Obtain tokens worth `amount`; writes the new token ids and
/// denominations as JSON. `claim_id` may be null to use the stored claim.
///
/// # Safety
/// `wallet` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_request_tokens(
    wallet: *const EftWallet,
    claim_id: *const c_char,
    amount: u64,
    out: *mut *mut c_char,
) -> EftStatus {
    guard(|| {
        let w = wallet_ref(wallet)?;
        let tokens = w.request_tokens(optional_str(claim_id, "claim_id")?, amount)?;
        let summary: Vec<_> = tokens
            .iter()
            .map(|t| serde_json::json!({ "token_pub": t.token_pub, "denomination": t.denomination }))
            .collect();
        put_json(out, &summary)
    })
}

/// Pay an invoice given as JSON; writes the payment outcome as JSON.
/// Paying the same invoice again returns the earlier outcome.
///
/// # Safety
/// `wallet` must be a live handle; `invoice_json` valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_pay(
    wallet: *const EftWallet,
    invoice_json: *const c_char,
    out: *mut *mut c_char,
) -> EftStatus {
    guard(|| {
        let w = wallet_ref(wallet)?;
        let invoice: Invoice = parse_json(required_str(invoice_json, "invoice_json")?, "invoice")?;
        put_json(out, &w.pay(&invoice)?)
    })
}

/// Write an encrypted backup to `path`, which must not exist.
///
/// # Safety
/// `wallet` must be a live handle; strings must be valid.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_export_backup(
    wallet: *const EftWallet,
    passphrase: *const c_char,
    path: *const c_char,
) -> EftStatus {
    guard(|| {
        let w = wallet_ref(wallet)?;
        let blob = w.export_backup(required_str(passphrase, "passphrase")?)?;
        let path = required_str(path, "path")?;
        std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .and_then(|mut f| std::io::Write::write_all(&mut f, &blob))
            .map_err(|e| Failure::new(EftStatus::Unavailable, format!("{path}: {e}")))
    })
}

/// Merge a backup file into the wallet; writes a merge summary as JSON.
///
/// # Safety
/// `wallet` must be a live handle; strings must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_import_backup(
    wallet: *const EftWallet,
    passphrase: *const c_char,
    path: *const c_char,
    out: *mut *mut c_char,
) -> EftStatus {
    guard(|| {
        let w = wallet_ref(wallet)?;
        let path = required_str(path, "path")?;
        let blob = std::fs::read(path).map_err(|e| Failure::new(EftStatus::Unavailable, format!("{path}: {e}")))?;
        put_json(out, &w.import_backup(&blob, required_str(passphrase, "passphrase")?)?)
    })
}

/// Dispatch one request to the wallet's local HTTP API without a socket.
/// `method` is `GET` or `POST`; `body` may be null. The HTTP status goes to
/// `out_status` and the JSON body to `out_body`; a non-2xx status is not a
/// library failure.
///
/// # Safety
/// `wallet` must be a live handle; strings valid; out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn eft_wallet_call(
    wallet: *const EftWallet,
    method: *const c_char,
    path: *const c_char,
    body: *const c_char,
    out_status: *mut u16,
    out_body: *mut *mut c_char,
) -> EftStatus {
    guard(|| {
        let w = wallet_ref(wallet)?;
        let method = match required_str(method, "method")? {
            "GET" => Method::Get,
            "POST" => Method::Post,
            other => return Err(Failure::new(EftStatus::InvalidArgument, format!("unsupported method {other}"))),
        };
        if out_status.is_null() {
            return Err(Failure::new(EftStatus::NullArgument, "out_status is null"));
        }
        let body = optional_str(body, "body")?.unwrap_or_default().as_bytes().to_vec();
        let request = ApiRequest { method, path: required_str(path, "path")?.to_string(), body, bearer: None };
        let response = w.handle(request);
        let text = String::from_utf8(response.body)
            .map_err(|_| Failure::new(EftStatus::InvalidUtf8, "response body is not UTF-8"))?;
        put_string(out_body, text)?;
        *out_status = response.status;
        Ok(())
    })
}
