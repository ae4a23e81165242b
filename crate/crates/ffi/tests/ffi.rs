use std::ffi::{c_char, CStr, CString};
use std::net::{SocketAddr, TcpListener};
use std::ptr;
use std::sync::Arc;
use std::time::Duration;

use eft::*;
use eft_core::api::server::{spawn, RunningServer};
use eft_core::api::HttpTransport;
use eft_core::api::clients::Backoff;
use eft_core::clock::SystemClock;
use eft_core::crypto::KeyRole;
use eft_core::fixtures::Fixture;
use eft_core::issuer::{ApproveClaim, CompliancePolicy, IssuerConfig, IssuerService, VendorRegistration};
use eft_core::ledger::LedgerConfig;
use eft_core::merchant::{MerchantConfig, MerchantService, DEFAULT_INVOICE_TTL_SECS};
use eft_core::relay::{RelayConfig, RelayService};

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Take ownership of a library string.
fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { eft_string_free(p) };
    s
}

fn last_code() -> Option<String> {
    let p = eft_last_error_code();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string())
}

fn free_addr() -> SocketAddr {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap()
}

/// Issuer, relay and one merchant on loopback with the system clock.
struct Deployment {
    issuer_url: String,
    issuer: Arc<IssuerService>,
    merchant: Arc<MerchantService>,
    _servers: Vec<RunningServer>,
}

fn deploy(seed: u64) -> Deployment {
    let mut fx = Fixture::new(seed);
    let relay_key = fx.identity(KeyRole::Relay);
    let clock = Arc::new(SystemClock);
    let issuer = Arc::new(
        IssuerService::open(
            IssuerConfig {
                identity: fx.issuer.clone(),
                keyset: fx.keyset.clone(),
                policy: CompliancePolicy::demo(),
                ledger: LedgerConfig::standalone(relay_key.public),
                admin_token: "admin".into(),
                data_dir: None,
                snapshot_every: 0,
            },
            clock.clone(),
        )
        .unwrap(),
    );
    let relay = Arc::new(RelayService::open(RelayConfig::standalone(relay_key, fx.issuer_keys()), clock.clone(), None).unwrap());
    relay.start_ticker(Duration::from_millis(20));
    let issuer_srv = spawn(issuer.clone(), "127.0.0.1:0".parse().unwrap()).unwrap();
    let relay_srv = spawn(relay, "127.0.0.1:0".parse().unwrap()).unwrap();

    let vendor = fx.identity(KeyRole::Vendor);
    let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap().as_secs();
    let certificate = issuer
        .register_vendor(VendorRegistration {
            vendor_id: vendor.public,
            legal_name: "Corner Shop".into(),
            registration_ref: "REG-1".into(),
            tax_category: "food".into(),
            onward_transfer_allowed: None,
            valid_from: now - 60,
            valid_to: now + 86_400,
            kyc_attested: false,
        })
        .unwrap();
    let merchant_addr = free_addr();
    let merchant = Arc::new(
        MerchantService::open(
            MerchantConfig {
                identity: vendor,
                certificate,
                issuer: issuer.keys(),
                issuer_endpoint: issuer_srv.base_url(),
                relay_endpoint: relay_srv.base_url(),
                public_endpoint: format!("http://{merchant_addr}"),
                admin_token: None,
                data_dir: None,
                invoice_ttl_secs: DEFAULT_INVOICE_TTL_SECS,
                backoff: Backoff { base_ms: 50, retries: 8 },
            },
            clock,
            Arc::new(HttpTransport::new()),
        )
        .unwrap(),
    );
    let merchant_srv = spawn(merchant.clone(), merchant_addr).unwrap();
    Deployment { issuer_url: issuer_srv.base_url(), issuer, merchant, _servers: vec![issuer_srv, relay_srv, merchant_srv] }
}

#[test]
fn canonical_encoding_and_digest() {
    let mut out = ptr::null_mut();
    let input = cstr(r#"{ "b": 1, "a": [true, null] }"#);
    assert_eq!(unsafe { eft_canonical_json(input.as_ptr(), &mut out) }, EftStatus::Ok);
    assert_eq!(take(out), r#"{"a":[true,null],"b":1}"#);
    assert_eq!(unsafe { eft_digest(cstr("{}").as_ptr(), &mut out) }, EftStatus::Ok);
    // SHA-256 of "{}".
    assert_eq!(take(out), "RBNvo1WzZ4oRRq0W9-hknpT7T8If536DEMBg9hyq_4o");
}

#[test]
fn argument_errors_are_reported_per_thread() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { eft_canonical_json(ptr::null(), &mut out) }, EftStatus::NullArgument);
    let msg = unsafe { CStr::from_ptr(eft_last_error_message()) }.to_str().unwrap();
    assert!(msg.contains("json is null"));
    assert_eq!(unsafe { eft_canonical_json(cstr("{").as_ptr(), &mut out) }, EftStatus::InvalidArgument);
    assert!(out.is_null());
    let bad_utf8 = [0xffu8, 0];
    assert_eq!(unsafe { eft_digest(bad_utf8.as_ptr().cast(), &mut out) }, EftStatus::InvalidUtf8);
    std::thread::spawn(|| assert!(eft_last_error_message().is_null())).join().unwrap();
    assert_eq!(unsafe { eft_canonical_json(cstr("1").as_ptr(), &mut out) }, EftStatus::Ok);
    take(out);
    assert!(eft_last_error_message().is_null(), "success clears the last error");
    assert_eq!(unsafe { eft_wallet_balance(ptr::null(), &mut out) }, EftStatus::NullArgument);
    unsafe { eft_string_free(ptr::null_mut()) };
    unsafe { eft_wallet_free(ptr::null_mut()) };
    assert!(!eft_version().is_null());
}

#[test]
fn wallet_lifecycle_over_http() {
    let d = deploy(31);
    d.issuer.approve_claim(ApproveClaim { claim_id: "c-1".into(), amount: 10_000 }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = cstr(dir.path().join("w.eft").to_str().unwrap());
    let pass = cstr("pw");
    let mut wallet = ptr::null_mut();
    let status = unsafe {
        eft_wallet_create(store.as_ptr(), pass.as_ptr(), cstr(&d.issuer_url).as_ptr(), cstr("c-1").as_ptr(), &mut wallet)
    };
    assert_eq!(status, EftStatus::Ok, "{:?}", last_code());

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { eft_wallet_request_tokens(wallet, ptr::null(), 2500, &mut out) }, EftStatus::Ok);
    let tokens: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(tokens.as_array().unwrap().len(), 2);
    assert_eq!(unsafe { eft_wallet_request_tokens(wallet, ptr::null(), 50_000, &mut out) }, EftStatus::Rejected);
    assert_eq!(last_code().as_deref(), Some("over-budget"));

    let invoice = d.merchant.create_invoice(2500, None).unwrap();
    let invoice_json = cstr(&serde_json::to_string(&invoice).unwrap());
    assert_eq!(unsafe { eft_wallet_pay(wallet, invoice_json.as_ptr(), &mut out) }, EftStatus::Ok, "{:?}", last_code());
    let outcome: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(outcome["status"], "paid");
    assert_eq!(d.merchant.holdings().len(), 2);

    let mut status_code = 0u16;
    let path = cstr("/v1/balance");
    let st = unsafe { eft_wallet_call(wallet, cstr("GET").as_ptr(), path.as_ptr(), ptr::null(), &mut status_code, &mut out) };
    assert_eq!((st, status_code), (EftStatus::Ok, 200));
    let balance: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!((balance["spendable"].as_u64(), balance["spent"].as_u64()), (Some(0), Some(2500)));
    let st = unsafe {
        eft_wallet_call(wallet, cstr("POST").as_ptr(), cstr("/v1/request").as_ptr(), cstr("nope").as_ptr(), &mut status_code, &mut out)
    };
    assert_eq!((st, status_code), (EftStatus::Ok, 400));
    take(out);

    let backup = cstr(dir.path().join("b.eft").to_str().unwrap());
    assert_eq!(unsafe { eft_wallet_export_backup(wallet, cstr("bk").as_ptr(), backup.as_ptr()) }, EftStatus::Ok);
    assert_eq!(unsafe { eft_wallet_import_backup(wallet, cstr("x").as_ptr(), backup.as_ptr(), &mut out) }, EftStatus::Rejected);
    assert_eq!(last_code().as_deref(), Some("bad-passphrase"));
    unsafe { eft_wallet_free(wallet) };

    let mut reopened = ptr::null_mut();
    assert_eq!(unsafe { eft_wallet_open(store.as_ptr(), pass.as_ptr(), &mut reopened) }, EftStatus::Ok);
    assert_eq!(unsafe { eft_wallet_balance(reopened, &mut out) }, EftStatus::Ok);
    assert!(take(out).contains("\"spent\":2500"));
    assert_eq!(unsafe { eft_wallet_open(store.as_ptr(), cstr("wrong").as_ptr(), &mut wallet) }, EftStatus::Rejected);
    assert_eq!(last_code().as_deref(), Some("bad-passphrase"));
    unsafe { eft_wallet_free(reopened) };
}

#[test]
fn unreachable_issuer_is_unavailable() {
    let addr = free_addr();
    let mut wallet = ptr::null_mut();
    let url = cstr(&format!("http://{addr}"));
    let st = unsafe { eft_wallet_create(ptr::null(), cstr("").as_ptr(), url.as_ptr(), ptr::null(), &mut wallet) };
    assert_eq!(st, EftStatus::Unavailable);
    assert!(wallet.is_null());
    assert_eq!(last_code().as_deref(), Some("unreachable"));
}

#[test]
fn header_is_current_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/eft.h")).unwrap();
    for symbol in ["eft_wallet_create", "eft_wallet_call", "eft_last_error_code", "eft_string_free", "EFT_STATUS_REJECTED"] {
        assert!(header.contains(symbol), "{symbol} missing from header");
    }
    let Ok(cc) = which_cc() else { return };
    let src = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(
        src.path(),
        "#include \"eft.h\"\nint main(void) { EftWallet *w = 0; char *s = 0;\n\
         EftStatus st = eft_wallet_balance(w, &s); eft_string_free(s); eft_wallet_free(w);\n\
         return st == EFT_STATUS_OK ? 0 : (int)st; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(src.path())
        .status()
        .unwrap();
    assert!(status.success(), "header does not compile as C99");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
