//! A whole deployment in one process: issuer, a standalone relay, any number
//! of merchants and wallets, all on a manual clock and an in-process
//! transport. Services can be restarted from their data directories.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::api::clients::{Backoff, IssuerClient};
use crate::api::{CaptureTransport, InProcessTransport, Transport};
use crate::clock::{Clock, ManualClock};
use crate::crypto::{IdentityKeyPair, KeyRole};
use crate::issuer::{ApproveClaim, CompliancePolicy, IssuerConfig, IssuerKeys, IssuerService, VendorRegistration};
use crate::ledger::LedgerConfig;
use crate::merchant::{MerchantConfig, MerchantService, DEFAULT_INVOICE_TTL_SECS};
use crate::relay::{RelayConfig, RelayService};
use crate::wallet::vault::KdfParams;
use crate::wallet::{Wallet, WalletConfig};

use super::Fixture;

pub const ISSUER: &str = "issuer.test";
pub const RELAY: &str = "relay.test";
pub const ADMIN_TOKEN: &str = "testbed-admin";
/// 2023-11-14, well inside every test certificate.
pub const START_MS: u64 = 1_700_000_000_000;

pub struct Testbed {
    pub fx: Fixture,
    pub clock: ManualClock,
    pub inner: Arc<InProcessTransport>,
    /// What every client talks through; a capture wrapper when requested.
    pub transport: Arc<dyn Transport>,
    pub capture: Option<Arc<CaptureTransport>>,
    pub issuer: Arc<IssuerService>,
    pub relay: Arc<RelayService>,
    pub policy: CompliancePolicy,
    relay_key: IdentityKeyPair,
    data_dir: Option<PathBuf>,
    next_vendor: u32,
}

impl Testbed {
    pub fn new(seed: u64) -> Self {
        Self::build(seed, None, false)
    }

    /// Persistent services under `dir`, optionally recording all traffic.
    pub fn build(seed: u64, dir: Option<&Path>, capture: bool) -> Self {
        let mut fx = Fixture::new(seed);
        let clock = ManualClock::new(START_MS);
        let inner = InProcessTransport::new();
        let (transport, capture): (Arc<dyn Transport>, _) = if capture {
            let c = CaptureTransport::new(inner.clone());
            (c.clone(), Some(c))
        } else {
            (inner.clone(), None)
        };
        let relay_key = fx.identity(KeyRole::Relay);
        let data_dir = dir.map(Path::to_path_buf);
        if let Some(d) = &data_dir {
            for sub in ["issuer", "relay"] {
                std::fs::create_dir_all(d.join(sub)).expect("testbed data dir");
            }
        }
        let policy = CompliancePolicy::demo();
        let issuer = Arc::new(open_issuer(&fx, &relay_key, &policy, &clock, data_dir.as_deref()));
        let relay = Arc::new(open_relay(&fx, &relay_key, &clock, data_dir.as_deref()));
        inner.register(ISSUER, issuer.clone());
        inner.register(RELAY, relay.clone());
        Self { fx, clock, inner, transport, capture, issuer, relay, policy, relay_key, data_dir, next_vendor: 0 }
    }

    pub fn keys(&self) -> IssuerKeys {
        self.issuer.keys()
    }

    pub fn issuer_admin(&self) -> IssuerClient {
        IssuerClient::new(self.transport.clone(), ISSUER).admin(ADMIN_TOKEN)
    }

    pub fn approve(&self, claim_id: &str, amount: u64) {
        self.issuer_admin()
            .approve_claim(&ApproveClaim { claim_id: claim_id.into(), amount })
            .expect("claim approval");
    }

    /// An in-memory wallet with a deterministic RNG.
    pub fn wallet(&mut self, claim_id: &str) -> Wallet {
        let mut config = WalletConfig::new(None, "");
        config.seed = Some(self.fx_seed());
        self.wallet_with(config, claim_id)
    }

    pub fn wallet_with(&self, mut config: WalletConfig, claim_id: &str) -> Wallet {
        config.kdf = KdfParams::insecure_fast();
        Wallet::create(config, Arc::new(self.clock.clone()), self.transport.clone(), ISSUER, Some(claim_id.into()))
            .expect("wallet creation")
    }

    fn fx_seed(&mut self) -> u64 {
        use rand::RngCore;
        self.fx.rng.next_u64()
    }

    /// Register a vendor with the issuer and bring up its merchant service.
    pub fn merchant(&mut self, category: &str, onward: bool) -> Arc<MerchantService> {
        let identity = self.fx.identity(KeyRole::Vendor);
        self.next_vendor += 1;
        let name = format!("merchant-{}.test", self.next_vendor);
        self.merchant_for(identity, &name, category, onward)
    }

    pub fn merchant_for(
        &self,
        identity: IdentityKeyPair,
        endpoint: &str,
        category: &str,
        onward: bool,
    ) -> Arc<MerchantService> {
        let now = self.clock.now_secs();
        let certificate = self
            .issuer_admin()
            .register_vendor(&VendorRegistration {
                vendor_id: identity.public,
                legal_name: format!("Vendor at {endpoint}"),
                registration_ref: format!("REG-{endpoint}"),
                tax_category: category.into(),
                onward_transfer_allowed: Some(onward),
                valid_from: now - 86_400,
                valid_to: now + 365 * 86_400,
                kyc_attested: true,
            })
            .expect("vendor registration");
        let data_dir = self.data_dir.as_ref().map(|d| d.join(endpoint));
        if let Some(d) = &data_dir {
            std::fs::create_dir_all(d).expect("merchant data dir");
        }
        let config = MerchantConfig {
            identity,
            certificate,
            issuer: self.keys(),
            issuer_endpoint: ISSUER.into(),
            relay_endpoint: RELAY.into(),
            public_endpoint: endpoint.into(),
            admin_token: None,
            data_dir,
            invoice_ttl_secs: DEFAULT_INVOICE_TTL_SECS,
            backoff: Backoff::default(),
        };
        self.start_merchant(config)
    }

    pub fn start_merchant(&self, config: MerchantConfig) -> Arc<MerchantService> {
        let endpoint = config.public_endpoint.clone();
        let merchant = Arc::new(
            MerchantService::open(config, Arc::new(self.clock.clone()), self.transport.clone()).expect("merchant"),
        );
        self.inner.register(&endpoint, merchant.clone());
        merchant
    }

    /// Drop the issuer and reopen it from disk.
    pub fn restart_issuer(&mut self) {
        let dir = self.data_dir.as_deref();
        assert!(dir.is_some(), "restart needs a data dir");
        self.issuer = Arc::new(open_issuer(&self.fx, &self.relay_key, &self.policy, &self.clock, dir));
        self.inner.register(ISSUER, self.issuer.clone());
    }

    /// Drop the relay and reopen it from disk.
    pub fn restart_relay(&mut self) {
        let dir = self.data_dir.as_deref();
        assert!(dir.is_some(), "restart needs a data dir");
        self.relay = Arc::new(open_relay(&self.fx, &self.relay_key, &self.clock, dir));
        self.inner.register(RELAY, self.relay.clone());
    }

    pub fn ledger(&self) -> LedgerConfig {
        LedgerConfig::standalone(self.relay_key.public)
    }
}

fn open_issuer(
    fx: &Fixture,
    relay_key: &IdentityKeyPair,
    policy: &CompliancePolicy,
    clock: &ManualClock,
    dir: Option<&Path>,
) -> IssuerService {
    let config = IssuerConfig {
        identity: fx.issuer.clone(),
        keyset: fx.keyset.clone(),
        policy: policy.clone(),
        ledger: LedgerConfig::standalone(relay_key.public),
        admin_token: ADMIN_TOKEN.into(),
        data_dir: dir.map(|d| d.join("issuer")),
        snapshot_every: 16,
    };
    IssuerService::open(config, Arc::new(clock.clone())).expect("issuer")
}

fn open_relay(fx: &Fixture, relay_key: &IdentityKeyPair, clock: &ManualClock, dir: Option<&Path>) -> RelayService {
    let mut config = RelayConfig::standalone(relay_key.clone(), fx.issuer_keys());
    config.data_dir = dir.map(|d| d.join("relay"));
    RelayService::open(config, Arc::new(clock.clone()), None).expect("relay")
}
