//! Bearer wallet for claimants.
//!
//! Generates one keypair per token, obtains blind accreditations against an
//! approved claim, pays invoices with exact token subsets and keeps the
//! whole store encrypted at rest. The issuer only ever sees blinded values;
//! relays and vendors only see a token once it is spent.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::api::clients::{Backoff, IssuerClient, MerchantClient, RelayClient};
use crate::api::{ApiError, ApiRequest, ApiResponse, Handler, Method, Rejection, Transport};
use crate::canonical::{from_canonical, to_canonical, Digest};
use crate::clock::SharedClock;
use crate::crypto::{blind, unblind, IdentityKeyPair, KeyRole, PublicKey};
use crate::issuer::{AccreditationRequest, IssuerKeys};
use crate::merchant::{Invoice, InvoiceStatus, PaymentBundle};
use crate::relay::ProofStatus;
use crate::storage::write_bytes_atomic;
use crate::token::{
    accreditation_message, build_transfer, verify_pop, ProofOfProvenance, Token, TokenEvidence, TokenSecret,
    TransferSource, TransferSubmission,
};

pub mod select;
pub mod vault;

pub use select::Nearest;
use vault::{open_with_passphrase, KdfParams, SealingKey, VaultError};

/// Ordered: a token only ever moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenState {
    PendingAccreditation,
    Spendable,
    Spent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpendNote {
    pub invoice_id: String,
    pub record: Digest,
    /// The relay already held a different transfer of this token.
    #[serde(default)]
    pub conflict: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeldToken {
    pub secret: TokenSecret,
    pub denomination: u64,
    #[serde(default)]
    pub token: Option<Token>,
    pub state: TokenState,
    /// Set when the issuer's response failed verification.
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spend: Option<SpendNote>,
}

impl HeldToken {
    fn usable(&self) -> bool {
        self.state == TokenState::Spendable && self.token.is_some() && !self.flagged
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayItem {
    pub submission: TransferSubmission,
    #[serde(default)]
    pub accepted: bool,
    #[serde(default)]
    pub proof: Option<ProofOfProvenance>,
}

/// Resumable state of one invoice payment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentProgress {
    pub invoice: Invoice,
    pub items: Vec<PayItem>,
}

impl PaymentProgress {
    fn covered(&self) -> u64 {
        self.items.iter().map(|i| i.submission.token.denomination).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentOutcome {
    pub invoice_id: String,
    pub amount: u64,
    pub token_ids: Vec<PublicKey>,
    pub status: InvoiceStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Balance {
    pub spendable: u64,
    pub spent: u64,
    pub pending: u64,
    /// Spendable value tied up in unfinished payments.
    pub reserved: u64,
    pub spendable_by_denomination: BTreeMap<u64, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MergeSummary {
    pub added: usize,
    pub advanced: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WalletStore {
    pub tokens: BTreeMap<PublicKey, HeldToken>,
    #[serde(default)]
    pub claim_id: Option<String>,
    #[serde(default)]
    pub issuer_endpoint: Option<String>,
    #[serde(default)]
    pub issuer: Option<IssuerKeys>,
    #[serde(default)]
    pub invoices: BTreeMap<String, Invoice>,
    #[serde(default)]
    pub payments: BTreeMap<String, PaymentProgress>,
    #[serde(default)]
    pub completed: BTreeMap<String, PaymentOutcome>,
}

impl WalletStore {
    fn reserved(&self, token: &PublicKey) -> bool {
        self.payments.values().any(|p| p.items.iter().any(|i| i.submission.token.token_pub == *token))
    }

    pub fn balance(&self) -> Balance {
        let mut b = Balance::default();
        for (id, t) in &self.tokens {
            match t.state {
                TokenState::PendingAccreditation => b.pending += t.denomination,
                TokenState::Spent => b.spent += t.denomination,
                TokenState::Spendable if t.usable() => {
                    b.spendable += t.denomination;
                    *b.spendable_by_denomination.entry(t.denomination).or_default() += 1;
                    if self.reserved(id) {
                        b.reserved += t.denomination;
                    }
                }
                TokenState::Spendable => {}
            }
        }
        b
    }

    /// Merge by token key. States only move forward, so a restored backup
    /// never revives a spent token.
    pub fn merge(&mut self, other: WalletStore) -> MergeSummary {
        let mut summary = MergeSummary::default();
        for (id, theirs) in other.tokens {
            match self.tokens.get_mut(&id) {
                None => {
                    self.tokens.insert(id, theirs);
                    summary.added += 1;
                }
                Some(mine) if theirs.state > mine.state => {
                    *mine = theirs;
                    summary.advanced += 1;
                }
                Some(mine) => {
                    if mine.token.is_none() && theirs.token.is_some() {
                        mine.token = theirs.token;
                    }
                }
            }
        }
        if self.claim_id.is_none() {
            self.claim_id = other.claim_id;
        }
        if self.issuer_endpoint.is_none() {
            self.issuer_endpoint = other.issuer_endpoint;
        }
        if self.issuer.is_none() {
            self.issuer = other.issuer;
        }
        for (k, v) in other.invoices {
            self.invoices.entry(k).or_insert(v);
        }
        for (k, v) in other.completed {
            self.completed.entry(k).or_insert(v);
        }
        for (k, v) in other.payments {
            if !self.completed.contains_key(&k) {
                self.payments.entry(k).or_insert(v);
            }
        }
        summary
    }
}

#[derive(Debug, Clone)]
pub struct WalletConfig {
    /// Encrypted store location; `None` keeps everything in memory.
    pub path: Option<PathBuf>,
    pub passphrase: String,
    pub kdf: KdfParams,
    pub backoff: Backoff,
    /// Fixed RNG seed for reproducible tests.
    pub seed: Option<u64>,
}

impl WalletConfig {
    pub fn new(path: Option<PathBuf>, passphrase: impl Into<String>) -> Self {
        Self { path, passphrase: passphrase.into(), kdf: KdfParams::default(), backoff: Backoff::default(), seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WalletError {
    #[error("amount must be positive")]
    InvalidAmount,
    #[error("{amount} is not expressible in the denomination schedule")]
    NotExpressible { amount: u64 },
    #[error("holdings cannot pay exactly {amount}")]
    CannotCompose { amount: u64, nearest: Nearest },
    #[error("no claim id configured")]
    NoClaim,
    #[error("wallet has no issuer keys")]
    NotInitialized,
    #[error("a wallet already exists at {0}")]
    AlreadyExists(String),
    #[error("issuer: {0}")]
    Issuer(Rejection),
    #[error("{count} accreditations failed verification")]
    BadAccreditation { count: usize },
    #[error("{0}")]
    Invoice(Rejection),
    #[error("unknown invoice {0}")]
    UnknownInvoice(String),
    #[error("relay does not serve this wallet's ledger")]
    WrongRelay,
    #[error("token {} was already spent elsewhere", .token.to_b64())]
    DoubleSpend { token: PublicKey },
    #[error("relay: {0}")]
    Relay(Rejection),
    #[error("relay returned an invalid proof")]
    BadProof,
    #[error("transfers are not finalized yet; retry to resume")]
    ProofTimeout,
    #[error("merchant: {0}")]
    Merchant(Rejection),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error(transparent)]
    Vault(#[from] VaultError),
    #[error("storage: {0}")]
    Storage(String),
}

impl WalletError {
    pub fn code(&self) -> &str {
        match self {
            WalletError::InvalidAmount => "invalid-amount",
            WalletError::NotExpressible { .. } => "not-expressible",
            WalletError::CannotCompose { .. } => "cannot-compose",
            WalletError::NoClaim => "no-claim",
            WalletError::NotInitialized => "not-initialized",
            WalletError::AlreadyExists(_) => "already-exists",
            WalletError::Issuer(r) | WalletError::Invoice(r) | WalletError::Relay(r) | WalletError::Merchant(r) => {
                &r.code
            }
            WalletError::BadAccreditation { .. } => "bad-accreditation",
            WalletError::UnknownInvoice(_) => "unknown-invoice",
            WalletError::WrongRelay => "wrong-relay",
            WalletError::DoubleSpend { .. } => "double-spend",
            WalletError::BadProof => "bad-proof",
            WalletError::ProofTimeout => "proof-timeout",
            WalletError::Unreachable(_) => "unreachable",
            WalletError::Vault(VaultError::BadPassphrase) => "bad-passphrase",
            WalletError::Vault(VaultError::Malformed(_)) => "malformed-backup",
            WalletError::Storage(_) => "storage-failure",
        }
    }

    pub fn rejection(&self) -> Rejection {
        let base = Rejection::new(self.code(), self.to_string());
        match self {
            WalletError::Issuer(r) | WalletError::Invoice(r) | WalletError::Relay(r) | WalletError::Merchant(r) => {
                Rejection { message: self.to_string(), ..r.clone() }
            }
            WalletError::CannotCompose { nearest, .. } => base.with_details(nearest),
            WalletError::DoubleSpend { token } => base.with_details(&serde_json::json!({ "token": token })),
            _ => base,
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            WalletError::UnknownInvoice(_) => 404,
            WalletError::Unreachable(_) | WalletError::Storage(_) => 503,
            _ => 409,
        }
    }
}

fn unreachable_or(e: ApiError, wrap: fn(Rejection) -> WalletError) -> WalletError {
    match e {
        ApiError::Rejected { rejection, .. } => wrap(rejection),
        other => WalletError::Unreachable(other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTokens {
    #[serde(default)]
    pub claim_id: Option<String>,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSummary {
    pub token_pub: PublicKey,
    pub denomination: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub tokens: Vec<TokenSummary>,
    pub balance: Balance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayRequest {
    #[serde(default)]
    pub invoice_id: Option<String>,
    #[serde(default)]
    pub invoice: Option<Invoice>,
}

pub struct Wallet {
    config: WalletConfig,
    clock: SharedClock,
    transport: Arc<dyn Transport>,
    vault: Option<SealingKey>,
    store: RwLock<WalletStore>,
    /// One mutating operation at a time.
    op: Mutex<()>,
    rng: Mutex<ChaCha20Rng>,
}

impl Wallet {
    /// Start a new wallet bound to an issuer, fetching its public keys.
    pub fn create(
        config: WalletConfig,
        clock: SharedClock,
        transport: Arc<dyn Transport>,
        issuer_endpoint: &str,
        claim_id: Option<String>,
    ) -> Result<Self, WalletError> {
        if let Some(path) = &config.path {
            if path.exists() {
                return Err(WalletError::AlreadyExists(path.display().to_string()));
            }
        }
        let keys = IssuerClient::new(transport.clone(), issuer_endpoint)
            .keys()
            .map_err(|e| unreachable_or(e, WalletError::Issuer))?;
        let mut rng = make_rng(config.seed);
        let vault = match &config.path {
            Some(_) => Some(SealingKey::fresh(&config.passphrase, config.kdf, &mut rng)?),
            None => None,
        };
        let store = WalletStore {
            claim_id,
            issuer_endpoint: Some(issuer_endpoint.to_string()),
            issuer: Some(keys),
            ..WalletStore::default()
        };
        let wallet = Self::assemble(config, clock, transport, vault, store, rng);
        wallet.save(&wallet.store.read())?;
        Ok(wallet)
    }

    /// Open an existing encrypted store.
    pub fn open(config: WalletConfig, clock: SharedClock, transport: Arc<dyn Transport>) -> Result<Self, WalletError> {
        let path = config.path.clone().ok_or(WalletError::NotInitialized)?;
        let blob = std::fs::read(&path).map_err(|e| WalletError::Storage(format!("{}: {e}", path.display())))?;
        let (plain, key) = open_with_passphrase(&config.passphrase, &blob)?;
        let store: WalletStore =
            from_canonical(&plain).map_err(|e| WalletError::Vault(VaultError::Malformed(e.to_string())))?;
        let rng = make_rng(config.seed);
        Ok(Self::assemble(config, clock, transport, Some(key), store, rng))
    }

    fn assemble(
        config: WalletConfig,
        clock: SharedClock,
        transport: Arc<dyn Transport>,
        vault: Option<SealingKey>,
        store: WalletStore,
        rng: ChaCha20Rng,
    ) -> Self {
        Self {
            config,
            clock,
            transport,
            vault,
            store: RwLock::new(store),
            op: Mutex::new(()),
            rng: Mutex::new(rng),
        }
    }

    fn save(&self, store: &WalletStore) -> Result<(), WalletError> {
        let (Some(path), Some(vault)) = (&self.config.path, &self.vault) else { return Ok(()) };
        let blob = vault.seal(&to_canonical(store), &mut *self.rng.lock());
        write_bytes_atomic(path, &blob).map_err(|e| WalletError::Storage(e.to_string()))
    }

    /// Apply `f` to the store and persist the result.
    fn update<T>(&self, f: impl FnOnce(&mut WalletStore) -> T) -> Result<T, WalletError> {
        let mut store = self.store.write();
        let out = f(&mut store);
        self.save(&store)?;
        Ok(out)
    }

    pub fn snapshot(&self) -> WalletStore {
        self.store.read().clone()
    }

    pub fn balance(&self) -> Balance {
        self.store.read().balance()
    }

    pub fn set_claim(&self, claim_id: &str) -> Result<(), WalletError> {
        let _op = self.op.lock();
        self.update(|s| s.claim_id = Some(claim_id.to_string()))
    }

    fn issuer_keys(&self) -> Result<IssuerKeys, WalletError> {
        self.store.read().issuer.clone().ok_or(WalletError::NotInitialized)
    }

    /// Split `amount` greedily into denominations, blind one fresh token per
    /// piece and have the issuer sign the batch against the claim.
    pub fn request_tokens(&self, claim_id: Option<&str>, amount: u64) -> Result<Vec<Token>, WalletError> {
        let _op = self.op.lock();
        if amount == 0 {
            return Err(WalletError::InvalidAmount);
        }
        let keys = self.issuer_keys()?;
        let (claim_id, endpoint) = {
            let s = self.store.read();
            let claim = claim_id.map(str::to_string).or_else(|| s.claim_id.clone()).ok_or(WalletError::NoClaim)?;
            (claim, s.issuer_endpoint.clone().ok_or(WalletError::NotInitialized)?)
        };
        let schedule = keys.issuer.denominations.denominations();
        let denoms = select::decompose(amount, &schedule).ok_or(WalletError::NotExpressible { amount })?;
        let relay_id = keys.ledger.ledger_id();

        let mut fresh = Vec::new();
        let mut blinded = Vec::new();
        {
            let mut rng = self.rng.lock();
            for d in &denoms {
                let key = keys.issuer.denominations.get(*d).expect("denomination from schedule");
                let token_priv = IdentityKeyPair::generate(KeyRole::ClaimantToken, &mut *rng);
                let (b, factor) = blind(&accreditation_message(&token_priv.public, &relay_id), key, &mut *rng);
                blinded.push(b);
                fresh.push(HeldToken {
                    secret: TokenSecret { token_priv, blinding: Some(factor) },
                    denomination: *d,
                    token: None,
                    state: TokenState::PendingAccreditation,
                    flagged: false,
                    spend: None,
                });
            }
        }
        let ids: Vec<PublicKey> = fresh.iter().map(|t| t.secret.token_priv.public).collect();
        self.update(|s| {
            for t in &fresh {
                s.tokens.insert(t.secret.token_priv.public, t.clone());
            }
            if s.claim_id.is_none() {
                s.claim_id = Some(claim_id.clone());
            }
        })?;

        let response = IssuerClient::new(self.transport.clone(), endpoint)
            .accredit(&AccreditationRequest { claim_id, blinded });
        let response = match response {
            Ok(r) => r,
            Err(e) => {
                self.update(|s| ids.iter().for_each(|id| drop(s.tokens.remove(id))))?;
                return Err(unreachable_or(e, WalletError::Issuer));
            }
        };

        let mut tokens = Vec::new();
        if response.signatures.len() == fresh.len() {
            for (held, sig) in fresh.iter().zip(&response.signatures) {
                let key = keys.issuer.denominations.get(held.denomination).expect("denomination from schedule");
                let factor = held.secret.blinding.as_ref().expect("fresh tokens carry a factor");
                let Ok(accreditation) = unblind(&sig.value, factor, key) else { break };
                let token = Token {
                    token_pub: held.secret.token_priv.public,
                    relay_id,
                    denomination: held.denomination,
                    accreditation,
                };
                if sig.denomination != held.denomination || !token.verify_accreditation(&keys.issuer) {
                    break;
                }
                tokens.push(token);
            }
        }
        if tokens.len() != fresh.len() {
            let count = fresh.len() - tokens.len();
            self.update(|s| {
                for id in &ids {
                    if let Some(t) = s.tokens.get_mut(id) {
                        t.flagged = true;
                    }
                }
            })?;
            return Err(WalletError::BadAccreditation { count });
        }
        self.update(|s| {
            for token in &tokens {
                let t = s.tokens.get_mut(&token.token_pub).expect("inserted above");
                t.token = Some(token.clone());
                t.state = TokenState::Spendable;
                t.secret.blinding = None;
            }
        })?;
        Ok(tokens)
    }

    /// Exact subset of free spendable tokens summing to `amount`.
    pub fn select_tokens(&self, amount: u64) -> Result<Vec<PublicKey>, WalletError> {
        let store = self.store.read();
        select_from(&store, amount)
    }

    /// Store an invoice for later payment.
    pub fn add_invoice(&self, invoice: Invoice) -> Result<String, WalletError> {
        let keys = self.issuer_keys()?;
        invoice.check(&keys.issuer.identity, self.clock.now_secs()).map_err(WalletError::Invoice)?;
        let id = invoice.invoice_id.clone();
        self.update(|s| s.invoices.insert(id.clone(), invoice))?;
        Ok(id)
    }

    pub fn invoices(&self) -> Vec<Invoice> {
        let s = self.store.read();
        s.invoices.values().filter(|i| !s.completed.contains_key(&i.invoice_id)).cloned().collect()
    }

    pub fn pay_stored(&self, invoice_id: &str) -> Result<PaymentOutcome, WalletError> {
        let invoice = self
            .store
            .read()
            .invoices
            .get(invoice_id)
            .cloned()
            .ok_or_else(|| WalletError::UnknownInvoice(invoice_id.into()))?;
        self.pay(&invoice)
    }

    /// Pay an invoice: sign exact tokens over to the vendor, register each
    /// transfer with the relay, wait for proofs and hand the bundle to the
    /// merchant. Every step is recorded, so a failed call can be retried and
    /// picks up where it stopped. Paying a completed invoice again returns
    /// the earlier outcome.
    pub fn pay(&self, invoice: &Invoice) -> Result<PaymentOutcome, WalletError> {
        let _op = self.op.lock();
        let id = invoice.invoice_id.clone();
        if let Some(done) = self.store.read().completed.get(&id) {
            return Ok(done.clone());
        }
        let keys = self.issuer_keys()?;
        let now = self.clock.now_secs();
        invoice.check(&keys.issuer.identity, now).map_err(WalletError::Invoice)?;
        let relay = RelayClient::new(self.transport.clone(), invoice.relay_endpoint.clone());
        match relay.ledger() {
            Ok(ledger) if ledger == keys.ledger => {}
            Ok(_) => return Err(WalletError::WrongRelay),
            Err(e) => return Err(unreachable_or(e, WalletError::Relay)),
        }

        // Top up the selection if earlier attempts lost tokens to conflicts.
        let mut progress = self
            .store
            .read()
            .payments
            .get(&id)
            .cloned()
            .unwrap_or_else(|| PaymentProgress { invoice: invoice.clone(), items: Vec::new() });
        let covered = progress.covered();
        if covered < invoice.amount {
            let store = self.store.read().clone();
            let picked = select_from(&store, invoice.amount - covered)?;
            for token_pub in picked {
                let held = &store.tokens[&token_pub];
                let token = held.token.as_ref().expect("usable tokens are accredited");
                let record = build_transfer(
                    TransferSource::Token(token),
                    &invoice.certificate,
                    &held.secret.token_priv,
                    None,
                    &keys.issuer.identity,
                    now,
                )
                .map_err(|e| WalletError::Invoice(Rejection::new("invalid-invoice", e.to_string())))?;
                let submission = TransferSubmission {
                    token: token.clone(),
                    chain: Vec::new(),
                    record,
                    certificates: vec![invoice.certificate.clone()],
                };
                progress.items.push(PayItem { submission, accepted: false, proof: None });
            }
            let snapshot = progress.clone();
            self.update(|s| s.payments.insert(id.clone(), snapshot))?;
        }

        for i in 0..progress.items.len() {
            if progress.items[i].accepted {
                continue;
            }
            let submission = progress.items[i].submission.clone();
            let token_pub = submission.token.token_pub;
            match relay.submit(&submission) {
                Ok(_) => {
                    progress.items[i].accepted = true;
                    let snapshot = progress.clone();
                    self.update(|s| {
                        mark_spent(s, &token_pub, &id, submission.record.digest(), false);
                        s.payments.insert(id.clone(), snapshot);
                    })?;
                }
                Err(ApiError::Rejected { rejection, .. }) => {
                    let conflict = rejection.code == "stale-prev";
                    progress.items.remove(i);
                    let snapshot = progress.clone();
                    self.update(|s| {
                        if conflict {
                            mark_spent(s, &token_pub, &id, submission.record.digest(), true);
                        }
                        s.payments.insert(id.clone(), snapshot);
                    })?;
                    if conflict {
                        tracing::warn!(token = %token_pub.to_b64(), "double spend: relay already holds another transfer");
                        return Err(WalletError::DoubleSpend { token: token_pub });
                    }
                    return Err(WalletError::Relay(rejection));
                }
                Err(e) => return Err(WalletError::Unreachable(e.to_string())),
            }
        }

        for i in 0..progress.items.len() {
            if progress.items[i].proof.is_some() {
                continue;
            }
            let record = progress.items[i].submission.record.clone();
            let token_pub = record.token_id;
            let status = relay
                .await_proof(&record.digest(), self.clock.as_ref(), self.config.backoff)
                .map_err(|e| unreachable_or(e, WalletError::Relay))?;
            match status {
                ProofStatus::Finalized { proof } if proof.record == record && verify_pop(&proof, &keys.ledger) => {
                    progress.items[i].proof = Some(proof);
                    let snapshot = progress.clone();
                    self.update(|s| s.payments.insert(id.clone(), snapshot))?;
                }
                ProofStatus::Finalized { .. } => return Err(WalletError::BadProof),
                ProofStatus::Rejected { .. } => {
                    progress.items.remove(i);
                    let snapshot = progress.clone();
                    self.update(|s| {
                        mark_spent(s, &token_pub, &id, record.digest(), true);
                        s.payments.insert(id.clone(), snapshot);
                    })?;
                    return Err(WalletError::DoubleSpend { token: token_pub });
                }
                ProofStatus::Pending { .. } => return Err(WalletError::ProofTimeout),
            }
        }

        let bundle = PaymentBundle {
            items: progress
                .items
                .iter()
                .map(|item| TokenEvidence {
                    token: item.submission.token.clone(),
                    chain: vec![item.submission.record.clone()],
                    proofs: vec![item.proof.clone().expect("all proofs collected")],
                    certificates: item.submission.certificates.clone(),
                })
                .collect(),
        };
        let view = MerchantClient::new(self.transport.clone(), invoice.merchant_endpoint.clone())
            .pay(&id, &bundle)
            .map_err(|e| unreachable_or(e, WalletError::Merchant))?;
        let outcome = PaymentOutcome {
            invoice_id: id.clone(),
            amount: invoice.amount,
            token_ids: bundle.items.iter().map(|i| i.token.token_pub).collect(),
            status: view.status,
        };
        self.update(|s| {
            s.payments.remove(&id);
            s.completed.insert(id.clone(), outcome.clone());
        })?;
        Ok(outcome)
    }

    /// Encrypt the whole store under a passphrase of its own.
    pub fn export_backup(&self, passphrase: &str) -> Result<Vec<u8>, WalletError> {
        let mut rng = self.rng.lock();
        let key = SealingKey::fresh(passphrase, self.config.kdf, &mut *rng)?;
        Ok(key.seal(&to_canonical(&*self.store.read()), &mut *rng))
    }

    /// Decrypt and merge a backup. Nothing changes unless it decrypts and
    /// parses completely.
    pub fn import_backup(&self, blob: &[u8], passphrase: &str) -> Result<MergeSummary, WalletError> {
        let _op = self.op.lock();
        let (plain, _) = open_with_passphrase(passphrase, blob)?;
        let other: WalletStore =
            from_canonical(&plain).map_err(|e| WalletError::Vault(VaultError::Malformed(e.to_string())))?;
        self.update(|s| s.merge(other))
    }
}

fn make_rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn mark_spent(s: &mut WalletStore, token: &PublicKey, invoice_id: &str, record: Digest, conflict: bool) {
    if let Some(t) = s.tokens.get_mut(token) {
        t.state = TokenState::Spent;
        t.spend = Some(SpendNote { invoice_id: invoice_id.into(), record, conflict });
    }
}

fn select_from(store: &WalletStore, amount: u64) -> Result<Vec<PublicKey>, WalletError> {
    if amount == 0 {
        return Err(WalletError::InvalidAmount);
    }
    let free: Vec<(PublicKey, u64)> = store
        .tokens
        .iter()
        .filter(|(id, t)| t.usable() && !store.reserved(id))
        .map(|(id, t)| (*id, t.denomination))
        .collect();
    let values: Vec<u64> = free.iter().map(|(_, d)| *d).collect();
    match select::select_exact(&values, amount) {
        Ok(picked) => Ok(picked.into_iter().map(|i| free[i].0).collect()),
        Err(nearest) => Err(WalletError::CannotCompose { amount, nearest }),
    }
}

impl Handler for Wallet {
    fn handle(&self, request: ApiRequest) -> ApiResponse {
        fn respond<T: Serialize>(result: Result<T, WalletError>) -> ApiResponse {
            match result {
                Ok(v) => ApiResponse::ok(&v),
                Err(e) => ApiResponse::reject(e.status(), e.rejection()),
            }
        }
        macro_rules! body {
            ($t:ty) => {
                match request.json::<$t>() {
                    Ok(v) => v,
                    Err(resp) => return resp,
                }
            };
        }
        let segments = request.segments();
        match (request.method, segments.as_slice()) {
            (Method::Get, ["v1", "balance"]) => ApiResponse::ok(&self.balance()),
            (Method::Post, ["v1", "request"]) => {
                let req = body!(RequestTokens);
                respond(self.request_tokens(req.claim_id.as_deref(), req.amount).map(|tokens| RequestOutcome {
                    tokens: tokens
                        .iter()
                        .map(|t| TokenSummary { token_pub: t.token_pub, denomination: t.denomination })
                        .collect(),
                    balance: self.balance(),
                }))
            }
            (Method::Get, ["v1", "invoices"]) => ApiResponse::ok(&self.invoices()),
            (Method::Post, ["v1", "invoices"]) => {
                respond(self.add_invoice(body!(Invoice)).map(|id| serde_json::json!({ "invoice_id": id })))
            }
            (Method::Post, ["v1", "pay"]) => {
                let req = body!(PayRequest);
                respond(match (req.invoice, req.invoice_id) {
                    (Some(invoice), _) => self.pay(&invoice),
                    (None, Some(id)) => self.pay_stored(&id),
                    (None, None) => {
                        return ApiResponse::reject(400, Rejection::new("malformed-request", "invoice or invoice_id"))
                    }
                })
            }
            _ => ApiResponse::not_found(),
        }
    }
}
