//! Issuer service: claims and budgets, blind accreditation, the vendor
//! registry, and compliance-gated redemption with tax withholding.
//!
//! State changes are events appended to a durable log before they are
//! applied; a periodic snapshot shortens replay. Issuance events carry only
//! the claim, the batch sum and the count, never blinded values, so the store
//! holds no token keys until those tokens are redeemed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use num_bigint::BigUint;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::api::{bearer_matches, ApiRequest, ApiResponse, Handler, Method, Rejection};
use crate::canonical::{hex_biguint, Digest};
use crate::clock::SharedClock;
use crate::crypto::{BlindedMessage, DenominationKeyset, IdentityKeyPair, PublicKey, Signature};
use crate::ledger::{Checkpoint, CheckpointTracker, LedgerConfig};
use crate::storage::{read_json, write_atomic, EventLog, StorageError};
use crate::token::{verify_transfer_chain, CertificateBody, IssuerPublicKeys, TokenEvidence, VendorCertificate};

pub mod policy;

pub use policy::{CategoryPolicy, CompliancePolicy, PolicyError, Rate};

const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClaimStatus {
    Approved,
    Exhausted,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub approved_amount: u64,
    pub issued_amount: u64,
    pub status: ClaimStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorRecord {
    pub certificate: VendorCertificate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revoked: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedemptionReceipt {
    pub receipt_id: String,
    pub vendor_id: PublicKey,
    pub token_ids: Vec<PublicKey>,
    pub gross: u64,
    pub withheld: u64,
    pub net: u64,
    pub policy_version: u32,
    pub payout_ref: String,
    pub timestamp: u64,
    pub bundle: Digest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub total_approved: u64,
    pub total_issued: u64,
    pub total_redeemed_gross: u64,
    pub total_withheld: u64,
    pub total_net: u64,
    pub outstanding: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproveClaim {
    pub claim_id: String,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccreditationRequest {
    pub claim_id: String,
    pub blinded: Vec<BlindedMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindSignature {
    #[serde(with = "hex_biguint")]
    pub value: BigUint,
    pub denomination: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccreditationResponse {
    pub signatures: Vec<BlindSignature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VendorRegistration {
    pub vendor_id: PublicKey,
    pub legal_name: String,
    pub registration_ref: String,
    pub tax_category: String,
    /// Falls back to the policy default.
    #[serde(default)]
    pub onward_transfer_allowed: Option<bool>,
    pub valid_from: u64,
    pub valid_to: u64,
    /// Attestation that KYC checks were done out of band.
    #[serde(default)]
    pub kyc_attested: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeRequest {
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedemptionRequest {
    pub vendor_id: PublicKey,
    pub items: Vec<TokenEvidence>,
    /// Final holder's signature over [`bundle_digest`].
    pub signature: Signature,
}

#[derive(Serialize)]
struct BundleStatement<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    vendor_id: &'a PublicKey,
    items: &'a [TokenEvidence],
}

pub fn bundle_digest(vendor_id: &PublicKey, items: &[TokenEvidence]) -> Digest {
    Digest::of(&BundleStatement { kind: "redeem", vendor_id, items })
}

impl RedemptionRequest {
    pub fn signed(vendor: &IdentityKeyPair, items: Vec<TokenEvidence>) -> Self {
        let digest = bundle_digest(&vendor.public, &items);
        let signature = vendor.sign(digest.as_bytes());
        Self { vendor_id: vendor.public, items, signature }
    }

    pub fn digest(&self) -> Digest {
        bundle_digest(&self.vendor_id, &self.items)
    }
}

/// Public material wallets and vendors fetch from `GET /v1/keys`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuerKeys {
    pub issuer: IssuerPublicKeys,
    pub ledger: LedgerConfig,
    pub policy_version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum IssuerEvent {
    ClaimApproved { claim_id: String, amount: u64 },
    ClaimFrozen { claim_id: String },
    Issued { claim_id: String, amount: u64, count: u64 },
    VendorRegistered { certificate: VendorCertificate },
    VendorRevoked { vendor_id: PublicKey, reason: String },
    CheckpointAccepted { checkpoint: Checkpoint },
    Redeemed { receipt: RedemptionReceipt },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct State {
    claims: BTreeMap<String, ClaimRecord>,
    vendors: BTreeMap<PublicKey, VendorRecord>,
    nullifiers: BTreeSet<PublicKey>,
    receipts: Vec<RedemptionReceipt>,
    by_bundle: BTreeMap<Digest, usize>,
    /// vendor -> day -> gross redeemed that day
    daily: BTreeMap<PublicKey, BTreeMap<u64, u64>>,
    tracker: CheckpointTracker,
}

impl State {
    fn new(ledger: LedgerConfig) -> Self {
        Self {
            claims: BTreeMap::new(),
            vendors: BTreeMap::new(),
            nullifiers: BTreeSet::new(),
            receipts: Vec::new(),
            by_bundle: BTreeMap::new(),
            daily: BTreeMap::new(),
            tracker: CheckpointTracker::new(ledger),
        }
    }

    fn apply(&mut self, event: &IssuerEvent) {
        match event {
            IssuerEvent::ClaimApproved { claim_id, amount } => {
                self.claims.insert(
                    claim_id.clone(),
                    ClaimRecord {
                        claim_id: claim_id.clone(),
                        approved_amount: *amount,
                        issued_amount: 0,
                        status: ClaimStatus::Approved,
                    },
                );
            }
            IssuerEvent::ClaimFrozen { claim_id } => {
                if let Some(c) = self.claims.get_mut(claim_id) {
                    c.status = ClaimStatus::Frozen;
                }
            }
            IssuerEvent::Issued { claim_id, amount, .. } => {
                if let Some(c) = self.claims.get_mut(claim_id) {
                    c.issued_amount += amount;
                    if c.issued_amount == c.approved_amount && c.status == ClaimStatus::Approved {
                        c.status = ClaimStatus::Exhausted;
                    }
                }
            }
            IssuerEvent::VendorRegistered { certificate } => {
                self.vendors
                    .insert(certificate.vendor_id, VendorRecord { certificate: certificate.clone(), revoked: None });
            }
            IssuerEvent::VendorRevoked { vendor_id, reason } => {
                if let Some(v) = self.vendors.get_mut(vendor_id) {
                    v.revoked = Some(reason.clone());
                }
            }
            IssuerEvent::CheckpointAccepted { checkpoint } => {
                self.tracker.accept(checkpoint);
            }
            IssuerEvent::Redeemed { receipt } => {
                self.nullifiers.extend(receipt.token_ids.iter().copied());
                *self.daily.entry(receipt.vendor_id).or_default().entry(receipt.timestamp / SECONDS_PER_DAY).or_default() +=
                    receipt.gross;
                self.by_bundle.insert(receipt.bundle, self.receipts.len());
                self.receipts.push(receipt.clone());
            }
        }
    }

    fn audit(&self) -> AuditReport {
        let mut r = AuditReport::default();
        for c in self.claims.values() {
            r.total_approved += c.approved_amount;
            r.total_issued += c.issued_amount;
        }
        for receipt in &self.receipts {
            r.total_redeemed_gross += receipt.gross;
            r.total_withheld += receipt.withheld;
            r.total_net += receipt.net;
        }
        r.outstanding = r.total_issued - r.total_redeemed_gross;
        r
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    events_applied: u64,
    state: State,
}

pub struct IssuerConfig {
    pub identity: IdentityKeyPair,
    pub keyset: DenominationKeyset,
    pub policy: CompliancePolicy,
    pub ledger: LedgerConfig,
    pub admin_token: String,
    pub data_dir: Option<PathBuf>,
    /// Write a snapshot after this many events (0 disables).
    pub snapshot_every: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum IssuerError {
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("policy denomination {0} has no signing key")]
    MissingKey(u64),
}

struct Inner {
    state: State,
    log: EventLog<IssuerEvent>,
    events_applied: u64,
}

pub struct IssuerService {
    identity: IdentityKeyPair,
    keyset: DenominationKeyset,
    policy: CompliancePolicy,
    ledger: LedgerConfig,
    admin_token: String,
    snapshot_path: Option<PathBuf>,
    snapshot_every: u64,
    clock: SharedClock,
    inner: Mutex<Inner>,
}

fn reject(code: &str, message: impl Into<String>) -> Rejection {
    Rejection::new(code, message)
}

impl IssuerService {
    pub fn open(config: IssuerConfig, clock: SharedClock) -> Result<Self, IssuerError> {
        config.policy.validate()?;
        if let Some(d) = config.policy.denominations.iter().find(|d| config.keyset.get(**d).is_none()) {
            return Err(IssuerError::MissingKey(*d));
        }
        let (log, events, snapshot_path) = match &config.data_dir {
            Some(dir) => {
                let (log, events) = EventLog::open(dir.join("issuer-events.log"))?;
                (log, events, Some(dir.join("issuer-snapshot.json")))
            }
            None => (EventLog::memory(), Vec::new(), None),
        };
        let snapshot: Option<Snapshot> = match &snapshot_path {
            Some(p) => read_json(p)?,
            None => None,
        };
        let (mut state, skip) = match snapshot {
            // A snapshot is only usable if the log still covers it.
            Some(s) if s.events_applied <= events.len() as u64 => (s.state, s.events_applied),
            _ => (State::new(config.ledger.clone()), 0),
        };
        for event in events.iter().skip(skip as usize) {
            state.apply(event);
        }
        let events_applied = events.len() as u64;
        Ok(Self {
            identity: config.identity,
            keyset: config.keyset,
            policy: config.policy,
            ledger: config.ledger,
            admin_token: config.admin_token,
            snapshot_path,
            snapshot_every: config.snapshot_every,
            clock,
            inner: Mutex::new(Inner { state, log, events_applied }),
        })
    }

    pub fn public_keys(&self) -> IssuerPublicKeys {
        IssuerPublicKeys { identity: self.identity.public, denominations: self.keyset.public() }
    }

    pub fn keys(&self) -> IssuerKeys {
        IssuerKeys { issuer: self.public_keys(), ledger: self.ledger.clone(), policy_version: self.policy.version }
    }

    pub fn policy(&self) -> &CompliancePolicy {
        &self.policy
    }

    /// Durably record `events`, then apply them.
    fn commit(&self, inner: &mut Inner, events: Vec<IssuerEvent>) -> Result<(), Rejection> {
        for event in &events {
            inner.log.append(event).map_err(|e| reject("storage-failure", e.to_string()))?;
        }
        for event in &events {
            inner.state.apply(event);
        }
        let before = inner.events_applied;
        inner.events_applied += events.len() as u64;
        if let Some(path) = &self.snapshot_path {
            let every = self.snapshot_every;
            if every > 0 && inner.events_applied / every != before / every {
                let snap = Snapshot { events_applied: inner.events_applied, state: inner.state.clone() };
                if let Err(e) = write_atomic(path, &snap) {
                    tracing::warn!(error = %e, "issuer snapshot failed");
                }
            }
        }
        Ok(())
    }

    pub fn approve_claim(&self, req: ApproveClaim) -> Result<ClaimRecord, Rejection> {
        let mut inner = self.inner.lock();
        if inner.state.claims.contains_key(&req.claim_id) {
            return Err(reject("duplicate-claim", format!("claim {} already exists", req.claim_id)));
        }
        let claim_id = req.claim_id.clone();
        self.commit(&mut inner, vec![IssuerEvent::ClaimApproved { claim_id: req.claim_id, amount: req.amount }])?;
        Ok(inner.state.claims[&claim_id].clone())
    }

    pub fn freeze_claim(&self, claim_id: &str) -> Result<ClaimRecord, Rejection> {
        let mut inner = self.inner.lock();
        if !inner.state.claims.contains_key(claim_id) {
            return Err(reject("unknown-claim", format!("no claim {claim_id}")));
        }
        self.commit(&mut inner, vec![IssuerEvent::ClaimFrozen { claim_id: claim_id.to_string() }])?;
        Ok(inner.state.claims[claim_id].clone())
    }

    pub fn claim(&self, claim_id: &str) -> Option<ClaimRecord> {
        self.inner.lock().state.claims.get(claim_id).cloned()
    }

    /// All-or-nothing blind signing against the claim's remaining budget.
    pub fn issue_accreditations(&self, req: AccreditationRequest) -> Result<AccreditationResponse, Rejection> {
        let mut inner = self.inner.lock();
        let claim = inner
            .state
            .claims
            .get(&req.claim_id)
            .ok_or_else(|| reject("unknown-claim", "no such claim"))?
            .clone();
        if claim.status == ClaimStatus::Frozen {
            return Err(reject("frozen-claim", "claim is frozen"));
        }
        if req.blinded.is_empty() {
            return Err(reject("empty-request", "no blinded messages"));
        }
        let mut total: u64 = 0;
        for b in &req.blinded {
            if self.keyset.get(b.denomination).is_none() {
                return Err(reject("unknown-denomination", format!("no key for denomination {}", b.denomination)));
            }
            total = total.checked_add(b.denomination).ok_or_else(|| reject("over-budget", "batch sum overflows"))?;
        }
        let remaining = claim.approved_amount - claim.issued_amount;
        if total > remaining {
            return Err(reject("over-budget", format!("batch {total} exceeds remaining {remaining}"))
                .with_details(&serde_json::json!({ "requested": total, "remaining": remaining })));
        }
        let signatures = req
            .blinded
            .iter()
            .map(|b| {
                self.keyset
                    .sign_blinded(b)
                    .map(|value| BlindSignature { value, denomination: b.denomination })
                    .map_err(|e| reject("invalid-blinded-message", e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let event = IssuerEvent::Issued { claim_id: req.claim_id, amount: total, count: signatures.len() as u64 };
        self.commit(&mut inner, vec![event])?;
        Ok(AccreditationResponse { signatures })
    }

    pub fn register_vendor(&self, req: VendorRegistration) -> Result<VendorCertificate, Rejection> {
        let category = self
            .policy
            .category(&req.tax_category)
            .ok_or_else(|| reject("unknown-category", format!("no tax category {}", req.tax_category)))?;
        if category.kyc_required && !req.kyc_attested {
            return Err(reject("kyc-required", format!("category {} requires KYC attestation", req.tax_category)));
        }
        if req.valid_to <= req.valid_from {
            return Err(reject("invalid-validity", "valid_to must be after valid_from"));
        }
        if !req.vendor_id.is_well_formed() {
            return Err(reject("invalid-key", "vendor key is not a valid public key"));
        }
        let mut inner = self.inner.lock();
        if inner.state.vendors.contains_key(&req.vendor_id) {
            return Err(reject("duplicate-vendor", "vendor already registered"));
        }
        let certificate = CertificateBody {
            vendor_id: req.vendor_id,
            legal_name: req.legal_name,
            registration_ref: req.registration_ref,
            tax_category: req.tax_category,
            onward_transfer_allowed: req.onward_transfer_allowed.unwrap_or(self.policy.onward_transfer_default),
            valid_from: req.valid_from,
            valid_to: req.valid_to,
        }
        .sign(&self.identity);
        self.commit(&mut inner, vec![IssuerEvent::VendorRegistered { certificate: certificate.clone() }])?;
        Ok(certificate)
    }

    pub fn vendor(&self, vendor_id: &PublicKey) -> Option<VendorRecord> {
        self.inner.lock().state.vendors.get(vendor_id).cloned()
    }

    pub fn revoke_vendor(&self, vendor_id: &PublicKey, reason: &str) -> Result<Vec<PublicKey>, Rejection> {
        let mut inner = self.inner.lock();
        if !inner.state.vendors.contains_key(vendor_id) {
            return Err(reject("unknown-vendor", "vendor not registered"));
        }
        self.commit(&mut inner, vec![IssuerEvent::VendorRevoked { vendor_id: *vendor_id, reason: reason.to_string() }])?;
        Ok(inner.state.vendors.iter().filter(|(_, v)| v.revoked.is_some()).map(|(k, _)| *k).collect())
    }

    /// Compliance-checked, all-or-nothing redemption.
    pub fn redeem(&self, req: &RedemptionRequest) -> Result<RedemptionReceipt, Rejection> {
        let now = self.clock.now_secs();
        let mut inner = self.inner.lock();
        let (events, receipt) = self.check_redemption(&inner.state, req, now)?;
        self.commit(&mut inner, events)?;
        Ok(receipt)
    }

    fn check_redemption(
        &self,
        state: &State,
        req: &RedemptionRequest,
        now: u64,
    ) -> Result<(Vec<IssuerEvent>, RedemptionReceipt), Rejection> {
        if req.items.is_empty() {
            return Err(reject("empty-bundle", "nothing to redeem"));
        }
        let digest = req.digest();
        if !req.vendor_id.verify(digest.as_bytes(), &req.signature) {
            return Err(reject("holder-mismatch", "bundle is not signed by the redeeming vendor"));
        }
        let token_ids: Vec<PublicKey> = req.items.iter().map(|i| i.token.token_pub).collect();
        let distinct: BTreeSet<PublicKey> = token_ids.iter().copied().collect();
        if distinct.len() != token_ids.len() {
            return Err(reject("duplicate-token-in-bundle", "a token appears twice"));
        }

        // Every party that ever held value must be a registered, unrevoked vendor.
        let mut recipients = vec![req.vendor_id];
        recipients.extend(req.items.iter().flat_map(|i| i.chain.iter().map(|r| r.recipient_id)));
        let unregistered: Vec<PublicKey> =
            recipients.iter().filter(|r| !state.vendors.contains_key(r)).copied().collect();
        if !unregistered.is_empty() {
            return Err(reject("unregistered-recipient", "recipient is not a registered vendor")
                .with_details(&serde_json::json!({ "vendors": unregistered })));
        }
        let revoked: BTreeSet<PublicKey> =
            recipients.iter().filter(|r| state.vendors[*r].revoked.is_some()).copied().collect();
        if !revoked.is_empty() {
            return Err(reject("revoked-certificate", "a vendor certificate on the chain is revoked")
                .with_details(&serde_json::json!({ "vendors": revoked })));
        }

        let issuer = self.public_keys();
        for item in &req.items {
            if item.token.relay_id != self.ledger.ledger_id() {
                return Err(reject("invalid-chain", "token is bound to an unknown ledger")
                    .with_details(&serde_json::json!({ "token": item.token.token_pub })));
            }
            let summary = verify_transfer_chain(&item.token, &item.chain, &issuer, &item.certificates);
            if let Some(failure) = summary.failure {
                return Err(reject("invalid-chain", format!("chain failed: {}", failure.code()))
                    .with_details(&serde_json::json!({ "token": item.token.token_pub, "failure": failure })));
            }
            if summary.final_holder != Some(req.vendor_id) {
                return Err(reject("holder-mismatch", "token's final holder is not the redeeming vendor")
                    .with_details(&serde_json::json!({ "token": item.token.token_pub })));
            }
        }

        let mut tracker = state.tracker.clone();
        let mut new_checkpoints = Vec::new();
        for item in &req.items {
            let result = item.verify(&issuer, &self.ledger, |cp| {
                let known = tracker.get(cp.height).is_some_and(|c| c.digest() == cp.digest());
                let ok = tracker.accept(cp);
                if ok && !known {
                    new_checkpoints.push(cp.clone());
                }
                ok
            });
            if result.is_err() {
                return Err(reject("missing-pop", "a transfer record lacks a valid proof of provenance")
                    .with_details(&serde_json::json!({ "token": item.token.token_pub })));
            }
        }

        let spent: Vec<PublicKey> = token_ids.iter().filter(|t| state.nullifiers.contains(t)).copied().collect();
        if !spent.is_empty() {
            let previous = state.by_bundle.get(&digest).map(|i| &state.receipts[*i]);
            return Err(reject("double-redeem", "token already redeemed")
                .with_details(&serde_json::json!({ "tokens": spent, "receipt": previous })));
        }

        let mut gross: u64 = 0;
        for item in &req.items {
            gross = gross
                .checked_add(item.token.denomination)
                .ok_or_else(|| reject("limit-exceeded", "bundle value overflows"))?;
        }
        let day = now / SECONDS_PER_DAY;
        let today = state.daily.get(&req.vendor_id).and_then(|d| d.get(&day)).copied().unwrap_or(0);
        let cap = self.policy.max_redemption_per_vendor_per_day;
        if today.saturating_add(gross) > cap {
            return Err(reject("limit-exceeded", format!("daily cap {cap} reached"))
                .with_details(&serde_json::json!({ "today": today, "requested": gross, "cap": cap })));
        }
        let category = &state.vendors[&req.vendor_id].certificate.tax_category;
        let withheld = self
            .policy
            .withholding(category, gross)
            .ok_or_else(|| reject("unknown-category", format!("no policy for {category}")))?;
        let receipt_id = format!("r{:08}", state.receipts.len() + 1);
        let receipt = RedemptionReceipt {
            payout_ref: format!("payout-{receipt_id}"),
            receipt_id,
            vendor_id: req.vendor_id,
            token_ids,
            gross,
            withheld,
            net: gross - withheld,
            policy_version: self.policy.version,
            timestamp: now,
            bundle: digest,
        };
        let mut events: Vec<IssuerEvent> =
            new_checkpoints.into_iter().map(|checkpoint| IssuerEvent::CheckpointAccepted { checkpoint }).collect();
        events.push(IssuerEvent::Redeemed { receipt: receipt.clone() });
        Ok((events, receipt))
    }

    pub fn audit(&self) -> AuditReport {
        self.inner.lock().state.audit()
    }

    pub fn nullifiers(&self) -> BTreeSet<PublicKey> {
        self.inner.lock().state.nullifiers.clone()
    }

    pub fn receipts(&self) -> Vec<RedemptionReceipt> {
        self.inner.lock().state.receipts.clone()
    }

    fn admin(&self, request: &ApiRequest) -> bool {
        bearer_matches(request, &self.admin_token)
    }
}

fn respond<T: Serialize>(result: Result<T, Rejection>) -> ApiResponse {
    match result {
        Ok(v) => ApiResponse::ok(&v),
        Err(r) => {
            let status = match r.code.as_str() {
                "storage-failure" => 503,
                "unknown-claim" | "unknown-vendor" => 404,
                _ => 409,
            };
            ApiResponse::reject(status, r)
        }
    }
}

impl Handler for IssuerService {
    fn handle(&self, request: ApiRequest) -> ApiResponse {
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
            (Method::Get, ["v1", "keys"]) => ApiResponse::ok(&self.keys()),
            (Method::Get, ["v1", "audit"]) => ApiResponse::ok(&self.audit()),
            (Method::Post, ["v1", "claims"]) => {
                if !self.admin(&request) {
                    return ApiResponse::unauthorized();
                }
                respond(self.approve_claim(body!(ApproveClaim)))
            }
            (Method::Post, ["v1", "claims", id, "freeze"]) => {
                if !self.admin(&request) {
                    return ApiResponse::unauthorized();
                }
                respond(self.freeze_claim(id))
            }
            (Method::Post, ["v1", "accreditations"]) => respond(self.issue_accreditations(body!(AccreditationRequest))),
            (Method::Post, ["v1", "vendors"]) => {
                if !self.admin(&request) {
                    return ApiResponse::unauthorized();
                }
                respond(self.register_vendor(body!(VendorRegistration)))
            }
            (Method::Get, ["v1", "vendors", id]) => match PublicKey::from_b64(id).ok().and_then(|k| self.vendor(&k)) {
                Some(v) => ApiResponse::ok(&v),
                None => ApiResponse::not_found(),
            },
            (Method::Post, ["v1", "vendors", id, "revoke"]) => {
                if !self.admin(&request) {
                    return ApiResponse::unauthorized();
                }
                let req = body!(RevokeRequest);
                match PublicKey::from_b64(id) {
                    Ok(k) => respond(self.revoke_vendor(&k, &req.reason)),
                    Err(_) => respond::<()>(Err(reject("unknown-vendor", "malformed vendor id"))),
                }
            }
            (Method::Post, ["v1", "redemptions"]) => respond(self.redeem(&body!(RedemptionRequest))),
            _ => ApiResponse::not_found(),
        }
    }
}

/// Canonical bytes of the persisted issuer store, for structural scans.
pub fn store_bytes(data_dir: &std::path::Path) -> Vec<u8> {
    let mut out = Vec::new();
    for name in ["issuer-events.log", "issuer-snapshot.json"] {
        if let Ok(bytes) = std::fs::read(data_dir.join(name)) {
            out.extend_from_slice(&bytes);
        }
    }
    out
}
