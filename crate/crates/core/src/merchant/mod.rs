//! Vendor side: invoices, payment verification, onward transfer to
//! suppliers and redemption with the issuer.
//!
//! A payment is accepted only after every item passes the same offline
//! checks the issuer will run later (accreditation, chain to this vendor,
//! quorum-signed inclusion proofs), so a paid invoice can only fail at
//! redemption for policy or nullifier reasons.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::api::clients::{Backoff, IssuerClient, MerchantClient, RelayClient};
use crate::api::{bearer_matches, ApiError, ApiRequest, ApiResponse, Handler, Method, Rejection, Transport};
use crate::canonical::Digest;
use crate::clock::SharedClock;
use crate::crypto::{IdentityKeyPair, PublicKey};
use crate::issuer::{IssuerKeys, RedemptionReceipt, RedemptionRequest};
use crate::ledger::CheckpointTracker;
use crate::relay::ProofStatus;
use crate::storage::{EventLog, StorageError};
use crate::token::{build_transfer, verify_pop, TokenEvidence, TransferSource, TransferSubmission, VendorCertificate};

pub const DEFAULT_INVOICE_TTL_SECS: u64 = 3_600;

/// A payment request. Everything a wallet needs to pay it is inside.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub invoice_id: String,
    pub certificate: VendorCertificate,
    pub amount: u64,
    pub relay_endpoint: String,
    /// Where the wallet delivers the payment bundle.
    pub merchant_endpoint: String,
    pub expiry: u64,
}

impl Invoice {
    /// Structural check against the issuer key at `now`.
    pub fn check(&self, issuer_pub: &PublicKey, now: u64) -> Result<(), Rejection> {
        if self.amount == 0 {
            return Err(Rejection::new("invalid-invoice", "amount must be positive"));
        }
        if !self.certificate.signature_valid(issuer_pub) || !self.certificate.covers(now) {
            return Err(Rejection::new("invalid-invoice", "vendor certificate is not valid now"));
        }
        if now >= self.expiry {
            return Err(Rejection::new("expired-invoice", "invoice has expired"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvoiceStatus {
    Open,
    Paid,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvoiceView {
    pub invoice: Invoice,
    pub status: InvoiceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paid_at: Option<u64>,
}

/// Tokens handed to a vendor, each with full evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentBundle {
    pub items: Vec<TokenEvidence>,
}

impl PaymentBundle {
    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }

    pub fn total(&self) -> Option<u64> {
        self.items.iter().try_fold(0u64, |acc, i| acc.checked_add(i.token.denomination))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoldingStatus {
    Held,
    Transferred,
    Redeemed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldingView {
    pub token_id: PublicKey,
    pub denomination: u64,
    pub status: HoldingStatus,
    pub invoice_id: String,
    pub hops: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receipt_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateInvoice {
    pub amount: u64,
    #[serde(default)]
    pub ttl_secs: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnwardRequest {
    pub token_ids: Vec<PublicKey>,
    pub supplier: VendorCertificate,
    /// Supplier invoice to deliver the bundle to; its certificate must be
    /// `supplier`.
    #[serde(default)]
    pub deliver: Option<Invoice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnwardOutcome {
    pub bundle: PaymentBundle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered: Option<InvoiceView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RedeemRequest {
    /// `None` redeems everything currently held.
    #[serde(default)]
    pub token_ids: Option<Vec<PublicKey>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
enum MerchantEvent {
    InvoiceCreated { invoice: Invoice },
    InvoicePaid { invoice_id: String, bundle: PaymentBundle, at: u64 },
    /// Written before the relay sees the record, so a retry resubmits the
    /// identical record instead of signing a conflicting one.
    OnwardPrepared { submission: TransferSubmission },
    OnwardAccepted { token_id: PublicKey },
    OnwardAbandoned { token_id: PublicKey },
    OnwardProved { evidence: TokenEvidence },
    Redeemed { receipt: RedemptionReceipt },
}

#[derive(Debug, Clone)]
struct Holding {
    evidence: TokenEvidence,
    status: HoldingStatus,
    invoice_id: String,
    onward: Option<TransferSubmission>,
    onward_evidence: Option<TokenEvidence>,
    receipt_id: Option<String>,
}

struct PaidInvoice {
    bundle: Digest,
    at: u64,
}

struct State {
    invoices: BTreeMap<String, Invoice>,
    paid: BTreeMap<String, PaidInvoice>,
    holdings: BTreeMap<PublicKey, Holding>,
    receipts: Vec<RedemptionReceipt>,
    tracker: CheckpointTracker,
}

impl State {
    fn apply(&mut self, event: &MerchantEvent) {
        match event {
            MerchantEvent::InvoiceCreated { invoice } => {
                self.invoices.insert(invoice.invoice_id.clone(), invoice.clone());
            }
            MerchantEvent::InvoicePaid { invoice_id, bundle, at } => {
                self.paid.insert(invoice_id.clone(), PaidInvoice { bundle: bundle.digest(), at: *at });
                for item in &bundle.items {
                    for proof in &item.proofs {
                        self.tracker.accept(&proof.checkpoint);
                    }
                    self.holdings.insert(item.token.token_pub, Holding {
                        evidence: item.clone(),
                        status: HoldingStatus::Held,
                        invoice_id: invoice_id.clone(),
                        onward: None,
                        onward_evidence: None,
                        receipt_id: None,
                    });
                }
            }
            MerchantEvent::OnwardPrepared { submission } => {
                if let Some(h) = self.holdings.get_mut(&submission.token.token_pub) {
                    h.onward = Some(submission.clone());
                }
            }
            MerchantEvent::OnwardAccepted { token_id } => {
                if let Some(h) = self.holdings.get_mut(token_id) {
                    h.status = HoldingStatus::Transferred;
                }
            }
            MerchantEvent::OnwardAbandoned { token_id } => {
                if let Some(h) = self.holdings.get_mut(token_id) {
                    if h.status == HoldingStatus::Held {
                        h.onward = None;
                    }
                }
            }
            MerchantEvent::OnwardProved { evidence } => {
                if let Some(h) = self.holdings.get_mut(&evidence.token.token_pub) {
                    h.onward_evidence = Some(evidence.clone());
                }
            }
            MerchantEvent::Redeemed { receipt } => {
                for id in &receipt.token_ids {
                    if let Some(h) = self.holdings.get_mut(id) {
                        h.status = HoldingStatus::Redeemed;
                        h.receipt_id = Some(receipt.receipt_id.clone());
                    }
                }
                self.receipts.push(receipt.clone());
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MerchantConfig {
    pub identity: IdentityKeyPair,
    pub certificate: VendorCertificate,
    pub issuer: IssuerKeys,
    pub issuer_endpoint: String,
    pub relay_endpoint: String,
    /// This service's own address, quoted in invoices.
    pub public_endpoint: String,
    /// Guards everything except payment delivery and reads.
    pub admin_token: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub invoice_ttl_secs: u64,
    pub backoff: Backoff,
}

#[derive(Debug, thiserror::Error)]
pub enum MerchantError {
    #[error("certificate does not belong to the identity key")]
    CertificateMismatch,
    #[error(transparent)]
    Storage(#[from] StorageError),
}

pub struct MerchantService {
    config: MerchantConfig,
    clock: SharedClock,
    relay: RelayClient,
    issuer: IssuerClient,
    transport: Arc<dyn Transport>,
    state: Mutex<State>,
    log: Mutex<EventLog<MerchantEvent>>,
    /// Serialises onward transfers and redemptions, which talk to the network.
    op: Mutex<()>,
}

fn reject(code: &str, message: impl Into<String>) -> Rejection {
    Rejection::new(code, message)
}

fn upstream(e: ApiError) -> Rejection {
    match e {
        ApiError::Rejected { rejection, .. } => rejection,
        other => reject("upstream-unreachable", other.to_string()),
    }
}

impl MerchantService {
    pub fn open(config: MerchantConfig, clock: SharedClock, transport: Arc<dyn Transport>) -> Result<Self, MerchantError> {
        if config.certificate.vendor_id != config.identity.public {
            return Err(MerchantError::CertificateMismatch);
        }
        let (log, events) = match &config.data_dir {
            Some(dir) => EventLog::open(dir.join("merchant-events.log"))?,
            None => (EventLog::memory(), Vec::new()),
        };
        let mut state = State {
            invoices: BTreeMap::new(),
            paid: BTreeMap::new(),
            holdings: BTreeMap::new(),
            receipts: Vec::new(),
            tracker: CheckpointTracker::new(config.issuer.ledger.clone()),
        };
        for event in &events {
            state.apply(event);
        }
        Ok(Self {
            relay: RelayClient::new(transport.clone(), config.relay_endpoint.clone()),
            issuer: IssuerClient::new(transport.clone(), config.issuer_endpoint.clone()),
            transport,
            config,
            clock,
            state: Mutex::new(state),
            log: Mutex::new(log),
            op: Mutex::new(()),
        })
    }

    pub fn vendor_id(&self) -> PublicKey {
        self.config.identity.public
    }

    pub fn endpoint(&self) -> &str {
        &self.config.public_endpoint
    }

    pub fn config(&self) -> &MerchantConfig {
        &self.config
    }

    pub fn certificate(&self) -> &VendorCertificate {
        &self.config.certificate
    }

    fn record(&self, state: &mut State, event: MerchantEvent) -> Result<(), Rejection> {
        self.log.lock().append(&event).map_err(|e| reject("storage-failure", e.to_string()))?;
        state.apply(&event);
        Ok(())
    }

    pub fn create_invoice(&self, amount: u64, ttl_secs: Option<u64>) -> Result<Invoice, Rejection> {
        if amount == 0 {
            return Err(reject("invalid-amount", "amount must be positive"));
        }
        let now = self.clock.now_secs();
        let ttl = ttl_secs.unwrap_or(self.config.invoice_ttl_secs);
        let expiry = now.saturating_add(ttl);
        let cert = &self.config.certificate;
        if !cert.covers(now) || expiry > cert.valid_to {
            return Err(reject("certificate-expired", "certificate does not cover the invoice lifetime"));
        }
        // Best effort: an unreachable issuer does not block sales.
        if let Ok(record) = self.issuer.vendor(&cert.vendor_id) {
            if record.revoked.is_some() {
                return Err(reject("revoked-certificate", "vendor certificate has been revoked"));
            }
        }
        let mut id = [0u8; 12];
        rand::rngs::OsRng.fill_bytes(&mut id);
        let invoice = Invoice {
            invoice_id: format!("inv-{}", hex::encode(id)),
            certificate: cert.clone(),
            amount,
            relay_endpoint: self.config.relay_endpoint.clone(),
            merchant_endpoint: self.config.public_endpoint.clone(),
            expiry,
        };
        let mut state = self.state.lock();
        self.record(&mut state, MerchantEvent::InvoiceCreated { invoice: invoice.clone() })?;
        Ok(invoice)
    }

    pub fn invoice(&self, invoice_id: &str) -> Option<InvoiceView> {
        let state = self.state.lock();
        let invoice = state.invoices.get(invoice_id)?.clone();
        let now = self.clock.now_secs();
        Some(match state.paid.get(invoice_id) {
            Some(p) => InvoiceView { invoice, status: InvoiceStatus::Paid, bundle: Some(p.bundle), paid_at: Some(p.at) },
            None => {
                let status = if now >= invoice.expiry { InvoiceStatus::Expired } else { InvoiceStatus::Open };
                InvoiceView { invoice, status, bundle: None, paid_at: None }
            }
        })
    }

    /// Verify a bundle against an open invoice and take custody of it.
    /// Resubmitting the bundle that paid an invoice returns the paid view.
    pub fn accept_payment(&self, invoice_id: &str, bundle: PaymentBundle) -> Result<InvoiceView, Rejection> {
        let now = self.clock.now_secs();
        let digest = bundle.digest();
        let mut state = self.state.lock();
        let invoice = state
            .invoices
            .get(invoice_id)
            .cloned()
            .ok_or_else(|| reject("unknown-invoice", "no such invoice"))?;
        if let Some(paid) = state.paid.get(invoice_id) {
            if paid.bundle == digest {
                drop(state);
                return Ok(self.invoice(invoice_id).expect("invoice exists"));
            }
            return Err(reject("invoice-not-open", "invoice is already paid"));
        }
        if now >= invoice.expiry {
            return Err(reject("expired-invoice", "invoice has expired"));
        }
        let ids: Vec<PublicKey> = bundle.items.iter().map(|i| i.token.token_pub).collect();
        if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
            return Err(reject("duplicate-token-in-bundle", "a token appears twice"));
        }
        let me = self.vendor_id();
        for item in &bundle.items {
            if item.final_holder() != Some(me) {
                return Err(reject("wrong-recipient", "a transfer names another recipient")
                    .with_details(&serde_json::json!({ "token": item.token.token_pub })));
            }
        }
        let mut tracker = state.tracker.clone();
        for item in &bundle.items {
            let result = item.verify(&self.config.issuer.issuer, &self.config.issuer.ledger, |cp| tracker.accept(cp));
            if let Err(failure) = result {
                return Err(reject("bad-proof", "token evidence does not verify")
                    .with_details(&serde_json::json!({ "token": item.token.token_pub, "failure": failure })));
            }
        }
        if let Some(id) = ids.iter().find(|id| state.holdings.contains_key(id)) {
            return Err(reject("already-received", "token was already received")
                .with_details(&serde_json::json!({ "token": id })));
        }
        if bundle.total() != Some(invoice.amount) {
            return Err(reject("wrong-amount", "bundle does not sum to the invoice amount").with_details(
                &serde_json::json!({ "expected": invoice.amount, "received": bundle.total() }),
            ));
        }
        self.record(&mut state, MerchantEvent::InvoicePaid { invoice_id: invoice_id.into(), bundle, at: now })?;
        drop(state);
        Ok(self.invoice(invoice_id).expect("invoice exists"))
    }

    /// Sign held tokens over to a supplier, wait for proofs and optionally
    /// deliver the bundle against the supplier's invoice. Retrying with the
    /// same supplier resumes tokens already submitted.
    pub fn transfer_onward(&self, req: &OnwardRequest) -> Result<OnwardOutcome, Rejection> {
        let _op = self.op.lock();
        let now = self.clock.now_secs();
        let issuer = &self.config.issuer;
        if !self.config.certificate.onward_transfer_allowed {
            return Err(reject("onward-not-permitted", "this vendor may not transfer tokens onward"));
        }
        if !req.supplier.signature_valid(&issuer.issuer.identity) || !req.supplier.covers(now) {
            return Err(reject("invalid-supplier-certificate", "supplier certificate is not valid now"));
        }
        if let Some(invoice) = &req.deliver {
            if invoice.certificate != req.supplier {
                return Err(reject("invalid-invoice", "invoice is not from the named supplier"));
            }
            invoice.check(&issuer.issuer.identity, now)?;
        }
        if req.token_ids.is_empty() {
            return Err(reject("empty-selection", "no tokens selected"));
        }

        let mut submissions = Vec::new();
        {
            let state = self.state.lock();
            for id in &req.token_ids {
                let h = state.holdings.get(id).ok_or_else(|| reject("not-held", "token is not held"))?;
                match (h.status, &h.onward) {
                    (_, Some(s)) if h.status != HoldingStatus::Redeemed => {
                        if s.record.recipient_id != req.supplier.vendor_id {
                            return Err(reject("onward-pending", "token has a pending transfer to another supplier"));
                        }
                        submissions.push((s.clone(), true));
                    }
                    (HoldingStatus::Held, None) => {
                        let tip = h.evidence.tip().expect("held tokens have a chain");
                        let record = build_transfer(
                            TransferSource::Record(tip),
                            &req.supplier,
                            &self.config.identity,
                            Some(&self.config.certificate),
                            &issuer.issuer.identity,
                            now,
                        )
                        .map_err(|e| reject("onward-not-permitted", e.to_string()))?;
                        let mut certificates = h.evidence.certificates.clone();
                        if !certificates.contains(&req.supplier) {
                            certificates.push(req.supplier.clone());
                        }
                        let submission = TransferSubmission {
                            token: h.evidence.token.clone(),
                            chain: h.evidence.chain.clone(),
                            record,
                            certificates,
                        };
                        submissions.push((submission, false));
                    }
                    _ => return Err(reject("not-held", "token was already transferred or redeemed")),
                }
            }
        }

        for (submission, prepared) in &submissions {
            let token_id = submission.token.token_pub;
            if !prepared {
                let mut state = self.state.lock();
                self.record(&mut state, MerchantEvent::OnwardPrepared { submission: submission.clone() })?;
            }
            if self.state.lock().holdings[&token_id].status == HoldingStatus::Transferred {
                continue;
            }
            match self.relay.submit(submission) {
                Ok(_) => {
                    let mut state = self.state.lock();
                    self.record(&mut state, MerchantEvent::OnwardAccepted { token_id })?;
                }
                Err(ApiError::Rejected { rejection, .. }) => {
                    let mut state = self.state.lock();
                    self.record(&mut state, MerchantEvent::OnwardAbandoned { token_id })?;
                    return Err(rejection);
                }
                Err(e) => return Err(upstream(e)),
            }
        }

        let mut items = Vec::new();
        for (submission, _) in &submissions {
            let existing = self.state.lock().holdings[&submission.token.token_pub].onward_evidence.clone();
            if let Some(ev) = existing {
                items.push(ev);
                continue;
            }
            let proof = match self
                .relay
                .await_proof(&submission.record.digest(), self.clock.as_ref(), self.config.backoff)
                .map_err(upstream)?
            {
                ProofStatus::Finalized { proof } if verify_pop(&proof, &issuer.ledger) => proof,
                ProofStatus::Finalized { .. } => return Err(reject("bad-proof", "relay returned an invalid proof")),
                ProofStatus::Rejected { .. } => {
                    return Err(reject("stale-prev", "a conflicting transfer of this token finalized"))
                }
                ProofStatus::Pending { .. } => {
                    return Err(reject("proof-timeout", "transfer not finalized yet; retry to resume"))
                }
            };
            let held = self.state.lock().holdings[&submission.token.token_pub].evidence.clone();
            let mut evidence = held;
            evidence.chain.push(submission.record.clone());
            evidence.proofs.push(proof);
            evidence.certificates = submission.certificates.clone();
            let mut state = self.state.lock();
            self.record(&mut state, MerchantEvent::OnwardProved { evidence: evidence.clone() })?;
            items.push(evidence);
        }

        let bundle = PaymentBundle { items };
        let delivered = match &req.deliver {
            Some(invoice) => Some(
                MerchantClient::new(self.transport.clone(), invoice.merchant_endpoint.clone())
                    .pay(&invoice.invoice_id, &bundle)
                    .map_err(upstream)?,
            ),
            None => None,
        };
        Ok(OnwardOutcome { bundle, delivered })
    }

    /// Redeem held tokens. A retry of a bundle the issuer already settled
    /// returns the original receipt.
    pub fn redeem_holdings(&self, token_ids: Option<&[PublicKey]>) -> Result<RedemptionReceipt, Rejection> {
        let _op = self.op.lock();
        let items: Vec<TokenEvidence> = {
            let state = self.state.lock();
            let selected: BTreeSet<PublicKey> = match token_ids {
                Some(ids) => ids.iter().copied().collect(),
                None => state
                    .holdings
                    .iter()
                    .filter(|(_, h)| h.status == HoldingStatus::Held && h.onward.is_none())
                    .map(|(id, _)| *id)
                    .collect(),
            };
            if selected.is_empty() {
                return Err(reject("empty-selection", "nothing to redeem"));
            }
            let mut items = Vec::new();
            for id in &selected {
                match state.holdings.get(id) {
                    Some(h) if h.status == HoldingStatus::Held && h.onward.is_none() => items.push(h.evidence.clone()),
                    _ => {
                        return Err(reject("not-held", "token is not held")
                            .with_details(&serde_json::json!({ "token": id })))
                    }
                }
            }
            items
        };
        let request = RedemptionRequest::signed(&self.config.identity, items);
        let receipt = match self.issuer.redeem(&request) {
            Ok(r) => r,
            Err(ApiError::Rejected { rejection, .. }) if rejection.code == "double-redeem" => {
                let previous = rejection
                    .details
                    .as_ref()
                    .and_then(|d| d.get("receipt"))
                    .and_then(|r| serde_json::from_value::<RedemptionReceipt>(r.clone()).ok())
                    .filter(|r| r.bundle == request.digest());
                match previous {
                    Some(r) => r,
                    None => return Err(rejection),
                }
            }
            Err(e) => return Err(upstream(e)),
        };
        let mut state = self.state.lock();
        self.record(&mut state, MerchantEvent::Redeemed { receipt: receipt.clone() })?;
        Ok(receipt)
    }

    pub fn holdings(&self) -> Vec<HoldingView> {
        self.state
            .lock()
            .holdings
            .iter()
            .map(|(id, h)| HoldingView {
                token_id: *id,
                denomination: h.evidence.token.denomination,
                status: h.status,
                invoice_id: h.invoice_id.clone(),
                hops: h.evidence.chain.len() as u64,
                receipt_id: h.receipt_id.clone(),
            })
            .collect()
    }

    pub fn receipts(&self) -> Vec<RedemptionReceipt> {
        self.state.lock().receipts.clone()
    }

    fn admin(&self, request: &ApiRequest) -> bool {
        self.config.admin_token.as_deref().map_or(true, |t| bearer_matches(request, t))
    }
}

fn respond<T: Serialize>(result: Result<T, Rejection>) -> ApiResponse {
    match result {
        Ok(v) => ApiResponse::ok(&v),
        Err(r) => {
            let status = match r.code.as_str() {
                "unknown-invoice" => 404,
                "storage-failure" | "upstream-unreachable" => 503,
                _ => 409,
            };
            ApiResponse::reject(status, r)
        }
    }
}

impl Handler for MerchantService {
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
        let admin_only = !matches!(
            (request.method, segments.as_slice()),
            (Method::Post, ["v1", "invoices", _, "payment"]) | (Method::Get, ["v1", "invoices", _])
        );
        if admin_only && !self.admin(&request) {
            return ApiResponse::unauthorized();
        }
        match (request.method, segments.as_slice()) {
            (Method::Post, ["v1", "invoices"]) => {
                let req = body!(CreateInvoice);
                respond(self.create_invoice(req.amount, req.ttl_secs))
            }
            (Method::Get, ["v1", "invoices", id]) => {
                self.invoice(id).map_or_else(ApiResponse::not_found, |v| ApiResponse::ok(&v))
            }
            (Method::Post, ["v1", "invoices", id, "payment"]) => respond(self.accept_payment(id, body!(PaymentBundle))),
            (Method::Post, ["v1", "onward"]) => respond(self.transfer_onward(&body!(OnwardRequest))),
            (Method::Post, ["v1", "redeem"]) => {
                let req = body!(RedeemRequest);
                respond(self.redeem_holdings(req.token_ids.as_deref()))
            }
            (Method::Get, ["v1", "holdings"]) => ApiResponse::ok(&self.holdings()),
            _ => ApiResponse::not_found(),
        }
    }
}
