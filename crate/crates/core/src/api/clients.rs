//! Typed clients over a [`Transport`].

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{ApiError, ApiRequest, Transport};
use crate::canonical::Digest;
use crate::clock::Clock;
use crate::crypto::PublicKey;
use crate::merchant::{
    CreateInvoice, HoldingView, Invoice, InvoiceView, OnwardOutcome, OnwardRequest, PaymentBundle, RedeemRequest,
};
use crate::issuer::{
    AccreditationRequest, AccreditationResponse, ApproveClaim, AuditReport, ClaimRecord, IssuerKeys,
    RedemptionReceipt, RedemptionRequest, RevokeRequest, VendorRecord, VendorRegistration,
};
use crate::ledger::{Checkpoint, LedgerConfig};
use crate::relay::{PendingReceipt, ProofStatus, TokenStatus};
use crate::token::{TransferSubmission, VendorCertificate};

/// One endpoint plus an optional bearer token.
#[derive(Clone)]
pub struct Client {
    transport: Arc<dyn Transport>,
    endpoint: String,
    bearer: Option<String>,
}

impl Client {
    pub fn new(transport: Arc<dyn Transport>, endpoint: impl Into<String>) -> Self {
        Self { transport, endpoint: endpoint.into(), bearer: None }
    }

    pub fn with_bearer(mut self, token: impl Into<String>) -> Self {
        self.bearer = Some(token.into());
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ApiError> {
        self.send(ApiRequest::get(path))
    }

    pub fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ApiError> {
        self.send(ApiRequest::post(path, body))
    }

    fn send<T: DeserializeOwned>(&self, request: ApiRequest) -> Result<T, ApiError> {
        let request = request.with_bearer(self.bearer.as_deref());
        self.transport.send(&self.endpoint, request)?.into_result()
    }
}

#[derive(Clone)]
pub struct RelayClient(pub Client);

impl RelayClient {
    pub fn new(transport: Arc<dyn Transport>, endpoint: impl Into<String>) -> Self {
        Self(Client::new(transport, endpoint))
    }

    pub fn submit(&self, submission: &TransferSubmission) -> Result<PendingReceipt, ApiError> {
        self.0.post("/v1/transfers", submission)
    }

    pub fn proof(&self, record: &Digest) -> Result<ProofStatus, ApiError> {
        self.0.get(&format!("/v1/proofs/{}", record.to_b64()))
    }

    pub fn token(&self, token_pub: &PublicKey) -> Result<TokenStatus, ApiError> {
        self.0.get(&format!("/v1/tokens/{}", token_pub.to_b64()))
    }

    pub fn latest_checkpoint(&self) -> Result<Checkpoint, ApiError> {
        self.0.get("/v1/checkpoints/latest")
    }

    pub fn checkpoint(&self, height: u64) -> Result<Checkpoint, ApiError> {
        self.0.get(&format!("/v1/checkpoints/{height}"))
    }

    pub fn ledger(&self) -> Result<LedgerConfig, ApiError> {
        self.0.get("/v1/ledger")
    }

    /// Poll until the record is no longer pending or the retries run out.
    /// The last status seen is returned either way.
    pub fn await_proof(&self, record: &Digest, clock: &dyn Clock, backoff: Backoff) -> Result<ProofStatus, ApiError> {
        let mut delay = backoff.base_ms;
        let mut attempt = 0;
        loop {
            let status = self.proof(record)?;
            if !matches!(status, ProofStatus::Pending { .. }) || attempt == backoff.retries {
                return Ok(status);
            }
            clock.sleep_ms(delay);
            delay = delay.saturating_mul(2);
            attempt += 1;
        }
    }
}

/// Exponential polling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Backoff {
    pub base_ms: u64,
    pub retries: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Self { base_ms: 250, retries: 8 }
    }
}

#[derive(Clone)]
pub struct IssuerClient(pub Client);

impl IssuerClient {
    pub fn new(transport: Arc<dyn Transport>, endpoint: impl Into<String>) -> Self {
        Self(Client::new(transport, endpoint))
    }

    /// Same endpoint, authorised for administrative routes.
    pub fn admin(&self, token: &str) -> Self {
        Self(self.0.clone().with_bearer(token))
    }

    pub fn keys(&self) -> Result<IssuerKeys, ApiError> {
        self.0.get("/v1/keys")
    }

    pub fn audit(&self) -> Result<AuditReport, ApiError> {
        self.0.get("/v1/audit")
    }

    pub fn approve_claim(&self, claim: &ApproveClaim) -> Result<ClaimRecord, ApiError> {
        self.0.post("/v1/claims", claim)
    }

    pub fn freeze_claim(&self, claim_id: &str) -> Result<ClaimRecord, ApiError> {
        self.0.post(&format!("/v1/claims/{claim_id}/freeze"), &serde_json::json!({}))
    }

    pub fn accredit(&self, request: &AccreditationRequest) -> Result<AccreditationResponse, ApiError> {
        self.0.post("/v1/accreditations", request)
    }

    pub fn register_vendor(&self, registration: &VendorRegistration) -> Result<VendorCertificate, ApiError> {
        self.0.post("/v1/vendors", registration)
    }

    pub fn vendor(&self, vendor_id: &PublicKey) -> Result<VendorRecord, ApiError> {
        self.0.get(&format!("/v1/vendors/{}", vendor_id.to_b64()))
    }

    pub fn revoke_vendor(&self, vendor_id: &PublicKey, reason: &str) -> Result<Vec<PublicKey>, ApiError> {
        self.0.post(&format!("/v1/vendors/{}/revoke", vendor_id.to_b64()), &RevokeRequest { reason: reason.into() })
    }

    pub fn redeem(&self, request: &RedemptionRequest) -> Result<RedemptionReceipt, ApiError> {
        self.0.post("/v1/redemptions", request)
    }
}

#[derive(Clone)]
pub struct MerchantClient(pub Client);

impl MerchantClient {
    pub fn new(transport: Arc<dyn Transport>, endpoint: impl Into<String>) -> Self {
        Self(Client::new(transport, endpoint))
    }

    pub fn admin(&self, token: &str) -> Self {
        Self(self.0.clone().with_bearer(token))
    }

    pub fn create_invoice(&self, request: &CreateInvoice) -> Result<Invoice, ApiError> {
        self.0.post("/v1/invoices", request)
    }

    pub fn invoice(&self, invoice_id: &str) -> Result<InvoiceView, ApiError> {
        self.0.get(&format!("/v1/invoices/{invoice_id}"))
    }

    pub fn pay(&self, invoice_id: &str, bundle: &PaymentBundle) -> Result<InvoiceView, ApiError> {
        self.0.post(&format!("/v1/invoices/{invoice_id}/payment"), bundle)
    }

    pub fn onward(&self, request: &OnwardRequest) -> Result<OnwardOutcome, ApiError> {
        self.0.post("/v1/onward", request)
    }

    pub fn redeem(&self, request: &RedeemRequest) -> Result<RedemptionReceipt, ApiError> {
        self.0.post("/v1/redeem", request)
    }

    pub fn holdings(&self) -> Result<Vec<HoldingView>, ApiError> {
        self.0.get("/v1/holdings")
    }
}
