//! Wire layer shared by every service: request/response envelopes, the
//! rejection body, and a transport abstraction so the same clients talk to
//! services in-process (tests) or over HTTP (deployment).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canonical::{from_canonical, to_canonical};

pub mod clients;
pub mod server;
pub mod transport;

pub use transport::{CaptureTransport, CapturedExchange, HttpTransport, InProcessTransport, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub body: Vec<u8>,
    pub bearer: Option<String>,
}

impl ApiRequest {
    pub fn get(path: impl Into<String>) -> Self {
        Self { method: Method::Get, path: path.into(), body: Vec::new(), bearer: None }
    }

    pub fn post<T: Serialize + ?Sized>(path: impl Into<String>, body: &T) -> Self {
        Self { method: Method::Post, path: path.into(), body: to_canonical(body), bearer: None }
    }

    pub fn with_bearer(mut self, token: Option<&str>) -> Self {
        self.bearer = token.map(str::to_string);
        self
    }

    /// Path split on `/` with the query string dropped.
    pub fn segments(&self) -> Vec<&str> {
        let path = self.path.split('?').next().unwrap_or("");
        path.split('/').filter(|s| !s.is_empty()).collect()
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T, ApiResponse> {
        from_canonical(&self.body)
            .map_err(|e| ApiResponse::reject(400, Rejection::new("malformed-request", e.to_string())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl ApiResponse {
    pub fn ok<T: Serialize + ?Sized>(body: &T) -> Self {
        Self { status: 200, body: to_canonical(body) }
    }

    pub fn reject(status: u16, rejection: Rejection) -> Self {
        Self { status, body: to_canonical(&rejection) }
    }

    pub fn not_found() -> Self {
        Self::reject(404, Rejection::new("not-found", "no such resource"))
    }

    pub fn unauthorized() -> Self {
        Self::reject(401, Rejection::new("unauthorized", "admin token required"))
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Decode a success body, or surface the rejection.
    pub fn into_result<T: DeserializeOwned>(self) -> Result<T, ApiError> {
        if self.is_success() {
            return from_canonical(&self.body).map_err(|e| ApiError::Decode(e.to_string()));
        }
        match from_canonical::<Rejection>(&self.body) {
            Ok(rejection) => Err(ApiError::Rejected { status: self.status, rejection }),
            Err(_) => Err(ApiError::Decode(format!("status {} with unreadable body", self.status))),
        }
    }
}

/// Error body for every non-2xx response. `code` is a stable kebab-case
/// reason; `details` carries structured context (offending token ids,
/// nearest composable amounts, an existing receipt, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl Rejection {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code: code.into(), message: message.into(), details: None }
    }

    pub fn with_details<T: Serialize>(mut self, details: &T) -> Self {
        self.details = Some(serde_json::to_value(details).expect("details are JSON"));
        self
    }

    pub fn details_as<T: DeserializeOwned>(&self) -> Option<T> {
        self.details.clone().and_then(|d| serde_json::from_value(d).ok())
    }
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApiError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("rejected ({status}): {rejection}")]
    Rejected { status: u16, rejection: Rejection },
    #[error("undecodable response: {0}")]
    Decode(String),
}

impl ApiError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ApiError::Rejected { rejection, .. } => Some(&rejection.code),
            _ => None,
        }
    }

    pub fn rejection(&self) -> Option<&Rejection> {
        match self {
            ApiError::Rejected { rejection, .. } => Some(rejection),
            _ => None,
        }
    }
}

impl From<TransportError> for ApiError {
    fn from(e: TransportError) -> Self {
        ApiError::Transport(e.to_string())
    }
}

/// A service reachable through a [`Transport`].
pub trait Handler: Send + Sync {
    fn handle(&self, request: ApiRequest) -> ApiResponse;
}

/// Constant-time comparison for bearer tokens.
pub fn bearer_matches(request: &ApiRequest, expected: &str) -> bool {
    let Some(given) = request.bearer.as_deref() else { return false };
    let (a, b) = (given.as_bytes(), expected.as_bytes());
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
