use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};

use super::{ApiRequest, ApiResponse, Handler, Method};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("endpoint {0} unreachable")]
    Unreachable(String),
    #[error("http: {0}")]
    Http(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &str, request: ApiRequest) -> Result<ApiResponse, TransportError>;
}

/// Routes by endpoint name to handlers in the same process.
#[derive(Default)]
pub struct InProcessTransport {
    handlers: RwLock<BTreeMap<String, Arc<dyn Handler>>>,
    down: RwLock<Vec<String>>,
}

impl InProcessTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn register(&self, endpoint: &str, handler: Arc<dyn Handler>) {
        self.handlers.write().insert(endpoint.to_string(), handler);
    }

    /// Simulate an outage (or recovery) of one endpoint.
    pub fn set_down(&self, endpoint: &str, down: bool) {
        let mut list = self.down.write();
        list.retain(|e| e != endpoint);
        if down {
            list.push(endpoint.to_string());
        }
    }
}

impl Transport for InProcessTransport {
    fn send(&self, endpoint: &str, request: ApiRequest) -> Result<ApiResponse, TransportError> {
        if self.down.read().iter().any(|e| e == endpoint) {
            return Err(TransportError::Unreachable(endpoint.to_string()));
        }
        let handler = self.handlers.read().get(endpoint).cloned();
        match handler {
            Some(h) => Ok(h.handle(request)),
            None => Err(TransportError::Unreachable(endpoint.to_string())),
        }
    }
}

/// Blocking HTTP client. Endpoints are base URLs such as `http://127.0.0.1:7001`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client");
        Self { client }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for HttpTransport {
    fn send(&self, endpoint: &str, request: ApiRequest) -> Result<ApiResponse, TransportError> {
        let url = format!("{}{}", endpoint.trim_end_matches('/'), request.path);
        let mut builder = match request.method {
            Method::Get => self.client.get(&url),
            Method::Post => self.client.post(&url).header("content-type", "application/json").body(request.body),
        };
        if let Some(token) = &request.bearer {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().map_err(|e| {
            if e.is_connect() || e.is_timeout() {
                TransportError::Unreachable(endpoint.to_string())
            } else {
                TransportError::Http(e.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body = response.bytes().map_err(|e| TransportError::Http(e.to_string()))?.to_vec();
        Ok(ApiResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedExchange {
    pub endpoint: String,
    pub method: Method,
    pub path: String,
    pub request: Vec<u8>,
    pub response: Vec<u8>,
}

impl CapturedExchange {
    /// Everything that crossed the wire, as one byte string.
    pub fn wire_bytes(&self) -> Vec<u8> {
        let mut out = self.path.clone().into_bytes();
        out.push(b'\n');
        out.extend_from_slice(&self.request);
        out.push(b'\n');
        out.extend_from_slice(&self.response);
        out
    }
}

/// Records every exchange passing through an inner transport.
pub struct CaptureTransport {
    inner: Arc<dyn Transport>,
    log: Mutex<Vec<CapturedExchange>>,
}

impl CaptureTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Arc<Self> {
        Arc::new(Self { inner, log: Mutex::new(Vec::new()) })
    }

    pub fn exchanges(&self) -> Vec<CapturedExchange> {
        self.log.lock().clone()
    }

    pub fn clear(&self) {
        self.log.lock().clear();
    }
}

impl Transport for CaptureTransport {
    fn send(&self, endpoint: &str, request: ApiRequest) -> Result<ApiResponse, TransportError> {
        let (method, path, body) = (request.method, request.path.clone(), request.body.clone());
        let result = self.inner.send(endpoint, request);
        let response = result.as_ref().map(|r| r.body.clone()).unwrap_or_default();
        self.log.lock().push(CapturedExchange { endpoint: endpoint.to_string(), method, path, request: body, response });
        result
    }
}
