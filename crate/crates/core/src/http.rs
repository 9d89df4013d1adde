//! JSON-over-HTTP plumbing shared by the remote chat and embedding clients.
//!
//! The wire is abstracted behind [`JsonTransport`] so retry behaviour can be
//! exercised with a scripted transport instead of a live endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("undecodable response: {0}")]
    Decode(String),
}

impl TransportError {
    /// Timeouts, throttling, server errors and connection failures.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => matches!(status, 408 | 429 | 500..=599),
            TransportError::Network(_) => true,
            TransportError::Decode(_) => false,
        }
    }

    pub fn is_auth(&self) -> bool {
        matches!(self, TransportError::Status { status: 401 | 403, .. })
    }
}

pub trait JsonTransport: Send + Sync {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<Value, TransportError>;
}

/// Blocking reqwest transport with bearer authentication.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(Self { client })
    }
}

impl JsonTransport for ReqwestTransport {
    fn post_json(&self, url: &str, api_key: &str, body: &Value) -> Result<Value, TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(api_key)
            .json(body)
            .send()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// Exponential backoff: `base · 2^attempt`, capped at `max_delay_ms`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Posts `body`, retrying transient failures per `policy`. `on_retry` sees
/// the retry number (1-based) and the error that triggered it.
pub fn post_with_retry(
    transport: &dyn JsonTransport,
    url: &str,
    api_key: &str,
    body: &Value,
    policy: &RetryPolicy,
    mut on_retry: impl FnMut(u32, &TransportError),
) -> Result<Value, TransportError> {
    let mut attempt = 0;
    loop {
        match transport.post_json(url, api_key, body) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt < policy.max_retries => {
                attempt += 1;
                on_retry(attempt, &e);
                std::thread::sleep(policy.delay(attempt - 1));
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use std::collections::VecDeque;
    use std::sync::Mutex;

    use super::*;

    /// Replays a fixed script of responses and records every request body.
    pub struct ScriptedTransport {
        script: Mutex<VecDeque<Result<Value, TransportError>>>,
        pub requests: Mutex<Vec<Value>>,
    }

    impl ScriptedTransport {
        pub fn new(script: Vec<Result<Value, TransportError>>) -> Self {
            Self {
                script: Mutex::new(script.into()),
                requests: Mutex::new(Vec::new()),
            }
        }

        pub fn calls(&self) -> usize {
            self.requests.lock().unwrap().len()
        }

        pub fn requests(&self) -> Vec<Value> {
            self.requests.lock().unwrap().clone()
        }
    }

    impl JsonTransport for ScriptedTransport {
        fn post_json(&self, _url: &str, _key: &str, body: &Value) -> Result<Value, TransportError> {
            self.requests.lock().unwrap().push(body.clone());
            self.script
                .lock()
                .unwrap()
                .pop_front()
                .unwrap_or_else(|| Err(TransportError::Network("script exhausted".into())))
        }
    }

    pub fn unavailable() -> TransportError {
        TransportError::Status {
            status: 503,
            body: "busy".into(),
        }
    }
}
