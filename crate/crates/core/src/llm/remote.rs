use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatClient, ChatRequest, Direction, LlmError, SessionLog};
use crate::http::{post_with_retry, JsonTransport, RetryPolicy, TransportError};

pub const CHAT_API_KEY_ENV: &str = "CONVREC_CHAT_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    pub endpoint: String,
    pub model: String,
    /// 0 disables rate limiting.
    #[serde(default)]
    pub requests_per_minute: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_retries() -> u32 {
    5
}

fn default_timeout() -> u64 {
    120
}

/// Token bucket refilled continuously at `rate` tokens per second, holding
/// at most `capacity`.
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(requests_per_minute: f64) -> Self {
        let rate = requests_per_minute / 60.0;
        let capacity = rate.max(1.0);
        Self {
            rate,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// How long the caller must wait before a token is available, taking it
    /// if one is. Zero means a token was taken.
    pub fn try_take(&self) -> Duration {
        let mut s = self.state.lock().expect("rate limiter lock");
        let now = Instant::now();
        s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.rate).min(self.capacity);
        s.1 = now;
        if s.0 >= 1.0 {
            s.0 -= 1.0;
            Duration::ZERO
        } else {
            Duration::from_secs_f64((1.0 - s.0) / self.rate)
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = self.try_take();
            if wait.is_zero() {
                return;
            }
            std::thread::sleep(wait);
        }
    }
}

/// Chat endpoint speaking `{model, temperature, messages}` →
/// `{choices: [{message: {content}}]}`.
pub struct RemoteChatClient {
    config: RemoteChatConfig,
    api_key: String,
    transport: Arc<dyn JsonTransport>,
    limiter: Option<TokenBucket>,
    retry: RetryPolicy,
}

impl RemoteChatClient {
    pub fn from_env(config: RemoteChatConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(CHAT_API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::Config(format!("{CHAT_API_KEY_ENV} is not set")))?;
        let transport = crate::http::ReqwestTransport::new(Duration::from_secs(config.timeout_secs))
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self::with_transport(config, api_key, Arc::new(transport)))
    }

    pub fn with_transport(config: RemoteChatConfig, api_key: String, transport: Arc<dyn JsonTransport>) -> Self {
        let limiter = (config.requests_per_minute > 0.0).then(|| TokenBucket::per_minute(config.requests_per_minute));
        let retry = RetryPolicy {
            max_retries: config.max_retries,
            ..RetryPolicy::default()
        };
        Self {
            config,
            api_key,
            transport,
            limiter,
            retry,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

fn parse_choice(v: &Value) -> Result<String, LlmError> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".into()))
}

impl ChatClient for RemoteChatClient {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &ChatRequest, log: &mut SessionLog) -> Result<String, LlmError> {
        request.validate()?;
        let body = json!({
            "model": self.config.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        log.push(request.turn, Direction::Request, request.last_user());
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let turn = request.turn;
        let result = post_with_retry(
            self.transport.as_ref(),
            &self.config.endpoint,
            &self.api_key,
            &body,
            &self.retry,
            |n, e| {
                tracing::warn!(retry = n, error = %e, "chat request failed, retrying");
                log.push(turn, Direction::Retry, e.to_string());
                if let Some(l) = &self.limiter {
                    l.acquire();
                }
            },
        );
        match result {
            Ok(v) => {
                let text = parse_choice(&v)?;
                log.push(turn, Direction::Response, text.clone());
                Ok(text)
            }
            Err(e) => {
                log.push(turn, Direction::Error, e.to_string());
                Err(match e {
                    e @ TransportError::Status { .. } if e.is_auth() => LlmError::Auth(e.to_string()),
                    TransportError::Decode(m) => LlmError::Protocol(m),
                    other => LlmError::Exhausted {
                        attempts: log.count(Direction::Retry) as u32 + 1,
                        message: other.to_string(),
                    },
                })
            }
        }
    }
}
