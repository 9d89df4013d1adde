use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{normalize, EmbeddingError};
use crate::hashing::fnv1a;
use crate::http::{post_with_retry, JsonTransport, RetryPolicy};
use crate::text::tokenize;

pub const EMBED_API_KEY_ENV: &str = "CONVREC_EMBED_API_KEY";

/// Maps document text to vectors of a fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// One vector per input text, in order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// Offline provider: hashed bag of words, L2-normalized.
#[derive(Clone, Debug)]
pub struct LocalHashEmbedder {
    dim: usize,
}

impl LocalHashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for tok in tokenize(text) {
            v[self.bucket(&tok)] += 1.0;
            any = true;
        }
        if !any {
            return Err(EmbeddingError::EmptyDocument);
        }
        normalize(v)
    }
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn name(&self) -> &str {
        "local-hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_batch() -> usize {
    64
}

fn default_timeout() -> u64 {
    60
}

/// Generic JSON embedding endpoint:
/// `{"input": [...], "model": m}` → `{"data": [{"embedding": [...]}, ...]}`.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    api_key: String,
    transport: Arc<dyn JsonTransport>,
    retry: RetryPolicy,
}

impl RemoteEmbedder {
    /// Reads the API key from the environment.
    pub fn from_env(config: RemoteEmbedderConfig) -> Result<Self, EmbeddingError> {
        let api_key = std::env::var(EMBED_API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| EmbeddingError::Config(format!("{EMBED_API_KEY_ENV} is not set")))?;
        let transport = crate::http::ReqwestTransport::new(std::time::Duration::from_secs(config.timeout_secs))
            .map_err(|e| EmbeddingError::Config(e.to_string()))?;
        Ok(Self::with_transport(config, api_key, Arc::new(transport)))
    }

    pub fn with_transport(config: RemoteEmbedderConfig, api_key: String, transport: Arc<dyn JsonTransport>) -> Self {
        Self {
            config,
            api_key,
            transport,
            retry: RetryPolicy {
                max_retries: 2,
                ..RetryPolicy::default()
            },
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, String> {
        let body = json!({ "input": texts, "model": self.config.model });
        let resp = post_with_retry(
            self.transport.as_ref(),
            &self.config.endpoint,
            &self.api_key,
            &body,
            &self.retry,
            |n, e| tracing::warn!(retry = n, error = %e, "embedding request failed, retrying"),
        )
        .map_err(|e| e.to_string())?;
        parse_embeddings(&resp, texts.len(), self.config.dim)
    }
}

fn parse_embeddings(resp: &Value, expected: usize, dim: usize) -> Result<Vec<Vec<f64>>, String> {
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or("response has no data array")?;
    if data.len() != expected {
        return Err(format!("expected {expected} embeddings, got {}", data.len()));
    }
    data.iter()
        .map(|d| {
            let v: Vec<f64> = d
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or("entry has no embedding")?
                .iter()
                .map(|x| x.as_f64().ok_or("non-numeric embedding component"))
                .collect::<Result<_, _>>()?;
            if v.len() != dim {
                return Err(format!("expected dimension {dim}, got {}", v.len()));
            }
            Ok(v)
        })
        .collect()
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    /// Failures surface as [`EmbeddingError::Provider`] with an empty id
    /// list; the catalog layer fills in which items were affected.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            let vecs = self.embed_batch(chunk).map_err(|message| EmbeddingError::Provider {
                provider: self.config.model.clone(),
                failed: Vec::new(),
                message,
            })?;
            out.extend(vecs);
        }
        Ok(out)
    }
}
