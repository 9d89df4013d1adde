//! Chat-completion clients: a remote HTTP client and an offline simulated
//! recommender that answers the same prompts deterministically.

mod remote;
mod simulated;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{RemoteChatClient, RemoteChatConfig, TokenBucket, CHAT_API_KEY_ENV};
pub use simulated::{ParsedHistory, SimulatedRecommender, SimulatorConfig};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("chat history is empty")]
    EmptyHistory,
    #[error("chat history must end with a user message")]
    NotUserTurn,
    #[error("message {0} has empty content")]
    EmptyMessage(usize),
    #[error("chat client misconfigured: {0}")]
    Config(String),
    #[error("authentication rejected by chat endpoint: {0}")]
    Auth(String),
    #[error("chat request failed after {attempts} attempt(s): {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("unexpected chat response: {0}")]
    Protocol(String),
}

impl LlmError {
    /// Errors that no amount of retrying or resuming will fix.
    pub fn is_configuration(&self) -> bool {
        matches!(self, LlmError::Config(_) | LlmError::Auth(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
}

/// One completion call. `seed` and `turn` let offline clients derive
/// reproducible randomness; remote clients ignore them.
#[derive(Clone, Copy, Debug)]
pub struct ChatRequest<'a> {
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
    pub seed: u64,
    pub turn: usize,
}

impl ChatRequest<'_> {
    pub fn validate(&self) -> Result<(), LlmError> {
        let last = self.messages.last().ok_or(LlmError::EmptyHistory)?;
        if last.role != Role::User {
            return Err(LlmError::NotUserTurn);
        }
        if let Some(i) = self.messages.iter().position(|m| m.content.trim().is_empty()) {
            return Err(LlmError::EmptyMessage(i));
        }
        Ok(())
    }

    pub fn last_user(&self) -> &str {
        self.messages.last().map_or("", |m| m.content.as_str())
    }
}

pub trait ChatClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest, log: &mut SessionLog) -> Result<String, LlmError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Request,
    Response,
    Retry,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub turn: usize,
    pub direction: Direction,
    pub content: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Per-session record of client traffic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub entries: Vec<LogEntry>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl SessionLog {
    pub fn push(&mut self, turn: usize, direction: Direction, content: impl Into<String>) {
        self.entries.push(LogEntry {
            turn,
            direction,
            content: content.into(),
            timestamp: now_ms(),
        });
    }

    pub fn count(&self, direction: Direction) -> usize {
        self.entries.iter().filter(|e| e.direction == direction).count()
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}
