//! Chat-completions transports: live HTTP, recording, and offline replay.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ProposerError;

/// Environment variable holding the bearer credential. It is read at call
/// time and never written anywhere.
pub const API_KEY_ENV: &str = "RWSEARCH_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// Request body in the chat-completions wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_format: Option<Value>,
}

impl ChatRequest {
    /// Stable digest of the serialized request, used to match replays.
    pub fn key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("request serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub trait ChatTransport {
    /// Returns the assistant message content.
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProposerError>;
}

/// Live transport over HTTP with exponential-backoff retries.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    attempts: u32,
    backoff: Duration,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            endpoint: endpoint.into(),
            attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// Initial delay between attempts; doubles after each failure.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, (bool, String)> {
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request).map_err(|e| (true, e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, e.to_string()))?;
        if status != 200 {
            let retry = status == 429 || status >= 500;
            return Err((retry, format!("HTTP {status}: {body}")));
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| (false, format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or((false, "response has no choices[0].message.content".to_string()))
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProposerError> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.attempt(request) {
                Ok(content) => return Ok(content),
                Err((retry, message)) => {
                    last = message;
                    if !retry {
                        break;
                    }
                    if attempt < self.attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(ProposerError::Transport(last))
    }
}

/// One request/response pair as stored in a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub request: ChatRequest,
    pub response: String,
}

/// Forwards to an inner transport and appends every exchange to a JSONL
/// transcript.
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
}

impl<T: ChatTransport> RecordingTransport<T> {
    pub fn new(inner: T, path: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            path: path.into(),
        }
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProposerError> {
        let response = self.inner.complete(request)?;
        let entry = TranscriptEntry {
            key: request.key(),
            request: request.clone(),
            response: response.clone(),
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| ProposerError::Io(format!("{}: {e}", self.path.display())))?;
        let line = serde_json::to_string(&entry).expect("entry serializes");
        writeln!(file, "{line}").map_err(|e| ProposerError::Io(e.to_string()))?;
        Ok(response)
    }
}

/// Serves recorded responses by request digest. Identical requests are
/// answered in recording order.
#[derive(Debug, Default)]
pub struct ReplayTransport {
    responses: BTreeMap<String, VecDeque<String>>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut responses: BTreeMap<String, VecDeque<String>> = BTreeMap::new();
        for e in entries {
            responses.entry(e.key).or_default().push_back(e.response);
        }
        Self { responses }
    }

    pub fn load(path: &Path) -> Result<Self, ProposerError> {
        let file = File::open(path).map_err(|e| ProposerError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ProposerError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line)
                .map_err(|e| ProposerError::Io(format!("{} line {}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }
}

impl ChatTransport for ReplayTransport {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProposerError> {
        let key = request.key();
        self.responses
            .get_mut(&key)
            .and_then(VecDeque::pop_front)
            .ok_or(ProposerError::ReplayMiss(key))
    }
}

impl<T: ChatTransport + ?Sized> ChatTransport for Box<T> {
    fn complete(&mut self, request: &ChatRequest) -> Result<String, ProposerError> {
        (**self).complete(request)
    }
}
