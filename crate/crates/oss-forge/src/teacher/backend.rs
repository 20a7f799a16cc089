//! Teacher backends: a JSON chat-completion HTTP client, a fixture-table
//! mock, and a deterministic offline synthesizer.
//!
//! All backends implement [`TeacherBackend`]. Errors are classified so the
//! retry loop in the driver can tell transient failures (retry with backoff)
//! from permanent ones (record an error response) and fatal ones
//! (authentication, which aborts the run).

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::error::{ForgeError, Result};
use crate::jsonl::read_jsonl;

use super::{Decoding, GenerationRequest};

/// Hex SHA-256 of a rendered prompt; the key of the mock fixture table and
/// the request identifier in response logs.
pub fn prompt_sha256(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// Successful backend reply.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub raw_text: String,
    /// True when the backend stopped at its token limit.
    pub truncated: bool,
}

/// Classified backend failure.
#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("rate limited")]
    RateLimited,
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("permanent failure: {0}")]
    Permanent(String),
}

/// A teacher model reachable through an async completion call.
#[async_trait]
pub trait TeacherBackend: Send + Sync {
    /// Stable identifier recorded on every response (e.g. `http:gpt-4`).
    fn id(&self) -> &str;

    async fn complete(&self, request: &GenerationRequest) -> std::result::Result<BackendReply, BackendError>;
}

// ---------------------------------------------------------------------------
// HTTP chat-completion backend
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_p: Option<f64>,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponseBody {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: String,
}

/// Chat-completion client for an OpenAI-style `/chat/completions` endpoint.
/// The auth token is read from an environment variable, never from config.
pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    backend_id: String,
}

impl HttpBackend {
    pub fn new(endpoint: &str, model: &str, token_env: &str, timeout: Duration) -> Result<Self> {
        let token = std::env::var(token_env).ok();
        if token.is_none() {
            warn!(var = token_env, "auth token variable not set; sending unauthenticated requests");
        }
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ForgeError::Backend(format!("failed to build HTTP client: {e}")))?;
        Ok(HttpBackend {
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token,
            backend_id: format!("http:{model}"),
        })
    }
}

#[async_trait]
impl TeacherBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.backend_id
    }

    async fn complete(&self, request: &GenerationRequest) -> std::result::Result<BackendReply, BackendError> {
        let (temperature, top_p) = match request.decoding {
            Decoding::Greedy => (0.0, None),
            Decoding::Sampled { temperature, top_p } => (temperature, Some(top_p)),
        };
        let body = ChatRequestBody {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature,
            top_p,
            max_tokens: request.max_new_tokens,
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Transient(format!("request timed out: {e}"))
            } else {
                BackendError::Transient(format!("request failed: {e}"))
            }
        })?;

        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("HTTP {status}")));
        }
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited);
        }
        if status.as_u16() == 408 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Permanent(format!("HTTP {status}")));
        }

        let parsed: ChatResponseBody = response
            .json()
            .await
            .map_err(|e| BackendError::Permanent(format!("malformed completion response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Permanent("completion response had no choices".into()))?;
        Ok(BackendReply {
            raw_text: choice.message.content,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}

// ---------------------------------------------------------------------------
// Fixture-table mock backend
// ---------------------------------------------------------------------------

/// One record of the mock fixture file: prompt hash to raw response text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockFixture {
    pub prompt_sha256: String,
    pub raw_text: String,
    #[serde(default)]
    pub truncated: bool,
}

/// Deterministic mock: answers from a fixture table and instruments
/// concurrency (in-flight high-water mark) for tests and audits.
pub struct MockBackend {
    fixtures: HashMap<String, (String, bool)>,
    latency: Duration,
    in_flight: AtomicUsize,
    high_water: AtomicUsize,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(fixtures: impl IntoIterator<Item = MockFixture>) -> Self {
        MockBackend {
            fixtures: fixtures
                .into_iter()
                .map(|f| (f.prompt_sha256, (f.raw_text, f.truncated)))
                .collect(),
            latency: Duration::ZERO,
            in_flight: AtomicUsize::new(0),
            high_water: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_fixture_file(path: &Path) -> Result<Self> {
        let fixtures: Vec<MockFixture> = read_jsonl(path)?;
        Ok(MockBackend::new(fixtures))
    }

    /// Adds an artificial per-call delay so concurrency is observable.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Highest number of simultaneously in-flight `complete` calls observed.
    pub fn high_water_mark(&self) -> usize {
        self.high_water.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

struct InFlightGuard<'a>(&'a AtomicUsize);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

#[async_trait]
impl TeacherBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    async fn complete(&self, request: &GenerationRequest) -> std::result::Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.high_water.fetch_max(current, Ordering::SeqCst);
        let _guard = InFlightGuard(&self.in_flight);
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let key = prompt_sha256(&request.prompt);
        match self.fixtures.get(&key) {
            Some((raw_text, truncated)) => Ok(BackendReply {
                raw_text: raw_text.clone(),
                truncated: *truncated,
            }),
            None => Err(BackendError::Permanent(format!("no fixture for prompt hash {key}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Offline deterministic synthesizer
// ---------------------------------------------------------------------------

/// Fixture-free offline backend: synthesizes a well-formed response from the
/// seed itself. Output is a pure function of the request, so full pipeline
/// runs stay byte-reproducible without any fixture file.
pub struct EchoBackend {
    problem_marker: String,
    solution_marker: String,
    latency: Duration,
}

impl EchoBackend {
    pub fn new(problem_marker: &str, solution_marker: &str) -> Self {
        EchoBackend {
            problem_marker: problem_marker.to_string(),
            solution_marker: solution_marker.to_string(),
            latency: Duration::ZERO,
        }
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }
}

#[async_trait]
impl TeacherBackend for EchoBackend {
    fn id(&self) -> &str {
        "mock-echo"
    }

    async fn complete(&self, request: &GenerationRequest) -> std::result::Result<BackendReply, BackendError> {
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
        let digest = prompt_sha256(&request.prompt);
        let language = &request.seed.language;
        let raw_text = format!(
            "{problem}\nWrite a self-contained {language} exercise (variant {tag}) that practices \
             the constructs appearing in the snippet below. The submitted program must reproduce \
             the snippet's behavior exactly.\n\n{solution}\n```{language}\n{seed}\n```\n",
            problem = self.problem_marker,
            solution = self.solution_marker,
            tag = &digest[..12],
            seed = request.seed.text,
        );
        Ok(BackendReply {
            raw_text,
            truncated: false,
        })
    }
}
