//! Uniform client over annotator and judge backends.
//!
//! Agents are reached either over an OpenAI-compatible HTTP endpoint or
//! through a scripted fixture file (`scripted:<path>`). Every completion
//! goes through the response cache, and offline mode refuses any live
//! dispatch.

pub mod cache;
pub mod http;
pub mod scripted;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

pub use cache::{CacheKey, ResponseCache};
pub use http::HttpBackend;
pub use scripted::{FixtureEntry, FixtureFile, ScriptedBackend};

use crate::parser::{extract_thinking, AnnotationRecord, ParseFailure, ThinkingMarkers};
use crate::prompt::{sha256_hex, PromptText};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("scripted fixture has no entry for agent `{agent}` prompt {prompt_hash}")]
    ScriptedMiss { agent: String, prompt_hash: String },
    #[error("offline miss: no cached response for agent `{agent}` prompt {prompt_hash}")]
    OfflineMiss { agent: String, prompt_hash: String },
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("gateway config: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<GatewayError> },
}

impl GatewayError {
    /// Errors that stop the whole run rather than failing one case.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            GatewayError::ScriptedMiss { .. }
                | GatewayError::OfflineMiss { .. }
                | GatewayError::Fixture(_)
                | GatewayError::Config(_)
        )
    }

    fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) => true,
            GatewayError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    /// Primary annotator; the first two in config order are A and B.
    Annotator,
    /// Third annotator; breaks majority ties and judges when no
    /// dedicated judge is configured.
    Tiebreaker,
    /// Judge only; does not annotate.
    Judge,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Http(String),
    Scripted(PathBuf),
}

impl Endpoint {
    pub fn parse(s: &str) -> Endpoint {
        match s.strip_prefix("scripted:") {
            Some(path) => Endpoint::Scripted(PathBuf::from(path)),
            None => Endpoint::Http(s.to_owned()),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Http(url) => f.write_str(url),
            Endpoint::Scripted(p) => write!(f, "scripted:{}", p.display()),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Endpoint::parse(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub endpoint: Endpoint,
    pub model_name: String,
    pub role: AgentRole,
    /// Environment variable holding the bearer token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Send `top_k` nested under this key instead of at the top level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_params_key: Option<String>,
}

impl AgentSpec {
    pub fn new(id: &str, endpoint: &str, model_name: &str, role: AgentRole) -> Self {
        AgentSpec {
            id: id.to_owned(),
            endpoint: Endpoint::parse(endpoint),
            model_name: model_name.to_owned(),
            role,
            api_key_env: None,
            extra_params_key: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_k: u32,
    pub max_new_tokens: u32,
    pub fallback_max_new_tokens: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            temperature: 0.0,
            top_k: 1,
            max_new_tokens: 4096,
            fallback_max_new_tokens: 8192,
        }
    }
}

impl DecodingConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.top_k == 0 || self.max_new_tokens == 0 {
            return Err(GatewayError::Config("top_k and max_new_tokens must be positive".into()));
        }
        if self.fallback_max_new_tokens < self.max_new_tokens {
            return Err(GatewayError::Config(format!(
                "fallback_max_new_tokens {} is below max_new_tokens {}",
                self.fallback_max_new_tokens, self.max_new_tokens
            )));
        }
        Ok(())
    }

    /// Digest of the parameters actually sent for a call at `max_tokens`.
    pub fn digest(&self, max_tokens: u32) -> String {
        sha256_hex(format!("t={:?};k={};max={}", self.temperature, self.top_k, max_tokens).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub output: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: String,
    pub prompt_hash: String,
    pub thinking: Option<String>,
    pub answer: String,
    pub used_fallback: bool,
    pub token_counts: TokenCounts,
    pub latency_ms: u64,
    pub max_tokens: u32,
    /// Reasoning markers were present but unbalanced.
    #[serde(default)]
    pub thinking_malformed: bool,
}

/// What a backend returns before thinking extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
}

impl RawCompletion {
    pub fn text(content: impl Into<String>) -> Self {
        RawCompletion {
            content: content.into(),
            ..Default::default()
        }
    }
}

pub struct CompletionRequest<'a> {
    pub agent: &'a AgentSpec,
    pub prompt: &'a PromptText,
    pub temperature: f64,
    pub top_k: u32,
    pub max_tokens: u32,
}

/// A live backend. Implemented for closures so tests can inject
/// scripted or failing dispatchers.
pub trait Backend: Send + Sync {
    fn dispatch(&self, req: &CompletionRequest<'_>) -> Result<RawCompletion, GatewayError>;
}

impl<F> Backend for F
where
    F: Fn(&CompletionRequest<'_>) -> Result<RawCompletion, GatewayError> + Send + Sync,
{
    fn dispatch(&self, req: &CompletionRequest<'_>) -> Result<RawCompletion, GatewayError> {
        self(req)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Default)]
pub struct GatewayStats {
    pub requests: AtomicU64,
    pub cache_hits: AtomicU64,
    pub dispatches: AtomicU64,
    pub failures: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub requests: u64,
    pub cache_hits: u64,
    pub dispatches: u64,
    pub failures: u64,
}

pub struct Gateway {
    live: Arc<dyn Backend>,
    scripted: HashMap<String, Arc<ScriptedBackend>>,
    cache: Option<ResponseCache>,
    offline: bool,
    retry: RetryPolicy,
    markers: ThinkingMarkers,
    stats: GatewayStats,
}

impl Gateway {
    /// Gateway with the given live backend. Scripted agents are loaded
    /// from their fixture files.
    pub fn new(live: Arc<dyn Backend>, agents: &[AgentSpec]) -> Result<Self, GatewayError> {
        let mut by_path: HashMap<PathBuf, Arc<ScriptedBackend>> = HashMap::new();
        let mut scripted = HashMap::new();
        for agent in agents {
            if let Endpoint::Scripted(path) = &agent.endpoint {
                let backend = match by_path.get(path) {
                    Some(b) => b.clone(),
                    None => {
                        let b = Arc::new(ScriptedBackend::load(path)?);
                        by_path.insert(path.clone(), b.clone());
                        b
                    }
                };
                scripted.insert(agent.id.clone(), backend);
            }
        }
        Ok(Gateway {
            live,
            scripted,
            cache: None,
            offline: false,
            retry: RetryPolicy::default(),
            markers: ThinkingMarkers::default(),
            stats: GatewayStats::default(),
        })
    }

    /// Gateway whose live backend is plain HTTP.
    pub fn http(agents: &[AgentSpec], timeout: Duration) -> Result<Self, GatewayError> {
        Gateway::new(Arc::new(HttpBackend::new(timeout)?), agents)
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_markers(mut self, markers: ThinkingMarkers) -> Self {
        self.markers = markers;
        self
    }

    /// Replace the fixture set for one agent.
    pub fn with_scripted(mut self, agent_id: &str, backend: ScriptedBackend) -> Self {
        self.scripted.insert(agent_id.to_owned(), Arc::new(backend));
        self
    }

    pub fn stats(&self) -> StatsSnapshot {
        StatsSnapshot {
            requests: self.stats.requests.load(Ordering::Relaxed),
            cache_hits: self.stats.cache_hits.load(Ordering::Relaxed),
            dispatches: self.stats.dispatches.load(Ordering::Relaxed),
            failures: self.stats.failures.load(Ordering::Relaxed),
        }
    }

    pub fn cache_key(&self, agent: &AgentSpec, prompt: &PromptText, cfg: &DecodingConfig, max_tokens: u32) -> CacheKey {
        CacheKey {
            agent_id: agent.id.clone(),
            model_name: agent.model_name.clone(),
            prompt_hash: prompt.content_hash.clone(),
            decoding_digest: cfg.digest(max_tokens),
        }
    }

    /// One completion at `cfg.max_new_tokens`.
    pub fn complete(
        &self,
        agent: &AgentSpec,
        prompt: &PromptText,
        cfg: &DecodingConfig,
    ) -> Result<AgentResponse, GatewayError> {
        self.complete_at(agent, prompt, cfg, cfg.max_new_tokens, false)
    }

    /// One completion at an explicit token limit.
    pub fn complete_at(
        &self,
        agent: &AgentSpec,
        prompt: &PromptText,
        cfg: &DecodingConfig,
        max_tokens: u32,
        fallback: bool,
    ) -> Result<AgentResponse, GatewayError> {
        self.stats.requests.fetch_add(1, Ordering::Relaxed);
        let key = self.cache_key(agent, prompt, cfg, max_tokens);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.lookup(&key)) {
            self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let req = CompletionRequest {
            agent,
            prompt,
            temperature: cfg.temperature,
            top_k: cfg.top_k,
            max_tokens,
        };
        let started = Instant::now();
        let raw = match &agent.endpoint {
            Endpoint::Scripted(_) => {
                let backend = self.scripted.get(&agent.id).ok_or_else(|| {
                    GatewayError::Config(format!("no fixtures loaded for agent `{}`", agent.id))
                })?;
                backend.replay(&req)
            }
            Endpoint::Http(_) if self.offline => Err(GatewayError::OfflineMiss {
                agent: agent.id.clone(),
                prompt_hash: prompt.content_hash.clone(),
            }),
            Endpoint::Http(_) => self.dispatch_with_retry(&req),
        };
        let raw = raw.inspect_err(|_| {
            self.stats.failures.fetch_add(1, Ordering::Relaxed);
        })?;
        let latency_ms = if matches!(agent.endpoint, Endpoint::Scripted(_)) {
            0
        } else {
            started.elapsed().as_millis() as u64
        };
        let response = self.build_response(agent, prompt, raw, max_tokens, fallback, latency_ms)?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.store(&key, &response) {
                warn!(error = %e, "cache store failed");
            }
        }
        Ok(response)
    }

    fn build_response(
        &self,
        agent: &AgentSpec,
        prompt: &PromptText,
        raw: RawCompletion,
        max_tokens: u32,
        fallback: bool,
        latency_ms: u64,
    ) -> Result<AgentResponse, GatewayError> {
        let (thinking, answer, malformed) = match raw.reasoning {
            Some(r) => (Some(r), raw.content, false),
            None => {
                let split = extract_thinking(&raw.content, &self.markers);
                (split.thinking, split.answer, split.malformed)
            }
        };
        if answer.trim().is_empty() {
            self.stats.failures.fetch_add(1, Ordering::Relaxed);
            return Err(GatewayError::BadResponse(format!("agent `{}` returned an empty answer", agent.id)));
        }
        Ok(AgentResponse {
            agent_id: agent.id.clone(),
            prompt_hash: prompt.content_hash.clone(),
            thinking,
            answer,
            used_fallback: fallback,
            token_counts: TokenCounts {
                prompt: raw.prompt_tokens,
                output: raw.output_tokens,
            },
            latency_ms,
            max_tokens,
            thinking_malformed: malformed,
        })
    }

    fn dispatch_with_retry(&self, req: &CompletionRequest<'_>) -> Result<RawCompletion, GatewayError> {
        let attempts = self.retry.max_attempts.max(1);
        let mut last = None;
        for attempt in 1..=attempts {
            self.stats.dispatches.fetch_add(1, Ordering::Relaxed);
            match self.live.dispatch(req) {
                Ok(raw) => return Ok(raw),
                Err(e) if e.is_retryable() => {
                    debug!(agent = %req.agent.id, attempt, error = %e, "retryable failure");
                    if attempt < attempts {
                        let delay = self.retry.base_delay_ms.saturating_mul(1 << (attempt - 1));
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::Exhausted {
            attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }

    /// Annotate with one retry at the fallback token limit when the first
    /// answer does not parse.
    pub fn annotate_with_fallback<P>(
        &self,
        agent: &AgentSpec,
        prompt: &PromptText,
        cfg: &DecodingConfig,
        parse: P,
    ) -> Result<Annotated, AnnotateError>
    where
        P: Fn(&str) -> Result<AnnotationRecord, ParseFailure>,
    {
        let first = self.complete_at(agent, prompt, cfg, cfg.max_new_tokens, false)?;
        let first_failure = match parse(&first.answer) {
            Ok(mut record) => {
                record.source_agent = agent.id.clone();
                return Ok(Annotated {
                    response: first,
                    record,
                    first_attempt: None,
                });
            }
            Err(e) => e,
        };
        debug!(agent = %agent.id, error = %first_failure, "parse failed, retrying at fallback limit");
        let second = self.complete_at(agent, prompt, cfg, cfg.fallback_max_new_tokens, true)?;
        match parse(&second.answer) {
            Ok(mut record) => {
                record.source_agent = agent.id.clone();
                Ok(Annotated {
                    response: second,
                    record,
                    first_attempt: Some(first),
                })
            }
            Err(second_failure) => Err(AnnotateError::Unparseable(Box::new(Unparseable {
                agent_id: agent.id.clone(),
                prompt_hash: prompt.content_hash.clone(),
                first,
                second,
                first_failure,
                second_failure,
            }))),
        }
    }
}

/// A successfully parsed annotation and the response it came from.
#[derive(Debug, Clone)]
pub struct Annotated {
    pub response: AgentResponse,
    pub record: AnnotationRecord,
    /// The unparseable first response when the fallback was used.
    pub first_attempt: Option<AgentResponse>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unparseable {
    pub agent_id: String,
    pub prompt_hash: String,
    pub first: AgentResponse,
    pub second: AgentResponse,
    pub first_failure: ParseFailure,
    pub second_failure: ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unparseable annotation from `{}` after fallback: {}", .0.agent_id, .0.second_failure)]
    Unparseable(Box<Unparseable>),
}
