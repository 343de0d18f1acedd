//! Chat and embedding backends with usage accounting.
//!
//! [`LlmClient`] wraps a [`ChatProvider`] (the scripted [`MockBackend`] or
//! the HTTP [`OpenAiCompatible`] provider), validates requests, retries
//! retryable failures and records every successful call in a shared
//! [`UsageLedger`].

mod embed;
mod http;
mod ledger;
mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use embed::{tokenize, Embedder, EmbeddingVector, HashingEmbedder, DEFAULT_DIMENSION};
pub use http::{HttpEmbedder, OpenAiCompatible, DEFAULT_API_KEY_ENV};
pub use ledger::{LedgerSnapshot, Usage, UsageLedger};
pub use mock::{count_tokens, MockBackend, MockRule, MockScript};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    /// Currency units per 1,000 input tokens.
    pub input_cost_per_1k: f64,
    /// Currency units per 1,000 output tokens.
    pub output_cost_per_1k: f64,
    /// Prior quality in [0, 1].
    pub quality: f64,
    /// Prior seconds per call.
    pub latency_secs: f64,
}

impl ModelSpec {
    pub fn new(
        id: impl Into<String>,
        input_cost_per_1k: f64,
        output_cost_per_1k: f64,
        quality: f64,
        latency_secs: f64,
    ) -> Result<Self> {
        let spec = ModelSpec { id: id.into(), input_cost_per_1k, output_cost_per_1k, quality, latency_secs };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("model id is empty".into()));
        }
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !nonneg(self.input_cost_per_1k) || !nonneg(self.output_cost_per_1k) {
            return Err(Error::Validation(format!("model {} has negative cost", self.id)));
        }
        if !(0.0..=1.0).contains(&self.quality) {
            return Err(Error::Validation(format!("model {} quality {} outside [0, 1]", self.id, self.quality)));
        }
        if !nonneg(self.latency_secs) {
            return Err(Error::Validation(format!("model {} has negative latency", self.id)));
        }
        Ok(())
    }

    pub fn call_cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        input_tokens as f64 / 1000.0 * self.input_cost_per_1k + output_tokens as f64 / 1000.0 * self.output_cost_per_1k
    }
}

/// Ordered set of models, loadable from a TOML catalog file:
///
/// ```toml
/// [[model]]
/// id = "cheap"
/// input_cost_per_1k = 0.00015
/// output_cost_per_1k = 0.0006
/// quality = 0.8
/// latency_secs = 0.4
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelCatalog {
    #[serde(rename = "model", default)]
    models: Vec<ModelSpec>,
}

impl ModelCatalog {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for m in &models {
            m.check()?;
            if !seen.insert(m.id.as_str()) {
                return Err(Error::Config(format!("duplicate model id `{}`", m.id)));
            }
        }
        Ok(ModelCatalog { models })
    }

    /// Two-model catalog used when no catalog file is configured: a cheap,
    /// weaker model and a strong, 20x more expensive one.
    pub fn builtin() -> Self {
        ModelCatalog {
            models: vec![
                ModelSpec::new("mini", 0.00015, 0.0006, 0.8, 0.4).unwrap(),
                ModelSpec::new("large", 0.0025, 0.01, 0.95, 1.2).unwrap(),
            ],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let parsed: ModelCatalog = toml::from_str(text)?;
        ModelCatalog::new(parsed.models)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read catalog {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn get(&self, id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.id == id)
    }

    /// Highest prior quality; ties go to the earlier entry.
    pub fn strongest(&self) -> Option<&ModelSpec> {
        self.models.iter().fold(None, |best: Option<&ModelSpec>, m| match best {
            Some(b) if b.quality >= m.quality => Some(b),
            _ => Some(m),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// What a call is for; the ledger keeps per-kind call counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    /// Per-record semantic operator call.
    Operator,
    /// Optimizer statistics sampling.
    Sampling,
    /// Agent reasoning step.
    Agent,
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallKind::Operator => "operator",
            CallKind::Sampling => "sampling",
            CallKind::Agent => "agent",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub model: &'a ModelSpec,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
}

impl ChatRequest<'_> {
    pub fn check(&self) -> Result<()> {
        let first = self.messages.first().ok_or_else(|| Error::Validation("chat request has no messages".into()))?;
        if !matches!(first.role, Role::System | Role::User) {
            return Err(Error::Validation("first chat message must be system or user".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Validation("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Simulated latency. When `None` the client measures wall time.
    pub latency: Option<Duration>,
}

pub trait ChatProvider: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Whether calls reach a real provider (costs real money).
    fn is_live(&self) -> bool;

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ProviderReply>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig { max_attempts: 3, base_delay: Duration::from_secs(1), factor: 2.0 }
    }
}

impl RetryConfig {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no delay before the first
        if attempt <= 1 {
            return Duration::ZERO;
        }
        self.base_delay.mul_f64(self.factor.powi(attempt as i32 - 2))
    }

    pub fn run<T>(&self, mut f: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 1;
        loop {
            match f() {
                Err(e) if e.is_retryable() && attempt < self.max_attempts => {
                    attempt += 1;
                    std::thread::sleep(self.delay_before(attempt));
                }
                other => return other,
            }
        }
    }
}

pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

/// Provider + ledger + model registry. Cheap to clone.
#[derive(Debug, Clone)]
pub struct LlmClient {
    provider: Arc<dyn ChatProvider>,
    ledger: Arc<UsageLedger>,
    models: Arc<BTreeMap<String, ModelSpec>>,
    retry: RetryConfig,
}

impl LlmClient {
    pub fn new(provider: Arc<dyn ChatProvider>, catalog: &ModelCatalog) -> Self {
        LlmClient {
            provider,
            ledger: Arc::new(UsageLedger::new()),
            models: Arc::new(catalog.models().iter().map(|m| (m.id.clone(), m.clone())).collect()),
            retry: RetryConfig::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryConfig) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_ledger(mut self, ledger: Arc<UsageLedger>) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn ledger(&self) -> &Arc<UsageLedger> {
        &self.ledger
    }

    pub fn provider(&self) -> &Arc<dyn ChatProvider> {
        &self.provider
    }

    pub fn model(&self, id: &str) -> Option<&ModelSpec> {
        self.models.get(id)
    }

    pub fn chat(
        &self,
        model: &ModelSpec,
        messages: &[ChatMessage],
        temperature: f64,
        kind: CallKind,
    ) -> Result<ChatResponse> {
        if self.models.get(&model.id) != Some(model) {
            return Err(Error::Config(format!(
                "model `{}` is not registered with backend {}",
                model.id,
                self.provider.name()
            )));
        }
        let request = ChatRequest { model, messages, temperature };
        request.check()?;
        let reply = self.retry.run(|| {
            let started = Instant::now();
            let mut reply = self.provider.complete(&request)?;
            reply.latency.get_or_insert_with(|| started.elapsed());
            Ok(reply)
        })?;
        let wall = reply.latency.unwrap_or_default();
        self.ledger.record(model, kind, reply.input_tokens, reply.output_tokens, wall);
        Ok(ChatResponse {
            usage: Usage {
                calls: 1,
                input_tokens: reply.input_tokens,
                output_tokens: reply.output_tokens,
                cost: model.call_cost(reply.input_tokens, reply.output_tokens),
                wall_secs: wall.as_secs_f64(),
            },
            text: reply.text,
        })
    }
}
