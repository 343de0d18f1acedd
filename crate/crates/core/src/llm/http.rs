//! Chat-completions style HTTP provider.
//!
//! Request: `POST {base_url}/chat/completions` with header
//! `Authorization: Bearer $KEY` and body
//! `{"model": <id>, "messages": [{"role": .., "content": ..}], "temperature": <t>}`.
//!
//! Response: text from `choices[0].message.content`; token counts from
//! `usage.prompt_tokens` / `usage.completion_tokens` (falling back to
//! `ceil(chars / 4)` when absent).
//!
//! Transport failures, HTTP 408, 429 and 5xx are retryable. Other non-2xx
//! statuses are terminal and carry `error.message` from the body when
//! present.

use std::env;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{count_tokens, ChatProvider, ChatRequest, Embedder, EmbeddingVector, ProviderReply, RetryConfig};
use crate::error::{Error, Result};

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone)]
pub struct OpenAiCompatible {
    base_url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: MessageBody,
}

#[derive(Deserialize)]
struct MessageBody {
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct EmbeddingBody {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

impl OpenAiCompatible {
    /// Reads the API key from `api_key_env`; a missing key is allowed for
    /// local endpoints that do not authenticate.
    pub fn new(base_url: impl Into<String>, api_key_env: &str) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(OpenAiCompatible {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            http,
        })
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String> {
        let mut req = self.http.post(format!("{}{path}", self.base_url)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Backend { retryable: true, message: format!("transport: {e}") })?;
        let status = resp.status();
        let text =
            resp.text().map_err(|e| Error::Backend { retryable: true, message: format!("reading body: {e}") })?;
        if status.is_success() {
            return Ok(text);
        }
        let message = serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v.pointer("/error/message").and_then(|m| m.as_str()).map(String::from))
            .unwrap_or_else(|| text.chars().take(500).collect());
        let retryable = status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error();
        Err(Error::Backend { retryable, message: format!("HTTP {}: {message}", status.as_u16()) })
    }
}

pub(crate) fn request_body(request: &ChatRequest<'_>) -> serde_json::Value {
    json!({
        "model": request.model.id,
        "messages": request.messages.iter().map(|m| json!({
            "role": m.role.as_str(),
            "content": m.content,
        })).collect::<Vec<_>>(),
        "temperature": request.temperature,
    })
}

impl ChatProvider for OpenAiCompatible {
    fn name(&self) -> &str {
        &self.base_url
    }

    fn is_live(&self) -> bool {
        true
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ProviderReply> {
        let raw = self.post("/chat/completions", &request_body(request))?;
        let body: CompletionBody = serde_json::from_str(&raw)
            .map_err(|e| Error::Backend { retryable: false, message: format!("malformed completion response: {e}") })?;
        let text =
            body.choices.into_iter().next().and_then(|c| c.message.content).ok_or_else(|| Error::Backend {
                retryable: false,
                message: "completion response has no choices".into(),
            })?;
        let prompt_estimate =
            || request.messages.iter().map(|m| m.content.chars().count() as u64).sum::<u64>().div_ceil(4);
        let (input_tokens, output_tokens) = match body.usage {
            Some(u) => (
                u.prompt_tokens.unwrap_or_else(prompt_estimate),
                u.completion_tokens.unwrap_or_else(|| count_tokens(&text)),
            ),
            None => (prompt_estimate(), count_tokens(&text)),
        };
        Ok(ProviderReply { text, input_tokens, output_tokens, latency: None })
    }
}

/// `POST {base_url}/embeddings` with `{"model": <id>, "input": <text>}`;
/// reads `data[0].embedding` and L2-normalizes it.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    provider: OpenAiCompatible,
    model: String,
    dimension: usize,
    retry: RetryConfig,
}

impl HttpEmbedder {
    pub fn new(provider: OpenAiCompatible, model: impl Into<String>, dimension: usize) -> Self {
        HttpEmbedder { provider, model: model.into(), dimension, retry: RetryConfig::default() }
    }

    pub fn with_retry(mut self, retry: RetryConfig) -> Self {
        self.retry = retry;
        self
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.retry.run(|| {
            let raw = self.provider.post("/embeddings", &json!({"model": self.model, "input": text}))?;
            let body: EmbeddingBody = serde_json::from_str(&raw).map_err(|e| Error::Backend {
                retryable: false,
                message: format!("malformed embedding response: {e}"),
            })?;
            let v = body
                .data
                .into_iter()
                .next()
                .ok_or_else(|| Error::Backend { retryable: false, message: "embedding response has no data".into() })?;
            if v.embedding.len() != self.dimension {
                return Err(Error::Backend {
                    retryable: false,
                    message: format!("embedding dimension {} != configured {}", v.embedding.len(), self.dimension),
                });
            }
            EmbeddingVector::normalized(v.embedding)
        })
    }
}
