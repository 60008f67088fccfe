//! LLM providers: an OpenAI-compatible HTTP client, cassette replay, and a
//! recorder that wraps any provider.

use std::thread;
use std::time::Duration;

use sckg_core::provider::{CompletionRequest, LlmProvider, ProviderError, ProviderErrorKind};
use serde_json::json;

use crate::cassette::{Cassette, CassetteStore, Channel};

/// Map an HTTP status to the provider error taxonomy.
pub fn classify_status(status: u16) -> ProviderErrorKind {
    match status {
        429 => ProviderErrorKind::RateLimited,
        401 | 403 => ProviderErrorKind::Auth,
        500..=599 => ProviderErrorKind::Server,
        _ => ProviderErrorKind::BadResponse,
    }
}

pub(crate) fn retry_after_ms(headers: &reqwest::header::HeaderMap) -> Option<u64> {
    headers
        .get(reqwest::header::RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<u64>()
        .ok()
        .map(|s| s * 1000)
}

pub(crate) fn network_error(e: reqwest::Error) -> ProviderError {
    ProviderError::new(ProviderErrorKind::Network, e.to_string())
}

#[derive(Debug, Clone)]
pub struct HttpLlm {
    client: reqwest::blocking::Client,
    base: String,
    key: Option<String>,
    model: String,
    retries: u32,
    backoff: Duration,
}

impl HttpLlm {
    pub fn new(base: &str, key: Option<String>, model: &str) -> Self {
        HttpLlm {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client builds"),
            base: base.trim_end_matches('/').to_string(),
            key,
            model: model.to_string(),
            retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// `LLM_API_BASE`, `LLM_API_KEY`, `LLM_MODEL` (falling back to `default_model`).
    pub fn from_env(default_model: &str) -> Result<Self, ProviderError> {
        let base = std::env::var("LLM_API_BASE").map_err(|_| {
            ProviderError::new(ProviderErrorKind::Auth, "LLM_API_BASE is not set")
        })?;
        let model = std::env::var("LLM_MODEL").unwrap_or_else(|_| default_model.to_string());
        Ok(Self::new(&base, std::env::var("LLM_API_KEY").ok(), &model))
    }

    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.model,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        if request.structured {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {"name": request.schema_name, "schema": request.schema},
            });
        }
        body
    }

    fn once(&self, body: &serde_json::Value) -> Result<String, ProviderError> {
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base))
            .json(body);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(network_error)?;
        let status = resp.status().as_u16();
        if status != 200 {
            let mut err = ProviderError::new(classify_status(status), format!("HTTP {status}"));
            err.retry_after_ms = retry_after_ms(resp.headers());
            return Err(err);
        }
        let v: serde_json::Value = resp.json().map_err(|e| {
            ProviderError::new(ProviderErrorKind::BadResponse, e.to_string())
        })?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::new(ProviderErrorKind::BadResponse, "no choices[0].message.content")
            })
    }
}

impl LlmProvider for HttpLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = self.body(request);
        let mut attempt = 0;
        loop {
            match self.once(&body) {
                Err(e) if e.is_transient() && attempt < self.retries => {
                    let wait = e
                        .retry_after_ms
                        .map(Duration::from_millis)
                        .unwrap_or(self.backoff * 2u32.pow(attempt));
                    tracing::warn!(error = %e, ?wait, "llm call failed, retrying");
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Answers from recorded cassettes only; a missing key is `CassetteMiss`.
#[derive(Debug, Clone)]
pub struct ReplayLlm {
    store: CassetteStore,
}

impl ReplayLlm {
    pub fn new(store: CassetteStore) -> Self {
        ReplayLlm { store }
    }
}

impl LlmProvider for ReplayLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let key = request.cassette_key();
        let c = self
            .store
            .load(Channel::Llm, &key)
            .map_err(|e| ProviderError::new(ProviderErrorKind::BadResponse, e.to_string()))?
            .ok_or_else(|| {
                ProviderError::new(
                    ProviderErrorKind::CassetteMiss,
                    format!("no {} cassette for {key}", request.schema_name),
                )
            })?;
        if c.status != 200 {
            return Err(ProviderError::new(
                classify_status(c.status),
                format!("recorded HTTP {}", c.status),
            ));
        }
        Ok(c.body)
    }
}

/// Passes calls through and writes each successful answer to a cassette.
#[derive(Debug)]
pub struct RecordingLlm<P> {
    inner: P,
    store: CassetteStore,
}

impl<P: LlmProvider> RecordingLlm<P> {
    pub fn new(inner: P, store: CassetteStore) -> Self {
        RecordingLlm { inner, store }
    }
}

impl<P: LlmProvider> LlmProvider for RecordingLlm<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let out = self.inner.complete(request)?;
        let cassette = Cassette {
            request: json!({
                "schema_name": request.schema_name,
                "system": request.system,
                "user": request.user,
            }),
            status: 200,
            headers: Default::default(),
            body: out.clone(),
        };
        self.store
            .save(Channel::Llm, &request.cassette_key(), &cassette)
            .map_err(|e| ProviderError::new(ProviderErrorKind::BadResponse, e.to_string()))?;
        Ok(out)
    }
}
