//! Provider boundary: one prompt in, structured text out.
//!
//! Concrete providers (HTTP, cassette replay) live in the `sckg` crate. The
//! core only needs the traits and the bounded repair loop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::model::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    RateLimited,
    Auth,
    Network,
    Server,
    CassetteMiss,
    BadResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub message: String,
    /// Suggested wait before retrying, when the provider said so.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_ms: Option<u64>,
}

impl ProviderError {
    pub fn new(kind: ProviderErrorKind, message: impl Into<String>) -> Self {
        ProviderError {
            kind,
            message: message.into(),
            retry_after_ms: None,
        }
    }

    pub fn is_transient(&self) -> bool {
        matches!(
            self.kind,
            ProviderErrorKind::RateLimited | ProviderErrorKind::Network | ProviderErrorKind::Server
        )
    }
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

impl core::error::Error for ProviderError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    /// Name of the output schema; doubles as the task label.
    pub schema_name: String,
    /// JSON schema handed to providers that support structured output.
    pub schema: serde_json::Value,
    pub temperature: f64,
    pub structured: bool,
}

impl CompletionRequest {
    pub fn prompt_text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    /// Replay key: hex SHA-256 of the full prompt text.
    pub fn cassette_key(&self) -> String {
        sha256_hex(self.prompt_text().as_bytes())
    }
}

pub trait LlmProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

pub trait Embedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        (**self).embed(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Structured<T> {
    pub value: T,
    /// Provider calls made, including repairs.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CallError {
    #[error("provider error after {attempts} call(s): {error}")]
    Provider { error: ProviderError, attempts: u32 },
    #[error("malformed output after {attempts} call(s): {last_error}")]
    Malformed {
        attempts: u32,
        last_error: String,
        last_output: String,
    },
}

impl CallError {
    pub fn attempts(&self) -> u32 {
        match self {
            CallError::Provider { attempts, .. } | CallError::Malformed { attempts, .. } => {
                *attempts
            }
        }
    }
}

/// Strip a surrounding Markdown code fence, if the model added one.
pub fn json_body(output: &str) -> &str {
    let t = output.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
        if let Some(inner) = rest.trim_end().strip_suffix("```") {
            return inner.trim();
        }
    }
    t
}

/// Repair prompt: the original request with the parse error appended.
pub fn repair_request(request: &CompletionRequest, error: &str) -> CompletionRequest {
    let mut next = request.clone();
    next.user = format!(
        "{}\n\nYour previous answer was rejected: {}\nReply again with a single JSON object that matches the schema exactly.",
        request.user, error
    );
    next
}

/// Call `provider`, parse with `parse`, and re-prompt up to `repair_retries`
/// times when parsing fails.
pub fn call_structured<T, P, F>(
    provider: &P,
    request: &CompletionRequest,
    repair_retries: u32,
    parse: F,
) -> Result<Structured<T>, CallError>
where
    P: LlmProvider + ?Sized,
    F: Fn(&str) -> Result<T, String>,
{
    let mut attempts = 0;
    let mut current = request.clone();
    loop {
        attempts += 1;
        let output = provider
            .complete(&current)
            .map_err(|error| CallError::Provider { error, attempts })?;
        match parse(json_body(&output)) {
            Ok(value) => return Ok(Structured { value, attempts }),
            Err(e) if attempts > repair_retries => {
                return Err(CallError::Malformed {
                    attempts,
                    last_error: e,
                    last_output: output,
                })
            }
            Err(e) => current = repair_request(request, &e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use core::cell::RefCell;

    struct Script(RefCell<Vec<Result<String, ProviderError>>>, RefCell<Vec<String>>);

    impl LlmProvider for Script {
        fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
            self.1.borrow_mut().push(request.user.clone());
            self.0.borrow_mut().remove(0)
        }
    }

    fn req() -> CompletionRequest {
        CompletionRequest {
            system: "sys".into(),
            user: "user".into(),
            schema_name: "t".into(),
            schema: serde_json::Value::Null,
            temperature: 0.0,
            structured: true,
        }
    }

    fn parse_num(s: &str) -> Result<u32, String> {
        s.parse::<u32>().map_err(|e| e.to_string())
    }

    #[test]
    fn repair_succeeds_on_second_attempt() {
        let p = Script(
            RefCell::new(alloc::vec![Ok("nope".into()), Ok("```json\n42\n```".into())]),
            RefCell::new(Vec::new()),
        );
        let out = call_structured(&p, &req(), 2, parse_num).unwrap();
        assert_eq!(out, Structured { value: 42, attempts: 2 });
        let prompts = p.1.borrow();
        assert!(prompts[1].starts_with("user\n\nYour previous answer was rejected: "));
    }

    #[test]
    fn malformed_after_retries_exhausted() {
        let p = Script(
            RefCell::new(alloc::vec![Ok("a".into()), Ok("b".into()), Ok("c".into())]),
            RefCell::new(Vec::new()),
        );
        let err = call_structured(&p, &req(), 2, parse_num).unwrap_err();
        assert!(matches!(err, CallError::Malformed { attempts: 3, .. }));
    }

    #[test]
    fn provider_errors_pass_through() {
        let p = Script(
            RefCell::new(alloc::vec![Err(ProviderError::new(
                ProviderErrorKind::Network,
                "down"
            ))]),
            RefCell::new(Vec::new()),
        );
        let err = call_structured(&p, &req(), 2, parse_num).unwrap_err();
        assert!(matches!(err, CallError::Provider { attempts: 1, .. }));
    }

    #[test]
    fn cassette_key_depends_on_prompt_only() {
        let a = req();
        let mut b = req();
        b.temperature = 0.7;
        assert_eq!(a.cassette_key(), b.cassette_key());
        b.user.push('!');
        assert_ne!(a.cassette_key(), b.cassette_key());
    }
}
