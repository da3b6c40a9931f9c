//! HTTP text backend for chat-completion style endpoints.
//!
//! Configured from `MARS_LLM_ENDPOINT`, `MARS_LLM_MODEL` and
//! `MARS_LLM_API_KEY_VAR`; the last names the environment variable that
//! holds the API key, so the key itself never sits in a config file.

use std::time::Duration;

use mars_core::policies::{BackendError, Completion, Prompt, TextBackend};
use serde_json::{json, Value};

pub const ENDPOINT_VAR: &str = "MARS_LLM_ENDPOINT";
pub const MODEL_VAR: &str = "MARS_LLM_MODEL";
pub const API_KEY_VAR_VAR: &str = "MARS_LLM_API_KEY_VAR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendDescriptor {
    /// Full URL of the chat completions route.
    pub endpoint: String,
    pub model: String,
    pub api_key_var: Option<String>,
}

pub struct HttpBackend {
    descriptor: BackendDescriptor,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(descriptor: BackendDescriptor) -> HttpBackend {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { descriptor, agent }
    }

    fn api_key(&self) -> Option<String> {
        self.descriptor.api_key_var.as_deref().and_then(|var| std::env::var(var).ok()).filter(|k| !k.is_empty())
    }
}

fn request_body(model: &str, prompt: &Prompt) -> Value {
    json!({
        "model": model,
        "temperature": 0,
        "messages": [
            { "role": "system", "content": prompt.system },
            { "role": "user", "content": prompt.user },
        ],
    })
}

pub fn parse_completion(body: &str) -> Result<Completion, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Failed(format!("response is not JSON: {e}")))?;
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Failed("response has no choices[0].message.content".to_string()))?;
    let count = |key: &str| value.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(Completion {
        text: text.to_string(),
        prompt_tokens: count("prompt_tokens"),
        completion_tokens: count("completion_tokens"),
    })
}

impl TextBackend for HttpBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<Completion, BackendError> {
        let mut request = self.agent.post(&self.descriptor.endpoint).header("Content-Type", "application/json");
        if let Some(key) = self.api_key() {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let body = request_body(&self.descriptor.model, prompt).to_string();
        let mut response = request.send(body).map_err(|e| match e {
            ureq::Error::Http(_) | ureq::Error::BadUri(_) => BackendError::Failed(e.to_string()),
            other => BackendError::Unavailable(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        match status {
            200..=299 => parse_completion(&text),
            429 | 500..=599 => Err(BackendError::Unavailable(format!("HTTP {status}"))),
            _ => Err(BackendError::Failed(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))),
        }
    }
}
