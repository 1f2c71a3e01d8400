//! Chat-completion HTTP adapter.
//!
//! Sends the task's template as the system message and the payload as the
//! user message, and returns the first choice's content. Any endpoint that
//! speaks the common `/chat/completions` shape works.

use super::prompts::{system_prompt, user_message};
use super::{Provider, ProviderError, ProviderRequest};
use serde_json::{json, Value};
use std::time::Duration;

/// Environment variable holding the bearer token, if the endpoint needs one.
pub const API_KEY_ENV: &str = "DIALOGMAP_HTTP_API_KEY";

pub struct HttpProvider {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout_ms: u64) -> Self {
        let timeout = Duration::from_millis(timeout_ms.max(1));
        HttpProvider {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key.filter(|k| !k.is_empty());
        self
    }

    pub fn request_body(&self, request: &ProviderRequest) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                { "role": "system", "content": system_prompt(request.task) },
                { "role": "user", "content": user_message(request) },
            ],
        })
    }
}

fn is_timeout(err: &ureq::Transport) -> bool {
    let mut source: Option<&(dyn std::error::Error + 'static)> = std::error::Error::source(err);
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            if matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            ) {
                return true;
            }
        }
        source = e.source();
    }
    err.to_string().contains("timed out")
}

impl Provider for HttpProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match call.send_json(self.request_body(request)) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                return Err(ProviderError::Status {
                    status,
                    body: r.into_string().unwrap_or_default(),
                })
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(if is_timeout(&t) {
                    ProviderError::Timeout
                } else {
                    ProviderError::Transport(t.to_string())
                })
            }
        };
        let body: Value = response
            .into_json()
            .map_err(|e| ProviderError::Transport(format!("unreadable response body: {e}")))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::Transport("response has no choices[0].message.content".into())
            })
    }
}
