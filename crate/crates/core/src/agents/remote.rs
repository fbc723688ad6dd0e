//! Chat-completion backend over HTTP(S).
//!
//! Request body: `{model, messages: [{role, content}], temperature, max_tokens}`.
//! The answer is read from `choices[0].message.content` and token usage from
//! `usage.prompt_tokens` / `usage.completion_tokens`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    propose_via_text, verdict_json, Completion, DecisionBackend, DecisionOutcome, DecisionRequest,
    TokenUsage,
};
use crate::error::{Error, Result};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "RELLM_API_KEY";

const SYSTEM_PROMPT: &str =
    "You allocate radio resource blocks between network slices. Answer only with the requested JSON.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_max_tokens() -> u32 {
    256
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.groq.com/openai/v1/chat/completions".into(),
            model: "meta-llama/llama-4-maverick-17b-128e-instruct".into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_ms: default_timeout_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(config: &RemoteConfig, user: &str) -> Self {
        Self {
            model: config.model.clone(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: SYSTEM_PROMPT.into(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: user.into(),
                },
            ],
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    /// Reads the bearer token from [`API_KEY_ENV`].
    pub fn from_env(config: RemoteConfig) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| Error::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::with_api_key(config, key))
    }

    pub fn with_api_key(config: RemoteConfig, api_key: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            api_key: api_key.into(),
            agent,
        }
    }

    fn chat(&self, user: &str) -> Result<Completion> {
        let body = serde_json::to_string(&ChatRequest::new(&self.config, user))?;
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(&body)
            .map_err(|e| self.transport_error(e))?;
        let status = response.status();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| self.transport_error(e))?;
        if !status.is_success() {
            return Err(Error::Backend(format!("HTTP {status}: {text}")));
        }
        parse_chat_response(&text)
    }

    fn transport_error(&self, e: ureq::Error) -> Error {
        match e {
            ureq::Error::Timeout(_) => Error::BackendTimeout(self.config.timeout_ms),
            other => Error::Backend(other.to_string()),
        }
    }
}

pub(crate) fn parse_chat_response(text: &str) -> Result<Completion> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| Error::Backend(format!("malformed completion body: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Backend("completion has no choices[0].message.content".into()))?;
    let usage = match (
        v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        v.pointer("/usage/completion_tokens")
            .and_then(Value::as_u64),
    ) {
        (Some(prompt), Some(completion)) => Some(TokenUsage { prompt, completion }),
        _ => None,
    };
    Ok(Completion {
        text: content.to_string(),
        usage,
    })
}

impl DecisionBackend for RemoteBackend {
    fn label(&self) -> &str {
        "remote"
    }

    fn propose_allocation(&mut self, request: &DecisionRequest) -> Result<DecisionOutcome> {
        propose_via_text("remote", request, |prompt| self.chat(prompt))
    }

    fn detection_usage(&mut self, prompt: &str, verdict: bool) -> Result<TokenUsage> {
        let completion = self.chat(prompt)?;
        let answer = if completion.text.is_empty() {
            verdict_json(verdict)
        } else {
            completion.text
        };
        Ok(completion.usage.unwrap_or(TokenUsage {
            prompt: super::count_tokens(prompt, super::TokenMode::Approximate),
            completion: super::count_tokens(&answer, super::TokenMode::Approximate),
        }))
    }
}
