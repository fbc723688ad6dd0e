//! Replays decisions from a JSON file, for tests and offline reruns.
//!
//! The file holds an array of entries. Each entry is one answer and carries
//! exactly one of `shares` (taken as-is), `response` (raw model text, parsed
//! like a remote answer) or `error` (the call fails). Token counts are
//! optional; missing counts are approximated from the text.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    count_tokens, propose_via_text, Completion, DecisionBackend, DecisionOutcome, DecisionRequest,
    TokenMode, TokenUsage,
};
use crate::error::{Error, Result};
use crate::model::AllocationRatio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
}

impl ScriptEntry {
    pub fn shares(shares: &[f64]) -> Self {
        Self {
            shares: Some(shares.to_vec()),
            response: None,
            error: None,
            prompt_tokens: None,
            completion_tokens: None,
        }
    }

    pub fn response(text: &str) -> Self {
        Self {
            shares: None,
            response: Some(text.to_string()),
            ..Self::shares(&[])
        }
    }

    pub fn error(msg: &str) -> Self {
        Self {
            shares: None,
            error: Some(msg.to_string()),
            ..Self::shares(&[])
        }
    }

    pub fn with_tokens(mut self, prompt: u64, completion: u64) -> Self {
        self.prompt_tokens = Some(prompt);
        self.completion_tokens = Some(completion);
        self
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    cursor: usize,
    /// Replays the last entry forever once the script runs out.
    repeat_last: bool,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            entries,
            cursor: 0,
            repeat_last: false,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(Self::new(serde_json::from_str(&text)?))
    }

    pub fn repeating(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    pub fn calls(&self) -> usize {
        self.cursor
    }

    fn next_entry(&mut self) -> Result<ScriptEntry> {
        let idx = if self.cursor < self.entries.len() {
            self.cursor
        } else if self.repeat_last && !self.entries.is_empty() {
            self.entries.len() - 1
        } else {
            return Err(Error::Backend(format!(
                "script exhausted after {} decisions",
                self.entries.len()
            )));
        };
        self.cursor += 1;
        Ok(self.entries[idx].clone())
    }
}

fn reported(entry: &ScriptEntry) -> Option<TokenUsage> {
    match (entry.prompt_tokens, entry.completion_tokens) {
        (Some(prompt), Some(completion)) => Some(TokenUsage { prompt, completion }),
        _ => None,
    }
}

impl DecisionBackend for ScriptedBackend {
    fn label(&self) -> &str {
        "scripted"
    }

    fn propose_allocation(&mut self, request: &DecisionRequest) -> Result<DecisionOutcome> {
        let first = self.next_entry()?;
        if let Some(msg) = &first.error {
            return Err(Error::Backend(msg.clone()));
        }
        if let Some(shares) = &first.shares {
            let allocation = AllocationRatio::new(shares.clone())?;
            allocation.check_min_share(request.total_rbs)?;
            let raw_response = serde_json::json!({ "shares": shares }).to_string();
            let usage = reported(&first).unwrap_or(TokenUsage {
                prompt: count_tokens(&request.prompt.rendered_text, TokenMode::Approximate),
                completion: count_tokens(&raw_response, TokenMode::Approximate),
            });
            return Ok(DecisionOutcome {
                allocation,
                prompt_tokens: usage.prompt,
                completion_tokens: usage.completion,
                backend_label: self.label().to_string(),
                raw_response,
            });
        }
        let mut pending = Some(first);
        propose_via_text("scripted", request, |_prompt| {
            let entry = match pending.take() {
                Some(e) => e,
                None => self.next_entry()?,
            };
            if let Some(msg) = &entry.error {
                return Err(Error::Backend(msg.clone()));
            }
            let text = entry
                .response
                .clone()
                .or_else(|| {
                    entry
                        .shares
                        .as_ref()
                        .map(|s| serde_json::json!({ "shares": s }).to_string())
                })
                .unwrap_or_default();
            Ok(Completion {
                usage: reported(&entry),
                text,
            })
        })
    }
}
