//! Decision layer: meta-prompt construction, pluggable allocation backends,
//! response parsing and token accounting.

mod oracle;
mod parse;
mod prompt;
mod remote;
mod scripted;

pub use oracle::{heuristic_oracle_decide, HeuristicOracle, OracleConfig};
pub use parse::parse_allocation_response;
pub use prompt::{
    build_detection_prompt, build_meta_prompt, MetaPrompt, PromptExample, PromptPayload,
    PromptSlice,
};
pub use remote::{ChatMessage, ChatRequest, RemoteBackend, RemoteConfig, API_KEY_ENV};
pub use scripted::{ScriptEntry, ScriptedBackend};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AllocationRatio, SliceSpec};
use crate::predict::Snapshot;

/// How token usage is obtained for a piece of text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenMode {
    /// Count reported by the serving endpoint.
    Reported(u64),
    /// `ceil(bytes / 4)`, for offline backends.
    Approximate,
}

pub fn count_tokens(text: &str, mode: TokenMode) -> u64 {
    match mode {
        TokenMode::Reported(n) => n,
        TokenMode::Approximate => (text.len() as u64).div_ceil(4),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt += rhs.prompt;
        self.completion += rhs.completion;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub allocation: AllocationRatio,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend_label: String,
    pub raw_response: String,
}

impl DecisionOutcome {
    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            prompt: self.prompt_tokens,
            completion: self.completion_tokens,
        }
    }
}

/// Everything a backend may use to decide: the rendered prompt for
/// language-model backends, and a simulation snapshot for the oracle.
#[derive(Debug, Clone)]
pub struct DecisionRequest {
    pub prompt: MetaPrompt,
    pub snapshot: Snapshot,
    pub specs: Vec<SliceSpec>,
    pub theta: f64,
    pub current: AllocationRatio,
    pub total_rbs: u32,
}

pub trait DecisionBackend: Send {
    fn label(&self) -> &str;

    fn propose_allocation(&mut self, request: &DecisionRequest) -> Result<DecisionOutcome>;

    /// Token cost of asking the detection agent about the current interval.
    /// Offline backends charge an approximate count for the prompt and a
    /// one-line verdict.
    fn detection_usage(&mut self, prompt: &str, verdict: bool) -> Result<TokenUsage> {
        Ok(TokenUsage {
            prompt: count_tokens(prompt, TokenMode::Approximate),
            completion: count_tokens(&verdict_json(verdict), TokenMode::Approximate),
        })
    }
}

pub(crate) fn verdict_json(verdict: bool) -> String {
    format!("{{\"violation\":{verdict}}}")
}

/// Text in, text out, with usage if the endpoint reports it.
pub(crate) struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

/// Suffix appended to the prompt when the first answer could not be used.
pub(crate) fn retry_suffix(err: &Error) -> String {
    format!(
        "\n\nYour previous answer could not be used ({err}). Reply with exactly one JSON object \
         of the form {{\"shares\": [..]}} whose shares are in [0,1], sum to 1, and give every \
         slice at least one resource block."
    )
}

/// Parse-and-validate with one re-prompt on failure. Token usage of both
/// attempts is charged to the outcome.
pub(crate) fn propose_via_text(
    label: &str,
    request: &DecisionRequest,
    mut ask: impl FnMut(&str) -> Result<Completion>,
) -> Result<DecisionOutcome> {
    let slices = request.specs.len();
    let mut usage = TokenUsage::default();
    let mut prompt = request.prompt.rendered_text.clone();
    let mut last_err = None;
    for _attempt in 0..2 {
        let completion = ask(&prompt)?;
        usage += completion.usage.unwrap_or(TokenUsage {
            prompt: count_tokens(&prompt, TokenMode::Approximate),
            completion: count_tokens(&completion.text, TokenMode::Approximate),
        });
        let parsed = parse_allocation_response(&completion.text, slices).and_then(|a| {
            a.check_min_share(request.total_rbs)
                .map_err(|e| Error::Parse {
                    reason: e.to_string(),
                    text: completion.text.clone(),
                })?;
            Ok(a)
        });
        match parsed {
            Ok(allocation) => {
                return Ok(DecisionOutcome {
                    allocation,
                    prompt_tokens: usage.prompt,
                    completion_tokens: usage.completion,
                    backend_label: label.to_string(),
                    raw_response: completion.text,
                })
            }
            Err(e) => {
                prompt = format!("{}{}", request.prompt.rendered_text, retry_suffix(&e));
                last_err = Some(e);
            }
        }
    }
    Err(last_err.expect("two failed attempts"))
}
