//! Backend-agnostic text-completion interface with a wire client for
//! OpenAI-compatible servers and a deterministic scripted mock, plus the
//! separated-critic clients.

mod critic;
mod http;
mod scripted;

pub use critic::{
    critique_outcome, critique_reasoning, critique_retrieval, CriticError, GENERATOR_PROMPT,
    OUTCOME_CRITIC_PROMPT, REASONING_CRITIC_PROMPT, RETRIEVAL_CRITIC_PROMPT,
};
pub use http::{HttpBackend, HttpBackendConfig, API_KEY_ENV};
pub use scripted::{ScriptBundle, ScriptTurn, ScriptedBackend};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Chat template wrapped around instruction text.
pub fn wrap_instruction(instruction: &str) -> String {
    format!("[INST] {instruction} [/INST]")
}

/// A completion request: generate a continuation of `prefix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub prefix: String,
    pub stops: Vec<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

impl GenRequest {
    pub fn new(prefix: impl Into<String>) -> Self {
        GenRequest {
            prefix: prefix.into(),
            stops: Vec::new(),
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
        }
    }

    pub fn with_stops(mut self, stops: &[&str]) -> Self {
        self.stops = stops.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinishReason {
    /// Generation hit one of the request's stop strings (the matched one).
    Stop(String),
    /// Generation hit the max_tokens budget.
    Length,
    /// The model ended the sequence on its own.
    End,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenResponse {
    /// Continuation text; never contains a stop string.
    pub text: String,
    pub finish: FinishReason,
    pub usage: Usage,
    /// Wall time attributed to this call, microseconds. Zero for the
    /// scripted mock so scripted runs serialize deterministically.
    pub elapsed_us: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server error: status {0}")]
    ServerError(u16),
    #[error("scripted backend ran out of turns (turn {0})")]
    ScriptExhausted(usize),
    #[error("scripted turn {turn} expected prompt containing {expected:?}")]
    ScriptMismatch { turn: usize, expected: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed server response: {0}")]
    MalformedResponse(String),
}

/// A handle to a completion backend. Sessions scope per-run state (the
/// scripted mock serializes its turn order per run; wire clients are
/// stateless and hand out cheap sessions).
pub trait GenBackend: Send + Sync {
    /// Start a session for one run, keyed by the run's question (the
    /// scripted mock uses the key to pick a per-run script).
    fn session(&self, run_key: &str) -> Result<Box<dyn GenSession + '_>, BackendError>;
}

pub trait GenSession: Send {
    fn complete(&mut self, req: &GenRequest) -> Result<GenResponse, BackendError>;
}

/// Count whitespace-delimited tokens; the accounting unit for the scripted
/// mock's usage fields.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Apply stop-string and token-budget truncation to mock backend output:
/// the earliest stop occurrence cuts the text (stop excluded), then the
/// token budget truncates whatever survived.
pub fn truncate_mock(full: &str, req: &GenRequest) -> (String, FinishReason) {
    let mut cut: Option<(usize, &str)> = None;
    for stop in &req.stops {
        if let Some(i) = full.find(stop.as_str()) {
            if cut.map_or(true, |(j, _)| i < j) {
                cut = Some((i, stop));
            }
        }
    }
    let (mut text, mut finish) = match cut {
        Some((i, stop)) => (full[..i].to_string(), FinishReason::Stop(stop.to_string())),
        None => (full.to_string(), FinishReason::End),
    };
    if approx_tokens(&text) > u64::from(req.max_tokens) {
        let kept: Vec<&str> = text
            .split_whitespace()
            .take(req.max_tokens as usize)
            .collect();
        text = kept.join(" ");
        finish = FinishReason::Length;
    }
    (text, finish)
}
