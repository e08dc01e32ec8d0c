//! Deterministic scripted backend: an ordered per-run turn list.
//!
//! Scripts are keyed by run (question) rather than by prompt hash, so tests
//! stay robust to prompt-formatting tweaks. An optional per-turn expectation
//! asserts that a substring appears in the prompt (strict mode).

use super::{
    approx_tokens, BackendError, GenBackend, GenRequest, GenResponse, GenSession, Usage,
};
#[cfg(test)]
use super::FinishReason;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::BufRead;

/// One scripted completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptTurn {
    Text(String),
    Checked {
        text: String,
        /// Substring that must appear in the request prefix.
        expect: String,
    },
}

impl ScriptTurn {
    fn text(&self) -> &str {
        match self {
            ScriptTurn::Text(t) => t,
            ScriptTurn::Checked { text, .. } => text,
        }
    }

    fn expect(&self) -> Option<&str> {
        match self {
            ScriptTurn::Text(_) => None,
            ScriptTurn::Checked { expect, .. } => Some(expect),
        }
    }
}

/// On-disk script format: a default turn list plus per-run overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptBundle {
    #[serde(default)]
    pub default: Vec<ScriptTurn>,
    #[serde(default)]
    pub runs: HashMap<String, Vec<ScriptTurn>>,
}

impl ScriptBundle {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, BackendError> {
        serde_json::from_reader(reader).map_err(|e| BackendError::MalformedResponse(e.to_string()))
    }
}

pub struct ScriptedBackend {
    bundle: ScriptBundle,
}

impl ScriptedBackend {
    pub fn new(bundle: ScriptBundle) -> Self {
        ScriptedBackend { bundle }
    }

    /// Single-run convenience: every session replays the same turn list.
    pub fn from_turns<S: Into<String>>(turns: Vec<S>) -> Self {
        ScriptedBackend {
            bundle: ScriptBundle {
                default: turns.into_iter().map(|t| ScriptTurn::Text(t.into())).collect(),
                runs: HashMap::new(),
            },
        }
    }
}

impl GenBackend for ScriptedBackend {
    fn session(&self, run_key: &str) -> Result<Box<dyn GenSession + '_>, BackendError> {
        let turns = self
            .bundle
            .runs
            .get(run_key)
            .unwrap_or(&self.bundle.default)
            .clone();
        Ok(Box::new(ScriptedSession { turns, cursor: 0 }))
    }
}

struct ScriptedSession {
    turns: Vec<ScriptTurn>,
    cursor: usize,
}

impl GenSession for ScriptedSession {
    fn complete(&mut self, req: &GenRequest) -> Result<GenResponse, BackendError> {
        req.validate()?;
        let turn = self
            .turns
            .get(self.cursor)
            .ok_or(BackendError::ScriptExhausted(self.cursor))?;
        self.cursor += 1;
        if let Some(expected) = turn.expect() {
            if !req.prefix.contains(expected) {
                return Err(BackendError::ScriptMismatch {
                    turn: self.cursor - 1,
                    expected: expected.to_string(),
                });
            }
        }
        let (text, finish) = super::truncate_mock(turn.text(), req);

        Ok(GenResponse {
            usage: Usage {
                prompt_tokens: approx_tokens(&req.prefix),
                completion_tokens: approx_tokens(&text),
            },
            text,
            finish,
            elapsed_us: 0,
        })
    }
}
