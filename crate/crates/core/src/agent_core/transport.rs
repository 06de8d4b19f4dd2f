//! The model interface: a conversation goes in, one turn of text comes out.
//!
//! Sessions only ever talk to [`ModelTransport`], so the same loop runs
//! against a live endpoint or a scripted stand-in. The scripted transport is
//! the one used in tests and demos: it serves a fixed sequence of turns and
//! reports deterministic token usage, which makes whole sessions replayable.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One model turn with its token accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelTurn {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    /// A scripted transport ran out of prepared turns.
    #[error("the scripted transport has no more turns")]
    ScriptExhausted,
    #[error("transport failure: {0}")]
    Failed(String),
}

pub trait ModelTransport: Send {
    /// Produces the next assistant turn for the given conversation.
    fn complete(&mut self, conversation: &[Message]) -> Result<ModelTurn, TransportError>;
}

/// Deterministic token estimate used when a script does not pin usage:
/// one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64 + 3) / 4
}

/// One prepared turn of a script. Token counts default to
/// [`estimate_tokens`] over the conversation (input) and the text (output);
/// pinning them lets tests drive the budget precisely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedTurn {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

impl ScriptedTurn {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedTurn {
            text: text.into(),
            input_tokens: None,
            output_tokens: None,
        }
    }

    pub fn with_usage(text: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        ScriptedTurn {
            text: text.into(),
            input_tokens: Some(input_tokens),
            output_tokens: Some(output_tokens),
        }
    }
}

/// Serves prepared turns in order; errs with
/// [`TransportError::ScriptExhausted`] when asked for more.
pub struct ScriptedTransport {
    turns: VecDeque<ScriptedTurn>,
    pub served: usize,
}

impl ScriptedTransport {
    pub fn new<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedTransport {
            turns: texts.into_iter().map(|t| ScriptedTurn::text(t)).collect(),
            served: 0,
        }
    }

    pub fn from_turns(turns: Vec<ScriptedTurn>) -> Self {
        ScriptedTransport {
            turns: turns.into(),
            served: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.turns.len()
    }
}

impl ModelTransport for ScriptedTransport {
    fn complete(&mut self, conversation: &[Message]) -> Result<ModelTurn, TransportError> {
        let turn = self
            .turns
            .pop_front()
            .ok_or(TransportError::ScriptExhausted)?;
        self.served += 1;
        let input_tokens = turn.input_tokens.unwrap_or_else(|| {
            conversation
                .iter()
                .map(|m| estimate_tokens(&m.content))
                .sum()
        });
        let output_tokens = turn
            .output_tokens
            .unwrap_or_else(|| estimate_tokens(&turn.text));
        Ok(ModelTurn {
            text: turn.text,
            input_tokens,
            output_tokens,
        })
    }
}
