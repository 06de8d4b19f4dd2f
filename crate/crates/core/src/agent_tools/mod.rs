//! The agent-facing tool layer: the plain-text call grammar models emit,
//! resource budgets, and the workspace tools themselves.
//!
//! Calls are parsed out of free-form model output; the first parseable call
//! in a turn is the one that runs. Tool results are plain text, truncated to
//! a fixed payload cap before they re-enter the conversation.

mod workspace;

pub use workspace::{
    render_evidence, SessionWorkspace, TestPhase, TestReport, ToolExecutor, ToolResult,
    WorkspaceError,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the text of one tool result as seen by the model.
pub const MAX_PAYLOAD_CHARS: usize = 8_000;

/// Marker appended when a payload was cut at [`MAX_PAYLOAD_CHARS`].
pub const TRUNCATION_MARKER: &str = "\n... [output truncated]";

/// Every tool an agent can call, with a one-line usage summary. `stop` is
/// stage control; everything else operates on the workspace or toolchain.
pub const ALL_TOOLS: &[(&str, &str)] = &[
    ("find", "find(pattern=\"name\"): list workspace files whose path contains the pattern"),
    ("grep", "grep(pattern=\"regex\", path=\"prefix\"): search file contents; path is optional"),
    ("list", "list(path=\"dir\"): list the entries of a workspace directory"),
    ("read", "read(path=\"file\", start=\"10\", end=\"40\"): print numbered source lines; bounds optional"),
    ("edit", "edit(path=\"file\", old=<<EOF..., new=<<EOF...): replace one unique occurrence of old with new"),
    ("preview", "preview(): show the current workspace changes as a unified diff"),
    ("code", "code(symbol=\"Class::method\"): print the definition of a function"),
    ("docs", "docs(query=\"words\"): search the reference documentation"),
    ("langref", "langref(query=\"keyword\"): search the IR language reference"),
    ("debug", "debug(commands=<<EOF...): run debugger commands against the current build and reproducer"),
    ("eval", "eval(ir=<<EOF..., flags=\"-passes=x -S\"): run the optimizer on given IR; flags optional"),
    ("reset", "reset(): discard every workspace edit"),
    ("test", "test(): build the patch, re-check the bug, and run component tests"),
    ("stop", "stop(reason=\"text\"): end the current stage"),
];

/// One parsed tool invocation: a name plus string-valued keyword arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub args: BTreeMap<String, String>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>) -> Self {
        ToolCall {
            name: name.into(),
            args: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.args.insert(key.into(), value.into());
        self
    }

    pub fn arg(&self, key: &str) -> Option<&str> {
        self.args.get(key).map(String::as_str)
    }
}

/// Truncates a payload to [`MAX_PAYLOAD_CHARS`], appending a marker when
/// anything was cut.
pub fn truncate_payload(text: &str) -> String {
    if text.chars().count() <= MAX_PAYLOAD_CHARS {
        return text.to_string();
    }
    let kept: String = text.chars().take(MAX_PAYLOAD_CHARS).collect();
    format!("{kept}{TRUNCATION_MARKER}")
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Scans free-form model output and returns the first parseable tool call.
///
/// A candidate is an identifier directly followed by `(` that is not part of
/// a longer dotted or qualified name. Candidates that do not parse as
/// `name(key=value, ...)` are skipped, which filters out ordinary code
/// snippets like `foo(x, y)` mentioned in prose.
pub fn parse_first_tool_call(text: &str) -> Option<ToolCall> {
    let chars: Vec<char> = text.chars().collect();
    for i in 0..chars.len() {
        if !is_ident_start(chars[i]) {
            continue;
        }
        if i > 0 && (is_ident_char(chars[i - 1]) || chars[i - 1] == '.' || chars[i - 1] == ':') {
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_ident_char(chars[j]) {
            j += 1;
        }
        if j >= chars.len() || chars[j] != '(' {
            continue;
        }
        if let Ok(call) = parse_call_at(&chars, i, j) {
            return Some(call);
        }
    }
    None
}

#[derive(Debug, Error, PartialEq, Eq)]
enum CallParseError {
    #[error("unterminated call")]
    Unterminated,
    #[error("malformed argument")]
    Malformed,
    #[error("duplicate argument")]
    DuplicateKey,
}

fn parse_call_at(
    chars: &[char],
    name_start: usize,
    open_paren: usize,
) -> Result<ToolCall, CallParseError> {
    let name: String = chars[name_start..open_paren].iter().collect();
    let mut args = BTreeMap::new();
    let mut pos = open_paren + 1;

    loop {
        pos = skip_ws(chars, pos);
        match chars.get(pos) {
            Some(')') => break,
            None => return Err(CallParseError::Unterminated),
            _ => {}
        }

        // key
        if !is_ident_start(*chars.get(pos).ok_or(CallParseError::Unterminated)?) {
            return Err(CallParseError::Malformed);
        }
        let key_start = pos;
        while pos < chars.len() && is_ident_char(chars[pos]) {
            pos += 1;
        }
        let key: String = chars[key_start..pos].iter().collect();

        pos = skip_ws(chars, pos);
        if chars.get(pos) != Some(&'=') {
            return Err(CallParseError::Malformed);
        }
        pos += 1;
        pos = skip_ws(chars, pos);

        // value: heredoc, quoted string, or bare token
        let value;
        if chars.get(pos) == Some(&'<') && chars.get(pos + 1) == Some(&'<') {
            let (v, next) = parse_heredoc(chars, pos + 2)?;
            value = v;
            pos = next;
        } else if chars.get(pos) == Some(&'"') {
            let (v, next) = parse_quoted(chars, pos + 1)?;
            value = v;
            pos = next;
        } else {
            let (v, next) = parse_bare(chars, pos)?;
            value = v;
            pos = next;
        }

        if args.insert(key, value).is_some() {
            return Err(CallParseError::DuplicateKey);
        }

        pos = skip_ws(chars, pos);
        match chars.get(pos) {
            Some(',') => pos += 1,
            Some(')') => break,
            _ => return Err(CallParseError::Malformed),
        }
    }

    Ok(ToolCall {
        name,
        args,
    })
}

fn skip_ws(chars: &[char], mut pos: usize) -> usize {
    while pos < chars.len() && chars[pos].is_whitespace() {
        pos += 1;
    }
    pos
}

/// `<<TAG\nbody lines\nTAG` where the terminator stands alone on its line.
/// The body keeps one trailing newline per line, shell-heredoc style.
fn parse_heredoc(chars: &[char], mut pos: usize) -> Result<(String, usize), CallParseError> {
    let tag_start = pos;
    while pos < chars.len() && is_ident_char(chars[pos]) {
        pos += 1;
    }
    if pos == tag_start {
        return Err(CallParseError::Malformed);
    }
    let tag: String = chars[tag_start..pos].iter().collect();
    // rest of the opener line must be empty
    while pos < chars.len() && chars[pos] != '\n' {
        if !chars[pos].is_whitespace() {
            return Err(CallParseError::Malformed);
        }
        pos += 1;
    }
    if pos >= chars.len() {
        return Err(CallParseError::Unterminated);
    }
    pos += 1; // consume the newline

    let mut body = String::new();
    loop {
        // collect one line
        let line_start = pos;
        while pos < chars.len() && chars[pos] != '\n' {
            pos += 1;
        }
        let line: String = chars[line_start..pos].iter().collect();
        let at_end = pos >= chars.len();
        if line.trim_end_matches('\r') == tag {
            if !at_end {
                pos += 1; // consume the terminator's newline
            }
            return Ok((body, pos));
        }
        if at_end {
            return Err(CallParseError::Unterminated);
        }
        body.push_str(&line);
        body.push('\n');
        pos += 1;
    }
}

/// Double-quoted string with `\"`, `\\`, `\n`, and `\t` escapes.
fn parse_quoted(chars: &[char], mut pos: usize) -> Result<(String, usize), CallParseError> {
    let mut out = String::new();
    while pos < chars.len() {
        match chars[pos] {
            '"' => return Ok((out, pos + 1)),
            '\\' => {
                let escaped = chars.get(pos + 1).ok_or(CallParseError::Unterminated)?;
                match escaped {
                    '"' => out.push('"'),
                    '\\' => out.push('\\'),
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    other => {
                        out.push('\\');
                        out.push(*other);
                    }
                }
                pos += 2;
            }
            '\n' => return Err(CallParseError::Malformed), // strings stay on one line
            c => {
                out.push(c);
                pos += 1;
            }
        }
    }
    Err(CallParseError::Unterminated)
}

/// Bare token: anything up to the next comma, closing parenthesis, or line
/// end; must be non-empty after trimming.
fn parse_bare(chars: &[char], mut pos: usize) -> Result<(String, usize), CallParseError> {
    let start = pos;
    while pos < chars.len() && !matches!(chars[pos], ',' | ')' | '\n') {
        pos += 1;
    }
    if chars.get(pos) == Some(&'\n') {
        return Err(CallParseError::Malformed);
    }
    let token: String = chars[start..pos].iter().collect();
    let token = token.trim().to_string();
    if token.is_empty() {
        return Err(CallParseError::Malformed);
    }
    Ok((token, pos))
}

/// Renders a call in the same grammar the parser accepts. Values ending in a
/// newline become heredocs (the natural shape for source text); everything
/// else is a quoted string with escapes, so
/// `parse_first_tool_call(render_tool_call(c))` returns `c` exactly.
pub fn render_tool_call(call: &ToolCall) -> String {
    let mut out = format!("{}(", call.name);
    let mut first = true;
    for (key, value) in &call.args {
        if !first {
            out.push_str(", ");
        }
        first = false;
        if value.ends_with('\n') {
            let tag = heredoc_tag(value);
            out.push_str(&format!("{key}=<<{tag}\n"));
            out.push_str(value);
            out.push_str(&tag);
            out.push('\n');
        } else {
            let escaped = value
                .replace('\\', "\\\\")
                .replace('"', "\\\"")
                .replace('\n', "\\n");
            out.push_str(&format!("{key}=\"{escaped}\""));
        }
    }
    out.push(')');
    out
}

/// A terminator tag that does not collide with any body line.
fn heredoc_tag(value: &str) -> String {
    let mut tag = "EOF".to_string();
    while value.lines().any(|l| l.trim_end_matches('\r') == tag) {
        tag.push('_');
    }
    tag
}

/// Resource limits for one agent session. The serde defaults equal
/// [`BudgetConfig::default`], so partial config sections fill in the
/// standard limits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Maximum reasoning rounds (model turns).
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u64,
    /// Maximum cumulative tokens (input plus output) across the session.
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u64,
    /// Maximum tokens in a single model turn (input plus output).
    #[serde(default = "default_max_turn_context")]
    pub max_turn_context: u64,
    /// Maximum `edit` calls.
    #[serde(default = "default_max_edits")]
    pub max_edits: u64,
    /// Maximum `test` calls.
    #[serde(default = "default_max_tests")]
    pub max_tests: u64,
}

fn default_max_rounds() -> u64 {
    500
}
fn default_max_tokens() -> u64 {
    5_000_000
}
fn default_max_turn_context() -> u64 {
    64_000
}
fn default_max_edits() -> u64 {
    25
}
fn default_max_tests() -> u64 {
    25
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_rounds: default_max_rounds(),
            max_tokens: default_max_tokens(),
            max_turn_context: default_max_turn_context(),
            max_edits: default_max_edits(),
            max_tests: default_max_tests(),
        }
    }
}

/// Which limit a session ran into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetExceeded {
    Rounds,
    Tokens,
    TurnContext,
    Edits,
    Tests,
}

impl std::fmt::Display for BudgetExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BudgetExceeded::Rounds => "round limit",
            BudgetExceeded::Tokens => "token limit",
            BudgetExceeded::TurnContext => "per-turn context limit",
            BudgetExceeded::Edits => "edit limit",
            BudgetExceeded::Tests => "test limit",
        };
        f.write_str(s)
    }
}

/// Live budget counters. Checks happen before increments: the call that
/// would exceed a limit is refused and the counter stays at the maximum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub config: BudgetConfig,
    pub rounds: u64,
    pub tokens: u64,
    pub edits: u64,
    pub tests: u64,
}

impl Budget {
    pub fn new(config: BudgetConfig) -> Self {
        Budget {
            config,
            rounds: 0,
            tokens: 0,
            edits: 0,
            tests: 0,
        }
    }

    pub fn try_round(&mut self) -> Result<(), BudgetExceeded> {
        if self.rounds >= self.config.max_rounds {
            return Err(BudgetExceeded::Rounds);
        }
        self.rounds += 1;
        Ok(())
    }

    pub fn try_edit(&mut self) -> Result<(), BudgetExceeded> {
        if self.edits >= self.config.max_edits {
            return Err(BudgetExceeded::Edits);
        }
        self.edits += 1;
        Ok(())
    }

    pub fn try_test(&mut self) -> Result<(), BudgetExceeded> {
        if self.tests >= self.config.max_tests {
            return Err(BudgetExceeded::Tests);
        }
        self.tests += 1;
        Ok(())
    }

    /// Accounts one turn's tokens. The turn-context check comes first; a
    /// turn that alone exceeds the context window is a context overflow, not
    /// a token overflow, regardless of the cumulative count.
    pub fn add_turn_tokens(&mut self, turn_tokens: u64) -> Result<(), BudgetExceeded> {
        if turn_tokens > self.config.max_turn_context {
            return Err(BudgetExceeded::TurnContext);
        }
        self.tokens = self.tokens.saturating_add(turn_tokens);
        if self.tokens > self.config.max_tokens {
            return Err(BudgetExceeded::Tokens);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
