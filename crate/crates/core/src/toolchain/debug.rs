//! Interactive debugger sessions over the compiler under test.
//!
//! Sessions speak plain text: one command in, one response out. The scripted
//! implementation answers from a canned command table, which keeps agent runs
//! reproducible; the process-backed one drives a real line-oriented debugger.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DebugError {
    #[error("no debugger available: {0}")]
    NotAvailable(String),
    #[error("debugger io: {0}")]
    Io(String),
    #[error("debugger session closed")]
    SessionClosed,
}

pub trait DebuggerSession: Send {
    /// Executes one debugger command and returns its textual response.
    fn run_command(&mut self, command: &str) -> Result<String, DebugError>;
}

/// Creates sessions bound to a specific build fingerprint.
pub trait DebuggerFactory: Send + Sync {
    fn start(
        &self,
        fingerprint: &str,
        opt_flags: &[String],
        ir_text: &str,
    ) -> Result<Box<dyn DebuggerSession>, DebugError>;
}

/// Canned responses for one session: exact command text to response.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DebugScript {
    pub responses: BTreeMap<String, String>,
    /// Answer for commands not in the table.
    #[serde(default)]
    pub fallback: Option<String>,
}

const DEFAULT_FALLBACK: &str = "(no output)";

pub struct ScriptedDebuggerSession {
    script: DebugScript,
    pub command_log: Vec<String>,
}

impl DebuggerSession for ScriptedDebuggerSession {
    fn run_command(&mut self, command: &str) -> Result<String, DebugError> {
        let command = command.trim();
        self.command_log.push(command.to_string());
        Ok(self
            .script
            .responses
            .get(command)
            .cloned()
            .or_else(|| self.script.fallback.clone())
            .unwrap_or_else(|| DEFAULT_FALLBACK.to_string()))
    }
}

/// Scripted sessions keyed by build fingerprint. A missing entry falls back
/// to the `""` script when present.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDebuggerFactory {
    scripts: BTreeMap<String, DebugScript>,
}

impl ScriptedDebuggerFactory {
    pub fn new(scripts: BTreeMap<String, DebugScript>) -> Self {
        ScriptedDebuggerFactory { scripts }
    }
}

impl DebuggerFactory for ScriptedDebuggerFactory {
    fn start(
        &self,
        fingerprint: &str,
        _opt_flags: &[String],
        _ir_text: &str,
    ) -> Result<Box<dyn DebuggerSession>, DebugError> {
        let script = self
            .scripts
            .get(fingerprint)
            .or_else(|| self.scripts.get(""))
            .cloned()
            .ok_or_else(|| {
                DebugError::NotAvailable(format!("no debug script for {fingerprint}"))
            })?;
        Ok(Box::new(ScriptedDebuggerSession {
            script,
            command_log: Vec::new(),
        }))
    }
}

/// Always refuses; for configurations without a debugger.
pub struct NoDebugger;

impl DebuggerFactory for NoDebugger {
    fn start(
        &self,
        _fingerprint: &str,
        _opt_flags: &[String],
        _ir_text: &str,
    ) -> Result<Box<dyn DebuggerSession>, DebugError> {
        Err(DebugError::NotAvailable(
            "debugging is disabled in this configuration".to_string(),
        ))
    }
}

/// Drives a real line-oriented debugger process. Commands are written one
/// per line; a response is read until the configured prompt line appears.
pub struct ProcessDebuggerFactory {
    pub program: String,
    /// Arguments; `{fingerprint}` expands to the build fingerprint.
    pub args: Vec<String>,
    /// A line equal to this marks the end of one response.
    pub prompt: String,
}

struct ProcessDebuggerSession {
    child: Child,
    reader: BufReader<std::process::ChildStdout>,
    prompt: String,
}

impl ProcessDebuggerSession {
    fn read_until_prompt(&mut self) -> Result<String, DebugError> {
        let mut out = String::new();
        loop {
            let mut line = String::new();
            let n = self
                .reader
                .read_line(&mut line)
                .map_err(|e| DebugError::Io(e.to_string()))?;
            if n == 0 {
                return Err(DebugError::SessionClosed);
            }
            if line.trim_end() == self.prompt {
                return Ok(out);
            }
            out.push_str(&line);
        }
    }
}

impl DebuggerSession for ProcessDebuggerSession {
    fn run_command(&mut self, command: &str) -> Result<String, DebugError> {
        let stdin = self
            .child
            .stdin
            .as_mut()
            .ok_or(DebugError::SessionClosed)?;
        stdin
            .write_all(format!("{command}\n").as_bytes())
            .map_err(|e| DebugError::Io(e.to_string()))?;
        self.read_until_prompt()
    }
}

impl Drop for ProcessDebuggerSession {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl DebuggerFactory for ProcessDebuggerFactory {
    fn start(
        &self,
        fingerprint: &str,
        _opt_flags: &[String],
        _ir_text: &str,
    ) -> Result<Box<dyn DebuggerSession>, DebugError> {
        let mut cmd = Command::new(&self.program);
        for arg in &self.args {
            cmd.arg(arg.replace("{fingerprint}", fingerprint));
        }
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| DebugError::NotAvailable(e.to_string()))?;
        let stdout = child.stdout.take().expect("stdout piped");
        let mut session = ProcessDebuggerSession {
            child,
            reader: BufReader::new(stdout),
            prompt: self.prompt.clone(),
        };
        // swallow the startup banner
        session.read_until_prompt()?;
        Ok(Box::new(session))
    }
}
