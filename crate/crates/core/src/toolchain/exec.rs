//! Tool execution behind a record/replay seam.
//!
//! Every interaction with an external tool is addressed by an [`ExecKey`]:
//! the build fingerprint it runs against, a logical tool name, the argv, and
//! a hash of stdin. [`SubprocessExec`] actually spawns processes;
//! [`RecordingExec`] wraps another executor and persists every transcript to
//! a [`FixtureStore`]; [`ReplayExec`] serves only from the store, which is
//! what makes benchmark validation and evaluation runs deterministic.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identity of one tool invocation. Two invocations with equal keys are
/// assumed to behave identically, which is what replay relies on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecKey {
    /// Build identity: a commit id, or `commit+patchhash` for patched builds.
    pub fingerprint: String,
    /// Logical tool: `build`, `opt`, `alive-tv`, `lit`.
    pub tool: String,
    pub argv: Vec<String>,
    /// Hex sha256 of the stdin bytes.
    pub stdin_sha: String,
}

impl ExecKey {
    pub fn new(
        fingerprint: impl Into<String>,
        tool: impl Into<String>,
        argv: Vec<String>,
        stdin: &[u8],
    ) -> Self {
        ExecKey {
            fingerprint: fingerprint.into(),
            tool: tool.into(),
            argv,
            stdin_sha: sha256_hex(stdin),
        }
    }

    /// Stable content address used as the fixture directory name.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("key serializes");
        sha256_hex(&canonical)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(skip)]
    pub stdout: Vec<u8>,
    #[serde(skip)]
    pub stderr: Vec<u8>,
    pub exit_code: i32,
    pub timed_out: bool,
}

impl Transcript {
    pub fn ok(stdout: impl Into<Vec<u8>>, stderr: impl Into<Vec<u8>>) -> Self {
        Transcript {
            stdout: stdout.into(),
            stderr: stderr.into(),
            exit_code: 0,
            timed_out: false,
        }
    }

    pub fn failed(code: i32, stdout: impl Into<Vec<u8>>, stderr: impl Into<Vec<u8>>) -> Self {
        Transcript {
            stdout: stdout.into(),
            stderr: stderr.into(),
            exit_code: code,
            timed_out: false,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }

    pub fn stdout_text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_text(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExecError {
    #[error("no command configured for tool {0:?}")]
    UnknownTool(String),
    #[error("failed to spawn {tool}: {reason}")]
    Spawn { tool: String, reason: String },
    #[error("io during {tool}: {reason}")]
    Io { tool: String, reason: String },
    #[error("no recorded transcript for {tool} {argv:?} (digest {digest})")]
    MissingTranscript {
        digest: String,
        tool: String,
        argv: Vec<String>,
    },
    #[error("fixture store: {0}")]
    Store(String),
}

#[derive(Debug)]
pub struct ExecRequest<'a> {
    pub key: ExecKey,
    pub stdin: &'a [u8],
    pub timeout: Duration,
}

impl<'a> ExecRequest<'a> {
    pub fn new(
        fingerprint: impl Into<String>,
        tool: impl Into<String>,
        argv: Vec<String>,
        stdin: &'a [u8],
        timeout: Duration,
    ) -> Self {
        ExecRequest {
            key: ExecKey::new(fingerprint, tool, argv, stdin),
            stdin,
            timeout,
        }
    }
}

/// The single seam through which tools run. Implementations must be safe to
/// share across evaluation worker threads.
pub trait Exec: Send + Sync {
    fn exec(&self, req: &ExecRequest) -> Result<Transcript, ExecError>;
}

/// How to launch one logical tool as a real process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolCommand {
    pub program: String,
    /// Arguments placed before the key argv. `{fingerprint}` expands to the
    /// request's build fingerprint.
    #[serde(default)]
    pub args_prefix: Vec<String>,
}

/// Spawns configured commands, feeds stdin, captures output, enforces the
/// request timeout by polling and killing.
pub struct SubprocessExec {
    commands: BTreeMap<String, ToolCommand>,
    workdir: Option<PathBuf>,
}

/// Process group of a live process, from /proc. `None` off Linux or when the
/// process is gone.
fn proc_pgid(pid: u32) -> Option<i64> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // fields after the parenthesized comm: state ppid pgrp ...
    let rest = stat.get(stat.rfind(')')? + 1..)?;
    rest.split_whitespace().nth(2)?.parse().ok()
}

impl SubprocessExec {
    pub fn new(commands: BTreeMap<String, ToolCommand>) -> Self {
        SubprocessExec {
            commands,
            workdir: None,
        }
    }

    pub fn with_workdir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(dir.into());
        self
    }
}

impl Exec for SubprocessExec {
    fn exec(&self, req: &ExecRequest) -> Result<Transcript, ExecError> {
        let tool = &req.key.tool;
        let spec = self
            .commands
            .get(tool)
            .ok_or_else(|| ExecError::UnknownTool(tool.clone()))?;
        let io_err = |e: std::io::Error| ExecError::Io {
            tool: tool.clone(),
            reason: e.to_string(),
        };

        let mut cmd = Command::new(&spec.program);
        for arg in &spec.args_prefix {
            cmd.arg(arg.replace("{fingerprint}", &req.key.fingerprint));
        }
        cmd.args(&req.key.argv)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // Own process group, so a timeout can take grandchildren down too and
        // the output pipes actually close.
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        if let Some(dir) = &self.workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| ExecError::Spawn {
            tool: tool.clone(),
            reason: e.to_string(),
        })?;

        let mut stdin_pipe = child.stdin.take().expect("stdin piped");
        let stdin_bytes = req.stdin.to_vec();
        let writer = std::thread::spawn(move || {
            // the child may exit without draining stdin; that is fine
            let _ = stdin_pipe.write_all(&stdin_bytes);
        });
        let mut stdout_pipe = child.stdout.take().expect("stdout piped");
        let mut stderr_pipe = child.stderr.take().expect("stderr piped");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout_pipe.read_to_end(&mut buf);
            buf
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr_pipe.read_to_end(&mut buf);
            buf
        });

        let started = Instant::now();
        let mut timed_out = false;
        let mut group_killed = false;
        let exit_code = loop {
            match child.try_wait().map_err(io_err)? {
                Some(status) => break status.code().unwrap_or(-1),
                None if started.elapsed() >= req.timeout => {
                    // Kill the whole group, but only when the child really
                    // leads its own group; otherwise a negative-pid kill
                    // would hit this process too.
                    if proc_pgid(child.id()) == Some(child.id() as i64) {
                        group_killed = Command::new("kill")
                            .args(["-s", "KILL", "--", &format!("-{}", child.id())])
                            .status()
                            .map(|s| s.success())
                            .unwrap_or(false);
                    }
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break -1;
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        if timed_out && !group_killed {
            // Grandchildren may still hold the output pipes open, so joining
            // the readers could stall. Abandon them; a timed-out run's
            // partial output is not worth waiting for.
            return Ok(Transcript {
                stdout: Vec::new(),
                stderr: Vec::new(),
                exit_code,
                timed_out,
            });
        }
        let _ = writer.join();
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        Ok(Transcript {
            stdout,
            stderr,
            exit_code,
            timed_out,
        })
    }
}

/// On-disk transcript store: one directory per key digest holding the key,
/// both output streams, and the exit status.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    root: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExitRecord {
    exit_code: i32,
    timed_out: bool,
}

impl FixtureStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ExecError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| ExecError::Store(e.to_string()))?;
        Ok(FixtureStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, key: &ExecKey) -> PathBuf {
        self.root.join(key.digest())
    }

    pub fn contains(&self, key: &ExecKey) -> bool {
        self.dir(key).join("exit.json").exists()
    }

    pub fn save(&self, key: &ExecKey, transcript: &Transcript) -> Result<(), ExecError> {
        let store = |e: std::io::Error| ExecError::Store(e.to_string());
        let dir = self.dir(key);
        fs::create_dir_all(&dir).map_err(store)?;
        fs::write(
            dir.join("key.json"),
            serde_json::to_vec_pretty(key).expect("key serializes"),
        )
        .map_err(store)?;
        fs::write(dir.join("stdout.bin"), &transcript.stdout).map_err(store)?;
        fs::write(dir.join("stderr.bin"), &transcript.stderr).map_err(store)?;
        let exit = ExitRecord {
            exit_code: transcript.exit_code,
            timed_out: transcript.timed_out,
        };
        fs::write(
            dir.join("exit.json"),
            serde_json::to_vec_pretty(&exit).expect("exit serializes"),
        )
        .map_err(store)
    }

    pub fn load(&self, key: &ExecKey) -> Result<Option<Transcript>, ExecError> {
        let dir = self.dir(key);
        if !dir.join("exit.json").exists() {
            return Ok(None);
        }
        let store = |e: std::io::Error| ExecError::Store(e.to_string());
        let exit: ExitRecord = serde_json::from_slice(
            &fs::read(dir.join("exit.json")).map_err(store)?,
        )
        .map_err(|e| ExecError::Store(e.to_string()))?;
        Ok(Some(Transcript {
            stdout: fs::read(dir.join("stdout.bin")).map_err(store)?,
            stderr: fs::read(dir.join("stderr.bin")).map_err(store)?,
            exit_code: exit.exit_code,
            timed_out: exit.timed_out,
        }))
    }
}

/// Runs through the inner executor and records every transcript.
pub struct RecordingExec<E> {
    inner: E,
    store: FixtureStore,
}

impl<E: Exec> RecordingExec<E> {
    pub fn new(inner: E, store: FixtureStore) -> Self {
        RecordingExec { inner, store }
    }
}

impl<E: Exec> Exec for RecordingExec<E> {
    fn exec(&self, req: &ExecRequest) -> Result<Transcript, ExecError> {
        let transcript = self.inner.exec(req)?;
        self.store.save(&req.key, &transcript)?;
        Ok(transcript)
    }
}

/// Serves transcripts from a store and refuses to run anything new.
pub struct ReplayExec {
    store: FixtureStore,
}

impl ReplayExec {
    pub fn new(store: FixtureStore) -> Self {
        ReplayExec { store }
    }
}

impl Exec for ReplayExec {
    fn exec(&self, req: &ExecRequest) -> Result<Transcript, ExecError> {
        self.store
            .load(&req.key)?
            .ok_or_else(|| ExecError::MissingTranscript {
                digest: req.key.digest(),
                tool: req.key.tool.clone(),
                argv: req.key.argv.clone(),
            })
    }
}
