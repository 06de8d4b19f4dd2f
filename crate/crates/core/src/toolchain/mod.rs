//! Access to the compiler under test: builds, bug probes, translation
//! validation, regression tests, and debugger sessions.
//!
//! All tool traffic funnels through one [`Exec`] implementation, so the same
//! facade drives real subprocesses, records them, or replays transcripts.

mod debug;
mod exec;
mod trace;
mod validate;

pub use debug::{
    DebugError, DebugScript, DebuggerFactory, DebuggerSession, NoDebugger,
    ProcessDebuggerFactory, ScriptedDebuggerFactory, ScriptedDebuggerSession,
};
pub use exec::{
    sha256_hex, Exec, ExecError, ExecKey, ExecRequest, FixtureStore, RecordingExec,
    ReplayExec, SubprocessExec, ToolCommand, Transcript,
};
pub use trace::{
    filter_stack_trace, parse_stack_trace, render_stack_trace, Frame, NoFramesRetained,
    StackTrace, DEFAULT_FRAME_DENYLIST,
};
pub use validate::{
    classify_validator_output, parse_counterexample, parse_lit_output,
    CounterexampleReport, LitSummary, ValidatorParseError, ValidatorVerdict,
};

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench_model::{BugType, CommitId, Reproducer};

/// Marks the boundary between source and target modules on the validator's
/// stdin.
pub const VALIDATOR_INPUT_SEPARATOR: &str = "\n; ----- target -----\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolchainConfig {
    /// Wall-clock limit for one optimizer run.
    pub opt_timeout: Duration,
    /// Wall-clock limit for one translation-validation run.
    pub validator_timeout: Duration,
    /// Wall-clock limit for a full build.
    pub build_timeout: Duration,
    /// Wall-clock limit for a regression-test run.
    pub lit_timeout: Duration,
    /// Regex patterns for stack frames to drop when filtering crash traces.
    pub frame_denylist: Vec<String>,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        ToolchainConfig {
            opt_timeout: Duration::from_secs(300),
            validator_timeout: Duration::from_secs(900),
            build_timeout: Duration::from_secs(3600),
            lit_timeout: Duration::from_secs(1800),
            frame_denylist: DEFAULT_FRAME_DENYLIST
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error("no source snapshot for commit {0}")]
    UnknownCommit(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Debug(#[from] DebugError),
}

/// A build that completed successfully, addressed by its fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildHandle {
    pub commit: CommitId,
    /// `commit` for pristine builds, `commit+hash12` for patched ones.
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub enum BuildOutcome {
    Ready(BuildHandle),
    Failed { log: String },
}

impl BuildOutcome {
    pub fn ready(self) -> Option<BuildHandle> {
        match self {
            BuildOutcome::Ready(h) => Some(h),
            BuildOutcome::Failed { .. } => None,
        }
    }
}

/// Fingerprint of a patched build: the base commit plus a short hash of the
/// exact patch text.
pub fn patched_fingerprint(commit: &CommitId, patch_text: &str) -> String {
    format!("{}+{}", commit, &sha256_hex(patch_text.as_bytes())[..12])
}

/// What a reproduction probe observed.
#[derive(Debug, Clone)]
pub enum ReproProbe {
    Reproduced(Evidence),
    NotReproduced,
    /// The probe could not decide (timeouts, unparseable validator output).
    Indeterminate { reason: String },
}

impl ReproProbe {
    pub fn reproduced(&self) -> bool {
        matches!(self, ReproProbe::Reproduced(_))
    }
}

/// Bug evidence extracted from a probe.
#[derive(Debug, Clone)]
pub enum Evidence {
    Crash {
        /// Retained frames after denylist filtering, or the full trace when
        /// filtering removed everything (see `fully_filtered`).
        frames: Vec<Frame>,
        /// True when the denylist dropped every frame and the unfiltered
        /// trace is being passed through.
        fully_filtered: bool,
        /// Raw crash output for reports.
        raw: String,
    },
    Miscompile {
        counterexample: CounterexampleReport,
    },
}

impl Evidence {
    pub fn matches(&self, bug_type: BugType) -> bool {
        matches!(
            (self, bug_type),
            (Evidence::Crash { .. }, BugType::Crash)
                | (Evidence::Miscompile { .. }, BugType::Miscompilation)
        )
    }
}

/// Scope selector for regression-test runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestScope {
    /// The lit tests of one transform, e.g. `InstSimplify`.
    Component(String),
    /// Every middle-end transform's tests.
    AllMiddleEnd,
    /// Explicit test paths.
    Paths(Vec<String>),
}

impl TestScope {
    /// Encoding used as the lit runner's argv.
    pub fn tokens(&self) -> Vec<String> {
        match self {
            TestScope::Component(name) => vec![format!("component:{name}")],
            TestScope::AllMiddleEnd => vec!["all-middle-end".to_string()],
            TestScope::Paths(paths) => {
                paths.iter().map(|p| format!("path:{p}")).collect()
            }
        }
    }
}

pub struct Toolchain {
    exec: Box<dyn Exec>,
    debugger: Box<dyn DebuggerFactory>,
    config: ToolchainConfig,
    snapshot_root: PathBuf,
}

impl Toolchain {
    pub fn new(
        exec: Box<dyn Exec>,
        debugger: Box<dyn DebuggerFactory>,
        config: ToolchainConfig,
        snapshot_root: impl Into<PathBuf>,
    ) -> Self {
        Toolchain {
            exec,
            debugger,
            config,
            snapshot_root: snapshot_root.into(),
        }
    }

    pub fn config(&self) -> &ToolchainConfig {
        &self.config
    }

    /// Directory holding the pristine source tree of a commit.
    pub fn snapshot_dir(&self, commit: &CommitId) -> PathBuf {
        self.snapshot_root.join(commit.as_str())
    }

    pub fn has_snapshot(&self, commit: &CommitId) -> bool {
        self.snapshot_dir(commit).is_dir()
    }

    /// Builds a commit, optionally with a patch applied. The patch text is
    /// the build's stdin, so patched builds are addressed by content.
    pub fn build(
        &self,
        commit: &CommitId,
        patch_text: Option<&str>,
    ) -> Result<BuildOutcome, ToolchainError> {
        if !self.has_snapshot(commit) {
            return Err(ToolchainError::UnknownCommit(commit.to_string()));
        }
        let fingerprint = match patch_text {
            Some(patch) => patched_fingerprint(commit, patch),
            None => commit.to_string(),
        };
        let stdin = patch_text.unwrap_or("").as_bytes();
        let req = ExecRequest::new(
            fingerprint.clone(),
            "build",
            Vec::new(),
            stdin,
            self.config.build_timeout,
        );
        let transcript = self.exec.exec(&req)?;
        if transcript.succeeded() {
            Ok(BuildOutcome::Ready(BuildHandle {
                commit: commit.clone(),
                fingerprint,
            }))
        } else {
            let mut log = transcript.stdout_text();
            log.push_str(&transcript.stderr_text());
            if transcript.timed_out {
                log.push_str("\n[build timed out]\n");
            }
            Ok(BuildOutcome::Failed { log })
        }
    }

    /// Runs the optimizer on a reproducer.
    pub fn run_opt(
        &self,
        handle: &BuildHandle,
        rep: &Reproducer,
    ) -> Result<Transcript, ToolchainError> {
        let req = ExecRequest::new(
            handle.fingerprint.clone(),
            "opt",
            rep.opt_flags.clone(),
            rep.ir_text.as_bytes(),
            self.config.opt_timeout,
        );
        Ok(self.exec.exec(&req)?)
    }

    /// Runs the translation validator over a source module and the
    /// optimizer's output for it.
    pub fn run_validator(
        &self,
        handle: &BuildHandle,
        rep: &Reproducer,
        optimized_ir: &str,
    ) -> Result<Transcript, ToolchainError> {
        let mut stdin = rep.ir_text.clone();
        stdin.push_str(VALIDATOR_INPUT_SEPARATOR);
        stdin.push_str(optimized_ir);
        let req = ExecRequest::new(
            handle.fingerprint.clone(),
            "alive-tv",
            rep.opt_flags.clone(),
            stdin.as_bytes(),
            self.config.validator_timeout,
        );
        Ok(self.exec.exec(&req)?)
    }

    /// Checks whether a reproducer still triggers its bug on this build.
    ///
    /// Crashes are probed by running the optimizer and harvesting the stack
    /// trace; miscompilations by validating the optimizer's output. The probe
    /// reports whatever it observed; callers decide whether the evidence kind
    /// matches the recorded bug.
    pub fn probe(
        &self,
        handle: &BuildHandle,
        bug_type: BugType,
        rep: &Reproducer,
    ) -> Result<ReproProbe, ToolchainError> {
        let opt = self.run_opt(handle, rep)?;
        if opt.timed_out {
            return Ok(ReproProbe::Indeterminate {
                reason: "optimizer timed out".to_string(),
            });
        }
        if opt.exit_code != 0 {
            return Ok(ReproProbe::Reproduced(self.crash_evidence(&opt)));
        }
        match bug_type {
            BugType::Crash => Ok(ReproProbe::NotReproduced),
            BugType::Miscompilation => {
                let validator =
                    self.run_validator(handle, rep, &opt.stdout_text())?;
                if validator.timed_out {
                    return Ok(ReproProbe::Indeterminate {
                        reason: "validator timed out".to_string(),
                    });
                }
                match classify_validator_output(&validator.stdout_text()) {
                    ValidatorVerdict::Correct => Ok(ReproProbe::NotReproduced),
                    ValidatorVerdict::DoesntVerify(counterexample) => Ok(
                        ReproProbe::Reproduced(Evidence::Miscompile { counterexample }),
                    ),
                    ValidatorVerdict::Unknown(reason) => {
                        Ok(ReproProbe::Indeterminate { reason })
                    }
                }
            }
        }
    }

    fn crash_evidence(&self, opt: &Transcript) -> Evidence {
        let raw = opt.stderr_text();
        match parse_stack_trace(&raw) {
            Some(trace) => match filter_stack_trace(&trace, &self.config.frame_denylist) {
                Ok(filtered) => Evidence::Crash {
                    frames: filtered.frames,
                    fully_filtered: false,
                    raw,
                },
                Err(NoFramesRetained) => Evidence::Crash {
                    frames: trace.frames,
                    fully_filtered: true,
                    raw,
                },
            },
            None => Evidence::Crash {
                frames: Vec::new(),
                fully_filtered: false,
                raw,
            },
        }
    }

    /// Runs regression tests in the given scope on a build.
    pub fn run_regression_tests(
        &self,
        handle: &BuildHandle,
        scope: &TestScope,
    ) -> Result<LitSummary, ToolchainError> {
        let req = ExecRequest::new(
            handle.fingerprint.clone(),
            "lit",
            scope.tokens(),
            &[],
            self.config.lit_timeout,
        );
        let transcript = self.exec.exec(&req)?;
        Ok(parse_lit_output(&transcript.stdout_text()))
    }

    /// Opens an interactive debugger session on this build and reproducer.
    pub fn debug_session(
        &self,
        handle: &BuildHandle,
        rep: &Reproducer,
    ) -> Result<Box<dyn DebuggerSession>, ToolchainError> {
        Ok(self
            .debugger
            .start(&handle.fingerprint, &rep.opt_flags, &rep.ir_text)?)
    }
}

/// Convenience constructor for a replay-only toolchain over a fixture store.
pub fn replay_toolchain(
    store_root: &Path,
    debugger: Box<dyn DebuggerFactory>,
    config: ToolchainConfig,
    snapshot_root: impl Into<PathBuf>,
) -> Result<Toolchain, ToolchainError> {
    let store = FixtureStore::open(store_root)?;
    Ok(Toolchain::new(
        Box::new(ReplayExec::new(store)),
        debugger,
        config,
        snapshot_root,
    ))
}

#[cfg(test)]
pub mod tests;
