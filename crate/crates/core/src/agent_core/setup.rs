//! Stage one: deterministic setup, no model involved.
//!
//! Setup builds the pristine base, confirms the bug actually reproduces,
//! and distills the evidence into text plus concrete starting points: the
//! top retained stack frame for crashes, and for miscompilations the first
//! pass whose output changes on the reproducer (found by re-running the
//! optimizer with change reporting turned on).

use regex::Regex;

use crate::agent_tools::render_evidence;
use crate::bench_model::{Issue, Reproducer};
use crate::toolchain::{BuildHandle, BuildOutcome, Evidence, ReproProbe, Toolchain};

use super::SessionError;

/// What setup established before any model turn.
#[derive(Debug, Clone)]
pub struct SetupReport {
    /// The pristine base build every later probe reuses.
    pub base_handle: BuildHandle,
    /// Evidence from the confirming probe.
    pub evidence: Evidence,
    /// The evidence rendered for prompts.
    pub evidence_text: String,
    /// Crash: the first retained stack frame's symbol.
    /// Miscompilation: `{Pass}::run` for the first changed pass.
    pub suspect_symbol: Option<String>,
    /// Miscompilation only: the first pass whose output changed.
    pub suspect_pass: Option<String>,
}

/// Extracts the first pass reported as changing the IR from change-report
/// output: a banner `*** IR Dump After {Pass} on {func} ***` that is not an
/// "omitted because no change" banner. Returns `(pass, function)`.
pub fn first_changed_pass(stderr: &str) -> Option<(String, String)> {
    let banner =
        Regex::new(r"(?m)^\*\*\* IR Dump After (.+) on (\S+) \*\*\*\s*$").expect("banner regex");
    for line in stderr.lines() {
        if line.contains("omitted because no change") {
            continue;
        }
        if let Some(cap) = banner.captures(line) {
            return Some((cap[1].to_string(), cap[2].to_string()));
        }
    }
    None
}

/// Runs stage one for an issue. Fails the whole session when the base does
/// not build or the bug does not reproduce there: both would mean the
/// benchmark entry itself is broken, not the agent.
pub fn stage_setup(tc: &Toolchain, issue: &Issue) -> Result<SetupReport, SessionError> {
    let outcome = tc
        .build(&issue.base_commit, None)
        .map_err(|e| SessionError::Toolchain(e.to_string()))?;
    let base_handle = match outcome {
        BuildOutcome::Ready(h) => h,
        BuildOutcome::Failed { log } => {
            return Err(SessionError::Setup(format!(
                "base commit does not build:\n{log}"
            )))
        }
    };

    let rep = issue
        .reproducers
        .first()
        .ok_or_else(|| SessionError::Setup("issue has no reproducer".to_string()))?;
    let probe = tc
        .probe(&base_handle, issue.bug_type, rep)
        .map_err(|e| SessionError::Toolchain(e.to_string()))?;
    let evidence = match probe {
        ReproProbe::Reproduced(e) => e,
        ReproProbe::NotReproduced => {
            return Err(SessionError::Setup(
                "the bug does not reproduce on the base commit".to_string(),
            ))
        }
        ReproProbe::Indeterminate { reason } => {
            return Err(SessionError::Setup(format!(
                "the confirming probe was indeterminate: {reason}"
            )))
        }
    };

    let evidence_text = render_evidence(&evidence);
    let (suspect_symbol, suspect_pass) = match &evidence {
        Evidence::Crash { frames, .. } => (frames.first().map(|f| f.symbol.clone()), None),
        Evidence::Miscompile { .. } => match locate_changing_pass(tc, &base_handle, rep)? {
            Some((pass, _func)) => (Some(format!("{pass}::run")), Some(pass)),
            None => (None, None),
        },
    };

    Ok(SetupReport {
        base_handle,
        evidence,
        evidence_text,
        suspect_symbol,
        suspect_pass,
    })
}

/// Re-runs the reproducer with change reporting enabled and parses which
/// pass changed the IR first.
fn locate_changing_pass(
    tc: &Toolchain,
    handle: &BuildHandle,
    rep: &Reproducer,
) -> Result<Option<(String, String)>, SessionError> {
    let mut flags = rep.opt_flags.clone();
    flags.push("-print-changed".to_string());
    let probe_rep = Reproducer::new(rep.ir_text.clone(), flags)
        .map_err(|e| SessionError::Setup(format!("could not derive probe flags: {e}")))?;
    let transcript = tc
        .run_opt(handle, &probe_rep)
        .map_err(|e| SessionError::Toolchain(e.to_string()))?;
    Ok(first_changed_pass(&transcript.stderr_text()))
}
