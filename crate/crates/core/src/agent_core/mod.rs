//! The repair agents and their session machinery.
//!
//! Two agents share this module. The staged agent runs four phases: a
//! deterministic setup that reproduces the bug and finds starting points, a
//! diagnosis loop over read-only tools, a fixing loop that edits and tests,
//! and a held-out validation of the submitted patch on a pristine tree. The
//! baseline agent drives a restricted shell in a single undifferentiated
//! loop and submits whole patches. Both produce the same outcome record:
//! resolved or not, a failure category when not, budget usage, and a
//! replayable trajectory.

mod baseline;
mod prompts;
mod react;
mod setup;
mod transport;
mod validate;

pub use baseline::run_baseline_session;
pub use prompts::{
    baseline_system_prompt, generate_system_prompt, issue_briefing, reason_system_prompt,
    GENERATE_TOOLS, REASON_TOOLS,
};
pub use react::{budget_failure, run_react_stage, ReactStage, StageEnd, DISENGAGE_AFTER};
pub use setup::{first_changed_pass, stage_setup, SetupReport};
pub use transport::{
    estimate_tokens, Message, ModelTransport, ModelTurn, Role, ScriptedTransport, ScriptedTurn,
    TransportError,
};
pub use validate::{validate_candidate, ValidationOutcome, ValidationReport};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_tools::{Budget, BudgetConfig, ToolExecutor};
use crate::bench_model::Issue;
use crate::toolchain::Toolchain;

/// Why a session failed, in one category. `Display` and serialization use
/// the canonical report labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureKind {
    /// One turn exceeded the per-turn context window.
    #[serde(rename = "CtxtLimit")]
    CtxtLimit,
    /// The cumulative token budget ran out.
    #[serde(rename = "TokenLimit")]
    TokenLimit,
    /// The edit or test call allowance ran out.
    #[serde(rename = "ToolLimit")]
    ToolLimit,
    /// The round allowance ran out.
    #[serde(rename = "RoundLimit")]
    RoundLimit,
    /// The agent stopped on its own without a validated fix.
    #[serde(rename = "ProactiveExit")]
    ProactiveExit,
    /// The submitted patch does not apply or does not build.
    #[serde(rename = "RuinLLVM")]
    RuinLlvm,
    /// The patch passed the agent's own checks but failed held-out
    /// validation (bug persists or wider tests regress).
    #[serde(rename = "PostValError")]
    PostValError,
    /// The harness itself failed during the run.
    #[serde(rename = "ImplError")]
    ImplError,
}

impl FailureKind {
    pub const ALL: [FailureKind; 8] = [
        FailureKind::CtxtLimit,
        FailureKind::TokenLimit,
        FailureKind::ToolLimit,
        FailureKind::RoundLimit,
        FailureKind::ProactiveExit,
        FailureKind::RuinLlvm,
        FailureKind::PostValError,
        FailureKind::ImplError,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FailureKind::CtxtLimit => "CtxtLimit",
            FailureKind::TokenLimit => "TokenLimit",
            FailureKind::ToolLimit => "ToolLimit",
            FailureKind::RoundLimit => "RoundLimit",
            FailureKind::ProactiveExit => "ProactiveExit",
            FailureKind::RuinLlvm => "RuinLLVM",
            FailureKind::PostValError => "PostValError",
            FailureKind::ImplError => "ImplError",
        }
    }

    /// Attribution priority when several causes were observed in one
    /// session; higher wins. Harness faults outrank patch faults, which
    /// outrank budget exhaustion, which outranks walking away.
    pub fn priority(self) -> u8 {
        match self {
            FailureKind::ImplError => 8,
            FailureKind::RuinLlvm => 7,
            FailureKind::PostValError => 6,
            FailureKind::CtxtLimit => 5,
            FailureKind::TokenLimit => 4,
            FailureKind::ToolLimit => 3,
            FailureKind::RoundLimit => 2,
            FailureKind::ProactiveExit => 1,
        }
    }
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Picks the single failure to attribute when several were observed.
pub fn classify_failure(observed: &[FailureKind]) -> Option<FailureKind> {
    observed.iter().copied().max_by_key(|k| k.priority())
}

#[derive(Debug, Error)]
pub enum SessionError {
    /// The benchmark entry is unusable: base missing, unbuildable, or the
    /// bug does not reproduce there.
    #[error("setup failed: {0}")]
    Setup(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("workspace failure: {0}")]
    Workspace(String),
    #[error("toolchain failure: {0}")]
    Toolchain(String),
}

#[derive(Debug, Clone, Default)]
pub struct SessionConfig {
    pub budget: BudgetConfig,
}

/// One entry of the replayable session log. Events carry no timestamps, so
/// identical runs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TrajectoryEvent {
    StageStart {
        stage: String,
    },
    ModelTurn {
        round: u64,
        text: String,
        input_tokens: u64,
        output_tokens: u64,
    },
    ToolCall {
        round: u64,
        name: String,
        args: BTreeMap<String, String>,
    },
    ToolResult {
        round: u64,
        ok: bool,
        payload: String,
    },
    StageEnd {
        stage: String,
        note: String,
    },
    SessionEnd {
        resolved: bool,
        failure: Option<String>,
    },
}

/// Renders a trajectory as JSON Lines, one event per line.
pub fn render_trajectory_jsonl(events: &[TrajectoryEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("trajectory events serialize"));
        out.push('\n');
    }
    out
}

/// Final record of one session.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub issue_id: u64,
    /// True when the candidate passed held-out validation.
    pub resolved: bool,
    pub failure: Option<FailureKind>,
    /// The diagnosis text the reasoning stage concluded with.
    pub diagnosis: Option<String>,
    /// The submitted patch, when one was submitted.
    pub candidate_patch: Option<String>,
    pub validation: Option<ValidationReport>,
    pub rounds_used: u64,
    pub tokens_used: u64,
    pub edits_used: u64,
    pub tests_used: u64,
    pub trajectory: Vec<TrajectoryEvent>,
}

fn finish_outcome(
    issue: &Issue,
    resolved: bool,
    failure: Option<FailureKind>,
    diagnosis: Option<String>,
    candidate_patch: Option<String>,
    validation: Option<ValidationReport>,
    budget: &Budget,
    mut trajectory: Vec<TrajectoryEvent>,
) -> SessionOutcome {
    trajectory.push(TrajectoryEvent::SessionEnd {
        resolved,
        failure: failure.map(|f| f.label().to_string()),
    });
    SessionOutcome {
        issue_id: issue.id,
        resolved,
        failure,
        diagnosis,
        candidate_patch,
        validation,
        rounds_used: budget.rounds,
        tokens_used: budget.tokens,
        edits_used: budget.edits,
        tests_used: budget.tests,
        trajectory,
    }
}

/// Runs the staged agent end to end on one issue.
pub fn run_repair_session(
    tc: &Toolchain,
    issue: &Issue,
    doc_root: &Path,
    transport: &mut dyn ModelTransport,
    config: &SessionConfig,
) -> Result<SessionOutcome, SessionError> {
    let mut trajectory = Vec::new();
    let mut budget = Budget::new(config.budget.clone());

    // Stage one: setup.
    trajectory.push(TrajectoryEvent::StageStart {
        stage: "setup".to_string(),
    });
    let setup = stage_setup(tc, issue)?;
    let mut setup_note = String::from("bug reproduced on base");
    if let Some(pass) = &setup.suspect_pass {
        setup_note.push_str(&format!("; first changed pass {pass}"));
    }
    if let Some(symbol) = &setup.suspect_symbol {
        setup_note.push_str(&format!("; suspect {symbol}"));
    }
    trajectory.push(TrajectoryEvent::StageEnd {
        stage: "setup".to_string(),
        note: setup_note,
    });

    let mut executor =
        ToolExecutor::new(tc, issue, doc_root).map_err(|e| SessionError::Workspace(e.to_string()))?;

    // Stage two: diagnosis over read-only tools.
    let mut messages = vec![
        Message::system(reason_system_prompt()),
        Message::user(issue_briefing(issue, &setup)),
    ];
    let end = run_react_stage(
        ReactStage::Reason,
        transport,
        &mut executor,
        &mut budget,
        &mut messages,
        REASON_TOOLS,
        &mut trajectory,
    )?;
    let diagnosis = match end {
        StageEnd::Stopped(reason) => {
            trajectory.push(TrajectoryEvent::StageEnd {
                stage: "reason".to_string(),
                note: reason.clone(),
            });
            reason
        }
        StageEnd::Disengaged => {
            return Ok(finish_outcome(
                issue,
                false,
                Some(FailureKind::ProactiveExit),
                None,
                None,
                None,
                &budget,
                trajectory,
            ))
        }
        StageEnd::Budget(kind) => {
            return Ok(finish_outcome(
                issue, false, Some(kind), None, None, None, &budget, trajectory,
            ))
        }
        StageEnd::FixAccepted => {
            unreachable!("the reasoning stage has no test tool to accept a fix")
        }
    };

    // Stage three: fixing, in a fresh conversation seeded with the
    // diagnosis.
    let mut messages = vec![
        Message::system(generate_system_prompt()),
        Message::user(issue_briefing(issue, &setup)),
        Message::user(prompts::generate_opening(&diagnosis)),
    ];
    let end = run_react_stage(
        ReactStage::Generate,
        transport,
        &mut executor,
        &mut budget,
        &mut messages,
        GENERATE_TOOLS,
        &mut trajectory,
    )?;
    let candidate = match end {
        StageEnd::FixAccepted => {
            let patch = executor
                .last_test
                .as_ref()
                .and_then(|t| t.patch.clone())
                .ok_or_else(|| {
                    SessionError::Workspace(
                        "a test passed with an empty workspace patch".to_string(),
                    )
                })?;
            trajectory.push(TrajectoryEvent::StageEnd {
                stage: "generate".to_string(),
                note: "fix candidate accepted by a passing test".to_string(),
            });
            patch
        }
        StageEnd::Stopped(_) | StageEnd::Disengaged => {
            return Ok(finish_outcome(
                issue,
                false,
                Some(FailureKind::ProactiveExit),
                Some(diagnosis),
                None,
                None,
                &budget,
                trajectory,
            ))
        }
        StageEnd::Budget(kind) => {
            return Ok(finish_outcome(
                issue,
                false,
                Some(kind),
                Some(diagnosis),
                None,
                None,
                &budget,
                trajectory,
            ))
        }
    };

    // Stage four: held-out validation.
    trajectory.push(TrajectoryEvent::StageStart {
        stage: "validate".to_string(),
    });
    let report = validate_candidate(tc, issue, &candidate)?;
    trajectory.push(TrajectoryEvent::StageEnd {
        stage: "validate".to_string(),
        note: report.summary(),
    });
    let resolved = report.passed();
    let failure = report.failure_kind();
    Ok(finish_outcome(
        issue,
        resolved,
        failure,
        Some(diagnosis),
        Some(candidate),
        Some(report),
        &budget,
        trajectory,
    ))
}
