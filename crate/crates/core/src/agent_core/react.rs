//! The reason-act loop shared by the diagnosis and fixing stages.
//!
//! Each round: the model produces a turn, the first parseable tool call in
//! it runs, and the result re-enters the conversation. The loop owns all
//! budget enforcement; tool execution itself lives in the tool layer.

use crate::agent_tools::{
    parse_first_tool_call, Budget, BudgetExceeded, ToolCall, ToolExecutor,
};

use super::prompts::NO_CALL_NUDGE;
use super::transport::{Message, ModelTransport};
use super::{FailureKind, SessionError, TrajectoryEvent};

/// Which stage the loop is running; controls how `stop` and a passing
/// `test` are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactStage {
    Reason,
    Generate,
}

impl ReactStage {
    pub fn name(self) -> &'static str {
        match self {
            ReactStage::Reason => "reason",
            ReactStage::Generate => "generate",
        }
    }
}

/// Why a stage ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageEnd {
    /// The model called `stop`; carries the reason text (the diagnosis, in
    /// the reasoning stage).
    Stopped(String),
    /// A `test` call passed during the fixing stage.
    FixAccepted,
    /// A budget tripped, mapped to its failure category.
    Budget(FailureKind),
    /// Two consecutive turns produced no tool call.
    Disengaged,
}

/// Turns a budget trip into the failure category the taxonomy assigns it.
pub fn budget_failure(b: BudgetExceeded) -> FailureKind {
    match b {
        BudgetExceeded::TurnContext => FailureKind::CtxtLimit,
        BudgetExceeded::Tokens => FailureKind::TokenLimit,
        BudgetExceeded::Edits | BudgetExceeded::Tests => FailureKind::ToolLimit,
        BudgetExceeded::Rounds => FailureKind::RoundLimit,
    }
}

/// How many consecutive call-free turns count as the agent having walked
/// away from the task.
pub const DISENGAGE_AFTER: u32 = 2;

/// Runs one model stage to completion. `messages` carries the conversation
/// in and out, so the fixing stage can see nothing or everything of the
/// diagnosis as the caller chooses.
#[allow(clippy::too_many_arguments)]
pub fn run_react_stage(
    stage: ReactStage,
    transport: &mut dyn ModelTransport,
    executor: &mut ToolExecutor<'_>,
    budget: &mut Budget,
    messages: &mut Vec<Message>,
    allowed_tools: &[&str],
    trajectory: &mut Vec<TrajectoryEvent>,
) -> Result<StageEnd, SessionError> {
    trajectory.push(TrajectoryEvent::StageStart {
        stage: stage.name().to_string(),
    });
    let mut no_call_streak = 0u32;

    loop {
        if let Err(b) = budget.try_round() {
            return Ok(StageEnd::Budget(budget_failure(b)));
        }
        let round = budget.rounds;

        let turn = transport
            .complete(messages)
            .map_err(SessionError::Transport)?;
        trajectory.push(TrajectoryEvent::ModelTurn {
            round,
            text: turn.text.clone(),
            input_tokens: turn.input_tokens,
            output_tokens: turn.output_tokens,
        });
        if let Err(b) = budget.add_turn_tokens(turn.input_tokens + turn.output_tokens) {
            return Ok(StageEnd::Budget(budget_failure(b)));
        }
        messages.push(Message::assistant(turn.text.clone()));

        let Some(call) = parse_first_tool_call(&turn.text) else {
            no_call_streak += 1;
            if no_call_streak >= DISENGAGE_AFTER {
                return Ok(StageEnd::Disengaged);
            }
            messages.push(Message::user(NO_CALL_NUDGE));
            continue;
        };
        no_call_streak = 0;
        trajectory.push(TrajectoryEvent::ToolCall {
            round,
            name: call.name.clone(),
            args: call.args.clone(),
        });

        if call.name == "stop" {
            let reason = call.arg("reason").unwrap_or("").to_string();
            return Ok(StageEnd::Stopped(reason));
        }

        if !allowed_tools.contains(&call.name.as_str()) {
            let payload = format!(
                "error: `{}` is not available in this stage; available tools: {}",
                call.name,
                allowed_tools.join(", ")
            );
            trajectory.push(TrajectoryEvent::ToolResult {
                round,
                ok: false,
                payload: payload.clone(),
            });
            messages.push(Message::user(tool_result_message(&call, false, &payload)));
            continue;
        }

        // Edit and test calls draw down their own budgets; the call that
        // would exceed one ends the session.
        let gate = match call.name.as_str() {
            "edit" => budget.try_edit(),
            "test" => budget.try_test(),
            _ => Ok(()),
        };
        if let Err(b) = gate {
            return Ok(StageEnd::Budget(budget_failure(b)));
        }

        let result = executor.execute(&call);
        trajectory.push(TrajectoryEvent::ToolResult {
            round,
            ok: result.ok,
            payload: result.payload.clone(),
        });
        messages.push(Message::user(tool_result_message(
            &call,
            result.ok,
            &result.payload,
        )));

        if stage == ReactStage::Generate && call.name == "test" && result.ok {
            return Ok(StageEnd::FixAccepted);
        }
    }
}

fn tool_result_message(call: &ToolCall, ok: bool, payload: &str) -> String {
    let status = if ok { "ok" } else { "failed" };
    format!("[{} {}]\n{}", call.name, status, payload)
}
