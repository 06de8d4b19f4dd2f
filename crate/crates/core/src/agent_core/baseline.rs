//! The baseline agent: one undifferentiated loop over a restricted shell.
//!
//! No stages, no structured tools, no setup evidence. The model sees the
//! bug report and a command vocabulary; each turn it emits one fenced
//! ```bash block whose first line runs. Patches arrive as whole unified
//! diffs through `apply-patch` / `submit-patch` heredocs, which is where
//! this agent usually comes apart: a hand-written diff that does not apply
//! is the canonical source of wrecked-tree failures.

use std::path::Path;

use crate::agent_tools::{truncate_payload, Budget, ToolCall, ToolExecutor};
use crate::bench_model::Issue;
use crate::diffscope::{apply_file_patch, parse_unified_diff};
use crate::toolchain::Toolchain;

use super::prompts::baseline_system_prompt;
use super::react::{budget_failure, DISENGAGE_AFTER};
use super::setup::stage_setup;
use super::transport::{Message, ModelTransport};
use super::validate::validate_candidate;
use super::{
    finish_outcome, FailureKind, SessionConfig, SessionError, SessionOutcome, TrajectoryEvent,
};

/// First tokens that are refused outright.
pub const DENIED_COMMANDS: &[&str] = &[
    "rm", "rmdir", "mv", "dd", "mkfs", "chmod", "chown", "kill", "curl", "wget", "sudo",
    "reboot", "shutdown",
];

/// The briefing the baseline gets: the report and reproducers, nothing the
/// staged setup would add.
fn baseline_briefing(issue: &Issue) -> String {
    let mut out = format!(
        "Bug report #{id}: {title}\n\nComponent: {component}\n\n",
        id = issue.id,
        title = issue.title,
        component = issue.component,
    );
    if !issue.body.trim().is_empty() {
        out.push_str(issue.body.trim());
        out.push_str("\n\n");
    }
    for (i, rep) in issue.reproducers.iter().enumerate() {
        out.push_str(&format!(
            "Reproducer {n} ({run}):\n```llvm\n{ir}```\n",
            n = i + 1,
            run = rep.run_line(),
            ir = if rep.ir_text.ends_with('\n') {
                rep.ir_text.clone()
            } else {
                format!("{}\n", rep.ir_text)
            },
        ));
    }
    out
}

/// The first ```bash fence in a turn, without the fence markers.
fn first_bash_fence(text: &str) -> Option<String> {
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        let trimmed = line.trim();
        if trimmed == "```bash" || trimmed == "```sh" {
            let mut body = String::new();
            for inner in lines.by_ref() {
                if inner.trim() == "```" {
                    return Some(body);
                }
                body.push_str(inner);
                body.push('\n');
            }
            return None; // unterminated fence
        }
    }
    None
}

struct FenceCommand {
    line: String,
    heredoc: Option<String>,
}

/// Splits a fence into its first command line and, when that line ends with
/// a heredoc marker, the body up to the terminator.
fn parse_fence(fence: &str) -> Option<FenceCommand> {
    let mut lines = fence.lines();
    let line = loop {
        match lines.next() {
            Some(l) if l.trim().is_empty() => continue,
            Some(l) => break l.trim().to_string(),
            None => return None,
        }
    };
    let heredoc = heredoc_tag_of(&line).map(|tag| {
        let mut body = String::new();
        for l in lines.by_ref() {
            if l.trim() == tag {
                break;
            }
            body.push_str(l);
            body.push('\n');
        }
        body
    });
    Some(FenceCommand { line, heredoc })
}

/// `cmd <<EOF` or `cmd <<'EOF'`: the terminator tag, when present.
fn heredoc_tag_of(line: &str) -> Option<String> {
    let (_, after) = line.rsplit_once("<<")?;
    let tag = after.trim().trim_matches('\'').trim_matches('"');
    if tag.is_empty() || !tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return None;
    }
    Some(tag.to_string())
}

enum CommandEffect {
    Output { ok: bool, payload: String },
    Submitted(String),
}

fn run_command(
    executor: &mut ToolExecutor<'_>,
    budget: &mut Budget,
    cmd: &FenceCommand,
) -> Result<CommandEffect, FailureKind> {
    let mut words = cmd.line.split_whitespace();
    let Some(first) = words.next() else {
        return Ok(CommandEffect::Output {
            ok: false,
            payload: "error: empty command".to_string(),
        });
    };
    // `apply-patch<<EOF` without a space still names `apply-patch`.
    let head = first.split("<<").next().unwrap_or(first).to_string();
    if DENIED_COMMANDS.contains(&head.as_str()) {
        return Ok(CommandEffect::Output {
            ok: false,
            payload: format!("error: `{head}` is not permitted in this environment"),
        });
    }
    let args: Vec<&str> = words
        .map(|w| w.split("<<").next().unwrap_or(w))
        .filter(|w| !w.is_empty())
        .collect();

    let effect = match head.as_str() {
        "ls" => {
            let mut call = ToolCall::new("list");
            if let Some(dir) = args.first() {
                call = call.with("path", *dir);
            }
            let r = executor.execute(&call);
            CommandEffect::Output {
                ok: r.ok,
                payload: r.payload,
            }
        }
        "cat" => match args.first() {
            Some(path) => {
                let r = executor.execute(&ToolCall::new("read").with("path", *path));
                CommandEffect::Output {
                    ok: r.ok,
                    payload: r.payload,
                }
            }
            None => CommandEffect::Output {
                ok: false,
                payload: "usage: cat <file>".to_string(),
            },
        },
        "grep" => match args.first() {
            Some(pattern) => {
                let mut call = ToolCall::new("grep").with("pattern", *pattern);
                if let Some(dir) = args.get(1) {
                    call = call.with("path", *dir);
                }
                let r = executor.execute(&call);
                CommandEffect::Output {
                    ok: r.ok,
                    payload: r.payload,
                }
            }
            None => CommandEffect::Output {
                ok: false,
                payload: "usage: grep <regex> [dir]".to_string(),
            },
        },
        "find" => match args.first() {
            Some(pattern) => {
                let r = executor.execute(&ToolCall::new("find").with("pattern", *pattern));
                CommandEffect::Output {
                    ok: r.ok,
                    payload: r.payload,
                }
            }
            None => CommandEffect::Output {
                ok: false,
                payload: "usage: find <text>".to_string(),
            },
        },
        "show-diff" => {
            let r = executor.execute(&ToolCall::new("preview"));
            CommandEffect::Output {
                ok: r.ok,
                payload: r.payload,
            }
        }
        "reset" => {
            let r = executor.execute(&ToolCall::new("reset"));
            CommandEffect::Output {
                ok: r.ok,
                payload: r.payload,
            }
        }
        "apply-patch" => {
            let Some(patch) = &cmd.heredoc else {
                return Ok(CommandEffect::Output {
                    ok: false,
                    payload: "usage: apply-patch <<EOF ... EOF".to_string(),
                });
            };
            if budget.try_edit().is_err() {
                return Err(FailureKind::ToolLimit);
            }
            apply_patch_command(executor, patch)
        }
        "run-tests" => {
            if budget.try_test().is_err() {
                return Err(FailureKind::ToolLimit);
            }
            let r = executor.execute(&ToolCall::new("test"));
            CommandEffect::Output {
                ok: r.ok,
                payload: r.payload,
            }
        }
        "submit-patch" => {
            let Some(patch) = &cmd.heredoc else {
                return Ok(CommandEffect::Output {
                    ok: false,
                    payload: "usage: submit-patch <<EOF ... EOF".to_string(),
                });
            };
            if budget.try_test().is_err() {
                return Err(FailureKind::ToolLimit);
            }
            CommandEffect::Submitted(patch.clone())
        }
        other => CommandEffect::Output {
            ok: false,
            payload: format!(
                "error: unknown command `{other}`; commands: ls, cat, grep, find, show-diff, \
                 reset, apply-patch, run-tests, submit-patch"
            ),
        },
    };
    Ok(effect)
}

/// Applies a whole unified diff to the workspace through whole-file edits
/// (a full-content anchor is always unique).
fn apply_patch_command(executor: &mut ToolExecutor<'_>, patch: &str) -> CommandEffect {
    let diff = match parse_unified_diff(patch) {
        Ok(d) => d,
        Err(e) => {
            return CommandEffect::Output {
                ok: false,
                payload: format!("error: patch does not parse: {e}"),
            }
        }
    };
    for fp in &diff.files {
        let path = fp.effective_path().to_string();
        let old = executor.workspace.file(&path).map(str::to_string);
        let new = match apply_file_patch(fp, old.as_deref()) {
            Ok(Some(content)) => content,
            Ok(None) => {
                return CommandEffect::Output {
                    ok: false,
                    payload: format!("error: {path}: file deletion is not supported here"),
                }
            }
            Err(e) => {
                return CommandEffect::Output {
                    ok: false,
                    payload: format!("error: patch does not apply: {e}"),
                }
            }
        };
        let Some(old) = old else {
            return CommandEffect::Output {
                ok: false,
                payload: format!("error: {path}: file creation is not supported here"),
            };
        };
        if let Err(e) = executor.workspace.edit(&path, &old, &new) {
            return CommandEffect::Output {
                ok: false,
                payload: format!("error: {e}"),
            };
        }
    }
    CommandEffect::Output {
        ok: true,
        payload: format!("applied to {} file(s)", diff.files.len()),
    }
}

/// Runs the baseline agent on one issue. Setup still confirms the bug
/// reproduces (otherwise the benchmark entry is broken), but nothing from
/// it reaches the model.
pub fn run_baseline_session(
    tc: &Toolchain,
    issue: &Issue,
    doc_root: &Path,
    transport: &mut dyn ModelTransport,
    config: &SessionConfig,
) -> Result<SessionOutcome, SessionError> {
    let mut trajectory = Vec::new();
    let mut budget = Budget::new(config.budget.clone());

    trajectory.push(TrajectoryEvent::StageStart {
        stage: "setup".to_string(),
    });
    let _setup = stage_setup(tc, issue)?;
    trajectory.push(TrajectoryEvent::StageEnd {
        stage: "setup".to_string(),
        note: "bug reproduced on base".to_string(),
    });

    let mut executor =
        ToolExecutor::new(tc, issue, doc_root).map_err(|e| SessionError::Workspace(e.to_string()))?;
    let mut messages = vec![
        Message::system(baseline_system_prompt()),
        Message::user(baseline_briefing(issue)),
    ];

    trajectory.push(TrajectoryEvent::StageStart {
        stage: "shell".to_string(),
    });
    let mut no_fence_streak = 0u32;
    let candidate: String = loop {
        if let Err(b) = budget.try_round() {
            return Ok(finish_outcome(
                issue,
                false,
                Some(budget_failure(b)),
                None,
                None,
                None,
                &budget,
                trajectory,
            ));
        }
        let round = budget.rounds;
        let turn = transport
            .complete(&messages)
            .map_err(SessionError::Transport)?;
        trajectory.push(TrajectoryEvent::ModelTurn {
            round,
            text: turn.text.clone(),
            input_tokens: turn.input_tokens,
            output_tokens: turn.output_tokens,
        });
        if let Err(b) = budget.add_turn_tokens(turn.input_tokens + turn.output_tokens) {
            return Ok(finish_outcome(
                issue,
                false,
                Some(budget_failure(b)),
                None,
                None,
                None,
                &budget,
                trajectory,
            ));
        }
        messages.push(Message::assistant(turn.text.clone()));

        let command = first_bash_fence(&turn.text).and_then(|fence| parse_fence(&fence));
        let Some(command) = command else {
            no_fence_streak += 1;
            if no_fence_streak >= DISENGAGE_AFTER {
                return Ok(finish_outcome(
                    issue,
                    false,
                    Some(FailureKind::ProactiveExit),
                    None,
                    None,
                    None,
                    &budget,
                    trajectory,
                ));
            }
            messages.push(Message::user(
                "No command block was found. Reply with exactly one ```bash fence whose first \
                 line is a command."
                    .to_string(),
            ));
            continue;
        };
        no_fence_streak = 0;
        trajectory.push(TrajectoryEvent::ToolCall {
            round,
            name: "bash".to_string(),
            args: std::collections::BTreeMap::from([(
                "command".to_string(),
                command.line.clone(),
            )]),
        });

        match run_command(&mut executor, &mut budget, &command) {
            Err(kind) => {
                return Ok(finish_outcome(
                    issue,
                    false,
                    Some(kind),
                    None,
                    None,
                    None,
                    &budget,
                    trajectory,
                ))
            }
            Ok(CommandEffect::Submitted(patch)) => {
                trajectory.push(TrajectoryEvent::ToolResult {
                    round,
                    ok: true,
                    payload: "patch submitted for validation".to_string(),
                });
                break patch;
            }
            Ok(CommandEffect::Output { ok, payload }) => {
                let payload = truncate_payload(&payload);
                trajectory.push(TrajectoryEvent::ToolResult {
                    round,
                    ok,
                    payload: payload.clone(),
                });
                let status = if ok { "ok" } else { "failed" };
                messages.push(Message::user(format!("[{status}]\n{payload}")));
            }
        }
    };
    trajectory.push(TrajectoryEvent::StageEnd {
        stage: "shell".to_string(),
        note: "patch submitted".to_string(),
    });

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
        None,
        Some(candidate),
        Some(report),
        &budget,
        trajectory,
    ))
}
