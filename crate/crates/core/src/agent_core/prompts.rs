//! Prompt templates for the staged repair agent and the baseline agent.
//!
//! Prompts are assembled from static templates plus per-issue facts (report
//! text, reproducer, probe evidence, suspects located during setup). They
//! contain no timestamps or randomness, so identical sessions produce
//! identical conversations.

use crate::agent_tools::ALL_TOOLS;
use crate::bench_model::{BugType, Issue};

use super::setup::SetupReport;

/// Tools available while diagnosing (stage two): inspection, documentation,
/// the debugger, scratch optimizer runs, and `stop` to conclude.
pub const REASON_TOOLS: &[&str] = &[
    "find", "grep", "list", "read", "code", "docs", "langref", "debug", "eval", "stop",
];

/// Tools available while fixing (stage three): everything, including edits,
/// previews, resets, and full test runs.
pub const GENERATE_TOOLS: &[&str] = &[
    "find", "grep", "list", "read", "edit", "preview", "code", "docs", "langref", "debug",
    "eval", "reset", "test", "stop",
];

fn tool_reference(allowed: &[&str]) -> String {
    let mut out = String::new();
    for (name, summary) in ALL_TOOLS {
        if allowed.contains(name) {
            out.push_str("- ");
            out.push_str(summary);
            out.push('\n');
        }
    }
    out
}

/// System prompt for the diagnosis stage.
pub fn reason_system_prompt() -> String {
    format!(
        "You are a compiler engineer diagnosing a bug in an optimizing \
         compiler's middle end.\n\
         \n\
         Work step by step. In every reply, first write one short paragraph \
         of reasoning, then emit exactly one tool call in the form \
         `name(key=\"value\", ...)`. Multi-line values use heredocs:\n\
         `key=<<EOF` then the lines, then `EOF` alone on its own line.\n\
         \n\
         Available tools:\n\
         {tools}\n\
         Build your diagnosis so it covers all five of these points:\n\
         1. Symptom: what observable behavior the reproducer triggers.\n\
         2. Mechanism: the chain of events inside the pass that leads there.\n\
         3. Root cause: the precise assumption or code defect at fault.\n\
         4. Fix strategy: what a correct change must do, and where.\n\
         5. Risk: what the change could break and which tests would show it.\n\
         \n\
         When the diagnosis is complete, call `stop(reason=...)` with the \
         full five-point diagnosis as the reason. Do not attempt edits in \
         this stage.",
        tools = tool_reference(REASON_TOOLS)
    )
}

/// System prompt for the fixing stage.
pub fn generate_system_prompt() -> String {
    format!(
        "You are a compiler engineer fixing a diagnosed bug in an optimizing \
         compiler's middle end.\n\
         \n\
         In every reply, first write one short paragraph of reasoning, then \
         emit exactly one tool call in the form `name(key=\"value\", ...)`. \
         Multi-line values use heredocs: `key=<<EOF`, the lines, then `EOF` \
         alone on its own line.\n\
         \n\
         Available tools:\n\
         {tools}\n\
         Follow this working cycle:\n\
         1. Analyze: re-read the code paths named in the diagnosis.\n\
         2. Propose: decide the minimal change that removes the root cause.\n\
         3. Implement: apply it with `edit`; check the result with `preview`.\n\
         4. Verify: run `test` to build, re-check the bug, and run the \
         component's regression tests.\n\
         5. Iterate: if `test` fails, read the failure, refine, and repeat. \
         Use `reset` if the workspace is beyond repair.\n\
         6. Submit: a passing `test` run submits the current patch; there is \
         nothing further to do after it passes.\n\
         \n\
         Keep the change as small as the fix allows. Only call \
         `stop(reason=...)` to give up.",
        tools = tool_reference(GENERATE_TOOLS)
    )
}

/// System prompt for the single-loop baseline agent.
pub fn baseline_system_prompt() -> String {
    "You are a compiler engineer fixing a bug in an optimizing compiler's \
     middle end, working through a restricted shell.\n\
     \n\
     In every reply, write your reasoning and then exactly one fenced block:\n\
     ```bash\n\
     <one command>\n\
     ```\n\
     Only the first line of the block runs. A command may read a heredoc: \
     end the first line with `<<EOF` and put the body on the following lines \
     of the same block, terminated by `EOF` alone on a line.\n\
     \n\
     Commands:\n\
     - ls [dir]            list a directory\n\
     - cat <file>          print a file\n\
     - grep <regex> [dir]  search file contents\n\
     - find <text>         find files by name\n\
     - show-diff           print the accumulated patch\n\
     - reset               discard all changes\n\
     - apply-patch <<EOF   apply a unified diff to the tree\n\
     - run-tests           build, re-check the bug, run component tests\n\
     - submit-patch <<EOF  submit a unified diff as the final fix\n\
     \n\
     Destructive or external commands (rm, mv, dd, chmod, chown, kill, \
     curl, wget, sudo, reboot, shutdown) are refused.\n\
     Submit once you believe the diff fixes the bug without regressions."
        .to_string()
}

fn bug_type_phrase(bug_type: BugType) -> &'static str {
    match bug_type {
        BugType::Crash => "a compiler crash",
        BugType::Miscompilation => "a miscompilation (wrong code, no crash)",
    }
}

/// The opening user message for both model stages: the bug report, the
/// reproducer, and what setup already established.
pub fn issue_briefing(issue: &Issue, setup: &SetupReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Bug report #{id}: {title}\n\nThis is {kind} in the `{component}` \
         component.\n\n",
        id = issue.id,
        title = issue.title,
        kind = bug_type_phrase(issue.bug_type),
        component = issue.component,
    ));
    if !issue.body.trim().is_empty() {
        out.push_str("Reporter's description:\n");
        out.push_str(issue.body.trim());
        out.push_str("\n\n");
    }
    for (i, rep) in issue.reproducers.iter().enumerate() {
        out.push_str(&format!(
            "Reproducer {n} ({run}):\n```llvm\n{ir}```\n\n",
            n = i + 1,
            run = rep.run_line(),
            ir = with_trailing_newline(&rep.ir_text),
        ));
    }
    out.push_str("What the harness already established:\n");
    out.push_str(&setup.evidence_text);
    if !setup.evidence_text.ends_with('\n') {
        out.push('\n');
    }
    if let Some(pass) = &setup.suspect_pass {
        out.push_str(&format!(
            "The first pass whose output changes on this input is `{pass}`.\n"
        ));
    }
    if let Some(symbol) = &setup.suspect_symbol {
        out.push_str(&format!(
            "A good starting breakpoint / search anchor is `{symbol}`.\n"
        ));
    }
    out
}

/// The user message opening the fixing stage: the diagnosis carried over
/// from the reasoning stage.
pub fn generate_opening(diagnosis: &str) -> String {
    format!(
        "Diagnosis from the investigation stage:\n\n{diag}\n\nImplement the \
         fix now. A passing `test` run submits your patch.",
        diag = diagnosis.trim()
    )
}

/// Nudge sent when a model turn contained no parseable tool call.
pub const NO_CALL_NUDGE: &str =
    "No tool call was found in that reply. Emit exactly one call in the form \
     `name(key=\"value\", ...)`; heredoc values use `key=<<EOF`, the lines, \
     then `EOF` alone on a line.";

fn with_trailing_newline(s: &str) -> String {
    if s.ends_with('\n') {
        s.to_string()
    } else {
        format!("{s}\n")
    }
}
