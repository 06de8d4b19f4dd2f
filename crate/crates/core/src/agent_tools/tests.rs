use std::collections::BTreeMap;

use proptest::prelude::*;
use tempfile::TempDir;

use crate::bench_builder::build_benchmark;
use crate::bench_model::Issue;
use crate::demo::{self, DemoIssue, DemoPaths, DemoWorld};
use crate::toolchain::Toolchain;

use super::*;

// ---------------------------------------------------------------------------
// call grammar
// ---------------------------------------------------------------------------

#[test]
fn simple_calls_parse() {
    let call = parse_first_tool_call("grep(pattern=\"getEntryCost\")").unwrap();
    assert_eq!(call.name, "grep");
    assert_eq!(call.arg("pattern"), Some("getEntryCost"));

    let call = parse_first_tool_call("list()").unwrap();
    assert_eq!(call.name, "list");
    assert!(call.args.is_empty());

    let call = parse_first_tool_call("read(path=\"a.cpp\", start=10, end=40)").unwrap();
    assert_eq!(call.arg("start"), Some("10"));
    assert_eq!(call.arg("end"), Some("40"));
}

#[test]
fn heredoc_values_keep_their_lines() {
    let text = "edit(path=\"f.cpp\", old=<<EOF\nint a = 1;\nint b = 2;\nEOF\n, new=<<EOF\nint a = 2;\nEOF\n)";
    let call = parse_first_tool_call(text).unwrap();
    assert_eq!(call.arg("old"), Some("int a = 1;\nint b = 2;\n"));
    assert_eq!(call.arg("new"), Some("int a = 2;\n"));
}

#[test]
fn heredoc_terminator_must_stand_alone() {
    // EOF embedded mid-line does not terminate the body.
    let text = "eval(ir=<<EOF\nthe word EOF inside a line\nEOF\n)";
    let call = parse_first_tool_call(text).unwrap();
    assert_eq!(call.arg("ir"), Some("the word EOF inside a line\n"));

    // An unterminated heredoc makes the whole candidate unparseable.
    assert!(parse_first_tool_call("eval(ir=<<EOF\nno terminator here").is_none());
}

#[test]
fn first_parseable_call_wins_over_code_snippets() {
    let text = "\
The crash is in getEntryCost(E, Vals) around the cost model; note that\n\
broken(call syntax here never closes... so let me look:\n\
read(path=\"llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp\")\n\
and later maybe grep(pattern=\"CostAttrs\")";
    let call = parse_first_tool_call(text).unwrap();
    assert_eq!(call.name, "read");
    assert_eq!(
        call.arg("path"),
        Some("llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp")
    );
}

#[test]
fn prose_without_calls_parses_to_none() {
    assert!(parse_first_tool_call("I think the fix is straightforward.").is_none());
    assert!(parse_first_tool_call("f(x + y) has no keyword arguments").is_none());
    assert!(parse_first_tool_call("").is_none());
}

#[test]
fn qualified_names_are_not_candidates() {
    // Method and scoped calls in quoted code must not be picked up.
    let text = "see BoUpSLP::getEntryCost(foo=1) and obj.method(bar=2); then stop()";
    let call = parse_first_tool_call(text).unwrap();
    assert_eq!(call.name, "stop");
}

#[test]
fn duplicate_keys_invalidate_a_candidate() {
    let text = "grep(pattern=\"a\", pattern=\"b\")\nfind(pattern=\"c\")";
    let call = parse_first_tool_call(text).unwrap();
    assert_eq!(call.name, "find");
}

#[test]
fn renderer_and_parser_round_trip_known_calls() {
    let calls = vec![
        ToolCall::new("list"),
        ToolCall::new("grep").with("pattern", "Cost\\w+"),
        ToolCall::new("edit")
            .with("path", "llvm/lib/X.cpp")
            .with("old", "int a = 1;\nint b = 2;\n")
            .with("new", "int a = 2;\n"),
        ToolCall::new("eval")
            .with("ir", "define i1 @f() {\n  ret i1 true\n}\n")
            .with("flags", "-passes=instsimplify -S"),
        ToolCall::new("docs").with("query", "known bits \"fabs\""),
    ];
    for call in calls {
        let rendered = render_tool_call(&call);
        let parsed = parse_first_tool_call(&rendered).unwrap();
        assert_eq!(parsed, call, "round trip failed for:\n{rendered}");
    }
}

#[test]
fn heredoc_tag_avoids_body_collisions() {
    let call = ToolCall::new("eval").with("ir", "EOF\nreal body\n");
    let rendered = render_tool_call(&call);
    let parsed = parse_first_tool_call(&rendered).unwrap();
    assert_eq!(parsed.arg("ir"), Some("EOF\nreal body\n"));
}

proptest! {
    /// Any call built from tool-ish names and arbitrary printable values
    /// survives render -> parse unchanged.
    #[test]
    fn calls_round_trip(
        name in "[a-z][a-z0-9_]{0,11}",
        keys in proptest::collection::btree_set("[a-z][a-z0-9_]{0,7}", 0..4),
        values in proptest::collection::vec("[ -~\\n]{0,60}", 0..4),
    ) {
        let mut call = ToolCall::new(name);
        for (key, value) in keys.iter().zip(values.iter()) {
            // Carriage returns interact with heredoc terminator trimming;
            // the grammar does not promise to preserve them.
            call.args.insert(key.clone(), value.replace('\r', " "));
        }
        let rendered = render_tool_call(&call);
        let parsed = parse_first_tool_call(&rendered);
        prop_assert_eq!(parsed, Some(call));
    }
}

#[test]
fn payloads_are_capped() {
    let short = "a".repeat(100);
    assert_eq!(truncate_payload(&short), short);

    let exact = "b".repeat(MAX_PAYLOAD_CHARS);
    assert_eq!(truncate_payload(&exact), exact);

    let long = "c".repeat(MAX_PAYLOAD_CHARS + 1);
    let capped = truncate_payload(&long);
    assert!(capped.ends_with(TRUNCATION_MARKER));
    assert_eq!(
        capped.chars().count(),
        MAX_PAYLOAD_CHARS + TRUNCATION_MARKER.chars().count()
    );
}

// ---------------------------------------------------------------------------
// budgets
// ---------------------------------------------------------------------------

#[test]
fn default_budget_limits() {
    let config = BudgetConfig::default();
    assert_eq!(config.max_rounds, 500);
    assert_eq!(config.max_tokens, 5_000_000);
    assert_eq!(config.max_turn_context, 64_000);
    assert_eq!(config.max_edits, 25);
    assert_eq!(config.max_tests, 25);
}

#[test]
fn the_call_after_the_limit_trips_and_the_counter_stays_put() {
    let mut budget = Budget::new(BudgetConfig {
        max_edits: 25,
        ..BudgetConfig::default()
    });
    for _ in 0..25 {
        budget.try_edit().unwrap();
    }
    assert_eq!(budget.edits, 25);
    // The 26th call is refused and does not advance the counter.
    assert_eq!(budget.try_edit(), Err(BudgetExceeded::Edits));
    assert_eq!(budget.edits, 25);
    // Other counters are unaffected.
    budget.try_test().unwrap();
    assert_eq!(budget.tests, 1);
}

#[test]
fn token_accounting_orders_context_before_cumulative() {
    let mut budget = Budget::new(BudgetConfig {
        max_tokens: 100_000,
        max_turn_context: 64_000,
        ..BudgetConfig::default()
    });
    budget.add_turn_tokens(60_000).unwrap();
    // A turn over the context window is a context overflow even though it
    // would also push the cumulative total past its cap.
    assert_eq!(
        budget.add_turn_tokens(64_001),
        Err(BudgetExceeded::TurnContext)
    );
    // The refused turn counted nothing.
    assert_eq!(budget.tokens, 60_000);
    // A normal-sized turn that crosses the cumulative cap is a token overflow.
    assert_eq!(budget.add_turn_tokens(50_000), Err(BudgetExceeded::Tokens));
}

#[test]
fn round_budget_allows_exactly_the_limit() {
    let mut budget = Budget::new(BudgetConfig {
        max_rounds: 3,
        ..BudgetConfig::default()
    });
    assert!(budget.try_round().is_ok());
    assert!(budget.try_round().is_ok());
    assert!(budget.try_round().is_ok());
    assert_eq!(budget.try_round(), Err(BudgetExceeded::Rounds));
    assert_eq!(budget.rounds, 3);
}

// ---------------------------------------------------------------------------
// workspace and executor against the demo world
// ---------------------------------------------------------------------------

fn demo_setup(root: &TempDir) -> (Toolchain, DemoPaths, Vec<Issue>) {
    let world = DemoWorld::new();
    let (tc, paths) = world.toolchain(root.path()).unwrap();
    let (set, _report) = build_benchmark(&tc, world.feed(), "demo");
    (tc, paths, set.issues)
}

fn issue_by_id(issues: &[Issue], id: u64) -> &Issue {
    issues.iter().find(|i| i.id == id).unwrap()
}

#[test]
fn workspace_loads_navigates_and_reads() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    let found = exec.execute(&ToolCall::new("find").with("pattern", "instructionsimplify"));
    assert!(found.ok);
    let mut lines: Vec<&str> = found.payload.lines().collect();
    lines.sort();
    assert_eq!(
        lines,
        vec![
            "llvm/include/llvm/Analysis/InstructionSimplify.h",
            demo::INSTSIMPLIFY_FILE,
        ]
    );

    let listing = exec.execute(&ToolCall::new("list").with("path", "llvm/lib"));
    assert!(listing.ok);
    assert!(listing.payload.contains("Analysis/"));
    assert!(listing.payload.contains("CMakeLists.txt"));

    let hits = exec.execute(&ToolCall::new("grep").with("pattern", "SignBitMustBeSet"));
    assert!(hits.ok);
    assert!(hits.payload.contains(demo::INSTSIMPLIFY_FILE));

    let body = exec.execute(
        &ToolCall::new("read")
            .with("path", demo::INSTSIMPLIFY_FILE)
            .with("start", "1")
            .with("end", "3"),
    );
    assert!(body.ok);
    assert!(body.payload.starts_with("    1| "));
    assert_eq!(body.payload.lines().count(), 3);

    let code = exec.execute(&ToolCall::new("code").with("symbol", "simplifyUnaryIntrinsic"));
    assert!(code.ok, "{}", code.payload);
    assert!(code.payload.contains(demo::INSTSIMPLIFY_FILE));
    assert!(code.payload.contains("SignBitMustBeSet"));
}

#[test]
fn paths_cannot_escape_the_workspace() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    for bad in ["../secrets", "/etc/passwd", "llvm/../../x"] {
        let result = exec.execute(&ToolCall::new("read").with("path", bad));
        assert!(!result.ok, "path {bad} should be rejected");
        assert!(result.payload.contains("escapes the workspace"), "{}", result.payload);
    }
}

#[test]
fn edits_demand_a_unique_anchor() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    // "return" appears many times; the edit is refused.
    let ambiguous = exec.execute(
        &ToolCall::new("edit")
            .with("path", demo::INSTSIMPLIFY_FILE)
            .with("old", "return")
            .with("new", "RETURN"),
    );
    assert!(!ambiguous.ok);
    assert!(ambiguous.payload.contains("must be unique"));

    let missing = exec.execute(
        &ToolCall::new("edit")
            .with("path", demo::INSTSIMPLIFY_FILE)
            .with("old", "no such text anywhere")
            .with("new", "x"),
    );
    assert!(!missing.ok);
    assert!(missing.payload.contains("not found"));

    // A unique anchor works, shows up in preview, and reset clears it.
    let unique = exec.execute(
        &ToolCall::new("edit")
            .with("path", demo::INSTSIMPLIFY_FILE)
            .with("old", "!SignBitMustBeSet(Op0, Q)")
            .with("new", "!signBitIsKnownClear(Op0, Q)"),
    );
    assert!(unique.ok, "{}", unique.payload);

    let preview = exec.execute(&ToolCall::new("preview"));
    assert!(preview
        .payload
        .contains("-    if (!SignBitMustBeSet(Op0, Q))"));
    assert!(preview
        .payload
        .contains("+    if (!signBitIsKnownClear(Op0, Q))"));

    let reset = exec.execute(&ToolCall::new("reset"));
    assert!(reset.ok);
    let clean = exec.execute(&ToolCall::new("preview"));
    assert!(clean.payload.contains("workspace is clean"));
}

#[test]
fn docs_and_langref_search_the_corpus() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    let doc = exec.execute(&ToolCall::new("docs").with("query", "KnownFPClass sign bit"));
    assert!(doc.ok);
    assert!(doc.payload.contains("computeKnownFPClass"), "{}", doc.payload);

    let langref = exec.execute(&ToolCall::new("langref").with("query", "fabs"));
    assert!(langref.ok);
    assert!(langref.payload.starts_with("# langref-"), "{}", langref.payload);

    let nothing = exec.execute(&ToolCall::new("docs").with("query", "zzzzzz"));
    assert!(nothing.ok);
    assert!(nothing.payload.contains("no documentation matched"));
}

#[test]
fn eval_runs_ir_through_the_current_build() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    // On the buggy base the reproducer IR gets the fabs dropped.
    let rep = &issue.reproducers[0];
    let result = exec.execute(
        &ToolCall::new("eval")
            .with("ir", rep.ir_text.clone())
            .with("flags", rep.opt_flags.join(" ")),
    );
    assert!(result.ok, "{}", result.payload);
    assert!(result.payload.contains("ret half %sub"), "{}", result.payload);

    // Flags default to the issue's reproducer flags when omitted.
    let defaulted = exec.execute(&ToolCall::new("eval").with("ir", rep.ir_text.clone()));
    assert_eq!(defaulted.payload, result.payload);

    // Malformed IR surfaces the front-end error and a failing status.
    let garbage = exec.execute(&ToolCall::new("eval").with("ir", "this is not IR"));
    assert!(!garbage.ok);
    assert!(garbage.payload.contains("expected top-level entity"));
}

#[test]
fn debug_tool_runs_scripted_commands() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::SlpCrash.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    let result = exec.execute(&ToolCall::new("debug").with("commands", "run\nbt"));
    assert!(result.ok, "{}", result.payload);
    assert!(result.payload.contains("(run)"));
    assert!(result.payload.contains("(bt)"));
    assert!(result.payload.contains("BoUpSLP::getEntryCost"));
}

#[test]
fn test_tool_fails_on_base_then_passes_with_the_golden_fix() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    // Unmodified base: the bug still reproduces.
    let failing = exec.execute(&ToolCall::new("test"));
    assert!(!failing.ok);
    assert!(failing.payload.contains("TEST FAIL (bug check)"), "{}", failing.payload);
    assert!(failing.payload.contains("Value mismatch"), "{}", failing.payload);
    let report = exec.last_test.clone().unwrap();
    assert_eq!(report.phase, TestPhase::Reproduce);
    assert!(report.patch.is_none());

    // Apply the golden fix through an edit call and re-test.
    let old_block = "  case Intrinsic::fabs:\n    // fabs(x) -> x if the sign bit is never set.\n    if (!SignBitMustBeSet(Op0, Q))\n      return Op0;\n    break;\n";
    let new_block = "  case Intrinsic::fabs: {\n    // fabs(x) -> x only when x is known never negative; a plain sign-bit\n    // check mishandles negative zero and negative NaN payloads.\n    KnownFPClass Known = computeKnownFPClass(Op0, Q, fcNegative);\n    if (Known.isKnownNever(fcNegative))\n      return Op0;\n    break;\n  }\n";
    let e1 = exec.execute(
        &ToolCall::new("edit")
            .with("path", demo::INSTSIMPLIFY_FILE)
            .with("old", old_block)
            .with("new", new_block),
    );
    assert!(e1.ok, "{}", e1.payload);

    let passing = exec.execute(&ToolCall::new("test"));
    assert!(passing.ok, "{}", passing.payload);
    assert!(passing.payload.contains("TEST PASS"));
    let report = exec.last_test.clone().unwrap();
    assert_eq!(report.phase, TestPhase::Complete);
    let patch = report.patch.unwrap();
    assert!(patch.contains("KnownFPClass"));
}

#[test]
fn test_tool_reports_build_breakage() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::SlpCrash.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    let sabotage = exec.execute(
        &ToolCall::new("edit")
            .with("path", demo::SLP_FILE)
            .with("old", "namespace llvm {")
            .with("new", "#error broken on purpose\nnamespace llvm {"),
    );
    assert!(sabotage.ok, "{}", sabotage.payload);

    let result = exec.execute(&ToolCall::new("test"));
    assert!(!result.ok);
    assert!(result.payload.contains("TEST FAIL (build)"), "{}", result.payload);
    assert!(result.payload.contains("does not compile"));
}

/// The regressing scenario never survives the benchmark pipeline (its golden
/// patch breaks a component test, which is the point), so its issue has to be
/// assembled by hand.
fn regressing_issue(world: &DemoWorld) -> Issue {
    let flags: Vec<String> = demo::REGRESS_RUN_LINE
        .trim_start_matches(';')
        .trim()
        .split_whitespace()
        .skip(1)
        .take_while(|t| *t != "<")
        .filter(|t| *t != "%s")
        .map(str::to_string)
        .collect();
    Issue {
        id: DemoIssue::Regressing.id(),
        bug_type: crate::bench_model::BugType::Crash,
        base_commit: crate::bench_model::CommitId::new(demo::REGRESS_BASE).unwrap(),
        fixing_commit: crate::bench_model::CommitId::new(demo::REGRESS_FIX).unwrap(),
        reproducers: vec![
            crate::bench_model::Reproducer::new(demo::REGRESS_REPRO_IR, flags).unwrap(),
        ],
        golden_patch: crate::bench_model::GoldenPatch::new(
            world.golden_diff(DemoIssue::Regressing),
            "Demo Author <demo@example.org>",
            "Guard dominating-value lookup in load elimination",
        )
        .unwrap(),
        component: "GVN".to_string(),
        timestamp: "2025-01-16T08:55:30Z".parse().unwrap(),
        title: "load elimination segfaults".to_string(),
        body: String::new(),
        labels: vec!["crash".to_string()],
        author: "reporter".to_string(),
    }
}

#[test]
fn test_tool_catches_component_regressions() {
    let root = TempDir::new().unwrap();
    let world = DemoWorld::new();
    let (tc, paths) = world.toolchain(root.path()).unwrap();
    let issue = regressing_issue(&world);
    let mut exec = ToolExecutor::new(&tc, &issue, &paths.doc_root).unwrap();

    // Replicate the regressing golden patch: the crash goes away but a
    // component test starts failing. A whole-file anchor is always unique.
    let golden = world.golden_diff(DemoIssue::Regressing);
    let diff = crate::diffscope::parse_unified_diff(&golden).unwrap();
    for fp in &diff.files {
        let path = fp.effective_path().to_string();
        let old = exec.workspace.file(&path).unwrap().to_string();
        let new = crate::diffscope::apply_file_patch(fp, Some(&old))
            .unwrap()
            .unwrap();
        exec.workspace.edit(&path, &old, &new).unwrap();
    }

    let result = exec.execute(&ToolCall::new("test"));
    assert!(!result.ok);
    assert!(
        result.payload.contains("TEST FAIL (regression tests)"),
        "{}",
        result.payload
    );
    assert!(result.payload.contains("regression-guard"), "{}", result.payload);
}

#[test]
fn unknown_tools_report_the_registry() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    let result = exec.execute(&ToolCall::new("compile"));
    assert!(!result.ok);
    for (name, _) in ALL_TOOLS {
        assert!(result.payload.contains(name));
    }
}

#[test]
fn tool_registry_is_complete_and_unique() {
    let names: Vec<&str> = ALL_TOOLS.iter().map(|(n, _)| *n).collect();
    assert_eq!(names.len(), 14);
    let unique: std::collections::BTreeSet<&str> = names.iter().copied().collect();
    assert_eq!(unique.len(), names.len());
    for expected in [
        "find", "grep", "list", "read", "edit", "preview", "code", "docs", "langref", "debug",
        "eval", "reset", "test", "stop",
    ] {
        assert!(names.contains(&expected), "missing tool {expected}");
    }
}

#[test]
fn missing_arguments_come_back_as_usage_errors() {
    let root = TempDir::new().unwrap();
    let (tc, paths, issues) = demo_setup(&root);
    let issue = issue_by_id(&issues, DemoIssue::FabsMiscompile.id());
    let mut exec = ToolExecutor::new(&tc, issue, &paths.doc_root).unwrap();

    for (tool, key) in [
        ("find", "pattern"),
        ("grep", "pattern"),
        ("read", "path"),
        ("code", "symbol"),
        ("docs", "query"),
        ("debug", "commands"),
        ("eval", "ir"),
    ] {
        let result = exec.execute(&ToolCall::new(tool));
        assert!(!result.ok, "{tool} without args should fail");
        assert!(
            result.payload.contains(&format!("{key}=")),
            "{tool}: {}",
            result.payload
        );
    }
}

#[test]
fn scripted_calls_serialize_for_transcripts() {
    let call = ToolCall::new("grep").with("pattern", "fabs");
    let json = serde_json::to_string(&call).unwrap();
    let back: ToolCall = serde_json::from_str(&json).unwrap();
    assert_eq!(back, call);

    let mut args = BTreeMap::new();
    args.insert("reason".to_string(), "done".to_string());
    let stop = ToolCall {
        name: "stop".to_string(),
        args,
    };
    assert_eq!(render_tool_call(&stop), "stop(reason=\"done\")");
}
