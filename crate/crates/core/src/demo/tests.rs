use super::*;
use crate::bench_builder::parse_feed;
use crate::bench_model::{classify_split, BugType, Reproducer, Split};
use crate::diffscope::{
    apply_diff_to_tree, compute_edit_stats, parse_unified_diff,
};
use crate::toolchain::{
    parse_stack_trace, BuildOutcome, Evidence, ReproProbe, TestScope,
};

fn world() -> DemoWorld {
    DemoWorld::new()
}

fn rep(run_line: &str, ir: &str) -> Reproducer {
    let flags: Vec<String> = run_line
        .trim_start_matches(';')
        .trim()
        .split_whitespace()
        .skip(1) // "opt"
        .take_while(|t| *t != "<")
        .filter(|t| *t != "%s")
        .map(str::to_string)
        .collect();
    Reproducer::new(ir, flags).expect("demo reproducer is valid")
}

#[test]
fn trees_cover_every_commit_and_component() {
    let w = world();
    let commits = [
        SLP_BASE,
        FABS_BASE,
        PEEL_PARENT,
        PEEL_BASE,
        RETRACTED_BASE,
        FLAKY_BASE,
        REGRESS_BASE,
    ];
    for commit in commits {
        let tree = w.tree(commit).expect("commit has a tree");
        assert!(tree.contains_key(CMAKELISTS_FILE), "{commit} lacks cmake file");
        for (_, file) in COMPONENT_FILES {
            assert!(tree.contains_key(*file), "{commit} lacks {file}");
        }
    }
    assert!(
        w.tree(PEEL_PARENT).unwrap().contains_key("llvm/lib/Support/Broken.cpp"),
        "the unbuildable parent carries the broken source"
    );
    assert!(w.tree(FABS_MISSING_PARENT).is_none());
}

#[test]
fn golden_diffs_apply_back_to_the_fixed_sources() {
    let w = world();
    let cases = [
        (DemoIssue::SlpCrash, SLP_BASE, SLP_FILE),
        (DemoIssue::FabsMiscompile, FABS_BASE, INSTSIMPLIFY_FILE),
        (DemoIssue::PeelCrash, PEEL_BASE, LOOPPEEL_FILE),
        (DemoIssue::Regressing, REGRESS_BASE, GVN_FILE),
        (DemoIssue::Retracted, RETRACTED_BASE, VALUETRACKING_FILE),
        (DemoIssue::Flaky, FLAKY_BASE, INSTCOMBINE_FILE),
    ];
    for (issue, base, file) in cases {
        let diff = parse_unified_diff(&w.golden_diff(issue)).expect("golden parses");
        assert_eq!(diff.files.len(), 1);
        assert_eq!(diff.files[0].effective_path(), file);
        let mut tree = w.tree(base).unwrap().clone();
        apply_diff_to_tree(&diff, &mut tree).expect("golden applies to its base");
        assert_ne!(
            tree[file],
            w.tree(base).unwrap()[file],
            "{issue:?} golden changes its file"
        );
    }
}

#[test]
fn slp_golden_is_a_small_single_function_fix() {
    let w = world();
    let diff = parse_unified_diff(&w.golden_diff(DemoIssue::SlpCrash)).unwrap();
    let heading = diff.files[0].hunks[0]
        .section_heading
        .clone()
        .expect("hunk carries its enclosing function");
    assert!(heading.contains("getEntryCost"), "heading: {heading}");

    let stats = compute_edit_stats(&diff, &w.index(SLP_BASE));
    assert_eq!((stats.lines, stats.funcs, stats.files), (3, 1, 1));
    assert_eq!(classify_split(&stats), Split::Easy);
}

#[test]
fn builds_succeed_fail_and_cache_patched_trees() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();

    let base = crate::bench_model::CommitId::new(SLP_BASE.to_string()).unwrap();
    let pristine = tc.build(&base, None).unwrap().ready().expect("base builds");
    assert_eq!(pristine.fingerprint, SLP_BASE);

    let golden = w.golden_diff(DemoIssue::SlpCrash);
    let patched = tc
        .build(&base, Some(&golden))
        .unwrap()
        .ready()
        .expect("patched base builds");
    assert!(patched.fingerprint.starts_with(&format!("{SLP_BASE}+")));

    let parent = crate::bench_model::CommitId::new(PEEL_PARENT.to_string()).unwrap();
    match tc.build(&parent, None).unwrap() {
        BuildOutcome::Failed { log } => {
            assert!(log.contains("work in progress"), "log: {log}")
        }
        BuildOutcome::Ready(_) => panic!("the broken parent must not build"),
    }
}

#[test]
fn garbage_patches_fail_the_build() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(SLP_BASE.to_string()).unwrap();

    // parseable but targeting content that is not there
    let bogus = "--- a/llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp\n\
                 +++ b/llvm/lib/Transforms/Vectorize/SLPVectorizer.cpp\n\
                 @@ -1,1 +1,1 @@\n\
                 -not the real first line\n\
                 +replacement\n";
    match tc.build(&base, Some(bogus)).unwrap() {
        BuildOutcome::Failed { log } => assert!(log.contains("patch failed"), "log: {log}"),
        BuildOutcome::Ready(_) => panic!("mismatched patch must not build"),
    }
}

#[test]
fn slp_crash_reproduces_until_the_golden_fix_is_applied() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(SLP_BASE.to_string()).unwrap();
    let r = rep(SLP_RUN_LINE, SLP_REPRO_IR);

    let buggy = tc.build(&base, None).unwrap().ready().unwrap();
    match tc.probe(&buggy, BugType::Crash, &r).unwrap() {
        ReproProbe::Reproduced(Evidence::Crash { frames, fully_filtered, .. }) => {
            assert!(!fully_filtered);
            assert!(
                frames[0].symbol.contains("BoUpSLP::getEntryCost"),
                "first retained frame: {}",
                frames[0].symbol
            );
        }
        other => panic!("expected a crash, got {other:?}"),
    }

    let fixed = tc
        .build(&base, Some(&w.golden_diff(DemoIssue::SlpCrash)))
        .unwrap()
        .ready()
        .unwrap();
    assert!(matches!(
        tc.probe(&fixed, BugType::Crash, &r).unwrap(),
        ReproProbe::NotReproduced
    ));
}

#[test]
fn fabs_miscompile_is_refuted_then_verified() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(FABS_BASE.to_string()).unwrap();
    let r = rep(FABS_RUN_LINE, FABS_REPRO_IR);

    let buggy = tc.build(&base, None).unwrap().ready().unwrap();
    match tc.probe(&buggy, BugType::Miscompilation, &r).unwrap() {
        ReproProbe::Reproduced(Evidence::Miscompile { counterexample }) => {
            assert_eq!(counterexample.error, "Value mismatch");
            assert!(!counterexample.example_bindings.is_empty());
        }
        other => panic!("expected a refuted transform, got {other:?}"),
    }

    let fixed = tc
        .build(&base, Some(&w.golden_diff(DemoIssue::FabsMiscompile)))
        .unwrap()
        .ready()
        .unwrap();
    assert!(matches!(
        tc.probe(&fixed, BugType::Miscompilation, &r).unwrap(),
        ReproProbe::NotReproduced
    ));
}

#[test]
fn print_changed_reports_the_guilty_pass() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(FABS_BASE.to_string()).unwrap();
    let buggy = tc.build(&base, None).unwrap().ready().unwrap();

    let mut with_dump = rep(FABS_RUN_LINE, FABS_REPRO_IR);
    with_dump.opt_flags.push("-print-changed".to_string());
    let out = tc.run_opt(&buggy, &with_dump).unwrap();
    assert_eq!(out.exit_code, 0);
    assert!(
        out.stderr_text()
            .contains("*** IR Dump After InstSimplifyPass on fabs_case ***"),
        "stderr: {}",
        out.stderr_text()
    );

    let fixed = tc
        .build(&base, Some(&w.golden_diff(DemoIssue::FabsMiscompile)))
        .unwrap()
        .ready()
        .unwrap();
    let out = tc.run_opt(&fixed, &with_dump).unwrap();
    assert!(out.stderr_text().contains("omitted because no change"));
}

#[test]
fn flaky_report_runs_clean_on_its_base() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(FLAKY_BASE.to_string()).unwrap();
    let handle = tc.build(&base, None).unwrap().ready().unwrap();
    let r = rep(FLAKY_RUN_LINE, FLAKY_REPRO_IR);
    assert!(matches!(
        tc.probe(&handle, BugType::Crash, &r).unwrap(),
        ReproProbe::NotReproduced
    ));
}

#[test]
fn regressing_golden_fixes_the_crash_but_fails_component_tests() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(REGRESS_BASE.to_string()).unwrap();
    let r = rep(REGRESS_RUN_LINE, REGRESS_REPRO_IR);

    let buggy = tc.build(&base, None).unwrap().ready().unwrap();
    assert!(tc.probe(&buggy, BugType::Crash, &r).unwrap().reproduced());
    let clean_tests = tc
        .run_regression_tests(&buggy, &TestScope::Component("GVN".to_string()))
        .unwrap();
    assert!(clean_tests.all_passed());
    assert_eq!(clean_tests.total(), 11);

    let patched = tc
        .build(&base, Some(&w.golden_diff(DemoIssue::Regressing)))
        .unwrap()
        .ready()
        .unwrap();
    assert!(matches!(
        tc.probe(&patched, BugType::Crash, &r).unwrap(),
        ReproProbe::NotReproduced
    ));
    let broken_tests = tc
        .run_regression_tests(&patched, &TestScope::Component("GVN".to_string()))
        .unwrap();
    assert_eq!(broken_tests.failed, 1);
    assert!(broken_tests.failures[0].contains("regression-guard"));

    let broad = tc
        .run_regression_tests(&patched, &TestScope::AllMiddleEnd)
        .unwrap();
    assert_eq!(broad.failed, 1);
    assert_eq!(broad.total(), 80);
}

#[test]
fn malformed_ir_fails_without_a_stack_trace() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(SLP_BASE.to_string()).unwrap();
    let handle = tc.build(&base, None).unwrap().ready().unwrap();

    let bad = rep(SLP_RUN_LINE, "this is not IR at all\n");
    let out = tc.run_opt(&handle, &bad).unwrap();
    assert_ne!(out.exit_code, 0);
    assert!(parse_stack_trace(&out.stderr_text()).is_none());
}

#[test]
fn feed_round_trips_through_jsonl() {
    let w = world();
    let feed = w.feed();
    assert_eq!(feed.len(), 7);
    let parsed = parse_feed(&w.feed_jsonl()).unwrap();
    assert_eq!(parsed, feed);
    let ids: Vec<u64> = parsed.iter().map(|c| c.id).collect();
    assert_eq!(
        ids,
        vec![
            SLP_ISSUE_ID,
            FABS_ISSUE_ID,
            PEEL_ISSUE_ID,
            RETRACTED_ISSUE_ID,
            FLAKY_ISSUE_ID,
            REGRESS_ISSUE_ID,
            DUPLICATE_ISSUE_ID
        ]
    );
    // the duplicate shares the fixing commit with the original report
    assert_eq!(parsed[6].fix.sha, parsed[0].fix.sha);
}

#[test]
fn debugger_answers_scripted_commands() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let (tc, _) = w.toolchain(dir.path()).unwrap();
    let base = crate::bench_model::CommitId::new(SLP_BASE.to_string()).unwrap();
    let handle = tc.build(&base, None).unwrap().ready().unwrap();

    let mut session = tc
        .debug_session(&handle, &rep(SLP_RUN_LINE, SLP_REPRO_IR))
        .unwrap();
    let bt = session.run_command("bt").unwrap();
    assert!(bt.contains("BoUpSLP::getEntryCost"));
    assert_eq!(session.run_command("whatever").unwrap(), "(no output)");
}
