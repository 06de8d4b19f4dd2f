use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use serde::Deserialize;

use super::*;
use crate::diffscope::tests::SLP_GOLDEN_DIFF;

/// A real-world-shaped record: SLP vectorizer crash, one reproducer, the
/// upstream fix as a golden patch.
pub fn slp_record_text() -> String {
    format!(
        "BugType: Crash\n\
         BaseCommit: 9a8b0407fc16af4ca6f79a2583297318a645d88a\n\
         FixingCommit: 3cb82f49dc990dc20a765856c0e126193992fe44\n\
         Reproducers:\n\
         ```llvm\n\
         ; opt -passes=slp-vectorizer -mtriple=systemz-unknown -mcpu=z15 -S < %s\n\
         define i32 @test(i16 %0) {{\n\
         entry:\n\
         \x20 %cmp = icmp slt i16 %0, 0\n\
         \x20 %sel = select i1 %cmp, i16 %0, i16 1\n\
         \x20 %ext = sext i16 %sel to i32\n\
         \x20 ret i32 %ext\n\
         }}\n\
         ```\n\
         GoldenPatch:\n\
         ```diff\n\
         Author: Alexey Bataev <a.bataev@outlook.com>\n\
         Date: Mon Jul 22 12:45:28 2024 -0700\n\
         \n\
         \x20   [SLP]Fix PR99899: use correct type for minmax reduction cost.\n\
         \n\
         {SLP_GOLDEN_DIFF}\
         ```\n\
         IssueID: 99899\n\
         IssueTimestamp: 2024-07-22T17:02:03Z\n\
         IssueAuthor: JonPsson1\n\
         IssueLabels: llvm:SLPVectorizer, crash-on-valid\n\
         IssueTitle: [SLP] Crash in getEntryCost with min/max reduction\n\
         IssueBody:\n\
         ```plain\n\
         The attached IR crashes opt at -passes=slp-vectorizer on SystemZ.\n\
         Bisected to the cost-model change for min/max reductions.\n\
         ```\n"
    )
}

#[test]
fn parses_full_record() {
    let issue = parse_issue_record(&slp_record_text()).unwrap();
    assert_eq!(issue.id, 99899);
    assert_eq!(issue.bug_type, BugType::Crash);
    assert_eq!(
        issue.base_commit.as_str(),
        "9a8b0407fc16af4ca6f79a2583297318a645d88a"
    );
    assert_eq!(issue.fixing_commit.short(), "3cb82f49dc99");
    assert_eq!(issue.reproducers.len(), 1);
    let rep = &issue.reproducers[0];
    assert!(rep.opt_flags.contains(&"-passes=slp-vectorizer".to_string()));
    assert!(rep.ir_text.starts_with("define i32 @test"));
    assert_eq!(
        issue.golden_patch.author_line,
        "Alexey Bataev <a.bataev@outlook.com>"
    );
    assert!(issue.golden_patch.message.contains("PR99899"));
    assert!(issue.golden_patch.diff_text.starts_with("diff --git"));
    // Component falls back to the llvm: label when no Component line exists.
    assert_eq!(issue.component, "SLPVectorizer");
    assert_eq!(issue.labels, vec!["llvm:SLPVectorizer", "crash-on-valid"]);
    assert_eq!(issue.author, "JonPsson1");
    assert_eq!(
        issue.timestamp,
        Utc.with_ymd_and_hms(2024, 7, 22, 17, 2, 3).unwrap()
    );
    assert!(issue.body.contains("crashes opt"));
}

#[test]
fn record_round_trips() {
    let first = parse_issue_record(&slp_record_text()).unwrap();
    let rendered = render_issue_record(&first);
    let second = parse_issue_record(&rendered).unwrap();
    assert_eq!(first, second);
    // The canonical form is a fixpoint.
    assert_eq!(rendered, render_issue_record(&second));
}

#[test]
fn rejects_unknown_bug_type() {
    let text = slp_record_text().replace("BugType: Crash", "BugType: Hang");
    assert_eq!(
        parse_issue_record(&text),
        Err(RecordError::UnknownBugType("Hang".to_string()))
    );
}

#[test]
fn rejects_missing_fields() {
    let text = slp_record_text().replace("IssueAuthor: JonPsson1\n", "");
    assert_eq!(
        parse_issue_record(&text),
        Err(RecordError::MissingField("IssueAuthor"))
    );

    let mut no_golden = String::new();
    for line in slp_record_text().lines() {
        no_golden.push_str(line);
        no_golden.push('\n');
    }
    let start = no_golden.find("GoldenPatch:\n").unwrap();
    let end = no_golden[start..].find("\nIssueID").unwrap() + start + 1;
    no_golden.replace_range(start..end, "");
    assert_eq!(
        parse_issue_record(&no_golden),
        Err(RecordError::MissingField("GoldenPatch"))
    );
}

#[test]
fn rejects_unterminated_fence() {
    let text = slp_record_text();
    let cut = text.rfind("```").unwrap();
    let err = parse_issue_record(&text[..cut]).unwrap_err();
    assert!(matches!(err, RecordError::MalformedBlock("record", _)));
}

#[test]
fn rejects_reproducer_without_pass_selection() {
    let text = slp_record_text().replace(
        "; opt -passes=slp-vectorizer -mtriple=systemz-unknown -mcpu=z15 -S < %s",
        "; opt -S < %s",
    );
    let err = parse_issue_record(&text).unwrap_err();
    assert!(matches!(err, RecordError::MalformedBlock("Reproducers", _)));
}

#[test]
fn rejects_invariant_violations() {
    let same = slp_record_text().replace(
        "FixingCommit: 3cb82f49dc990dc20a765856c0e126193992fe44",
        "FixingCommit: 9a8b0407fc16af4ca6f79a2583297318a645d88a",
    );
    assert!(matches!(
        parse_issue_record(&same),
        Err(RecordError::InvalidField { field: "FixingCommit", .. })
    ));

    let excluded = slp_record_text().replace(
        "IssueLabels: llvm:SLPVectorizer, crash-on-valid",
        "IssueLabels: llvm:SLPVectorizer, wontfix",
    );
    assert!(matches!(
        parse_issue_record(&excluded),
        Err(RecordError::InvalidField { field: "IssueLabels", .. })
    ));

    let bad_commit = slp_record_text().replace(
        "BaseCommit: 9a8b0407fc16af4ca6f79a2583297318a645d88a",
        "BaseCommit: abc123",
    );
    assert!(matches!(
        parse_issue_record(&bad_commit),
        Err(RecordError::InvalidField { field: "BaseCommit", .. })
    ));
}

#[test]
fn normalizes_run_line_variants() {
    let text = slp_record_text().replace(
        "; opt -passes=slp-vectorizer -mtriple=systemz-unknown -mcpu=z15 -S < %s",
        "; RUN: opt %s -passes=slp-vectorizer -S | FileCheck %s",
    );
    let issue = parse_issue_record(&text).unwrap();
    assert_eq!(issue.reproducers[0].opt_flags, vec!["-passes=slp-vectorizer", "-S"]);
    // Round trip through the canonical renderer keeps the fields.
    let again = parse_issue_record(&render_issue_record(&issue)).unwrap();
    assert_eq!(issue, again);
}

fn stats(lines: u64, funcs: u64, files: u64) -> EditStats {
    EditStats { lines, funcs, files, diagnostics: Vec::new() }
}

#[test]
fn split_classification_table() {
    assert_eq!(classify_split(&stats(3, 1, 1)), Split::Easy);
    assert_eq!(classify_split(&stats(3, 0, 1)), Split::Easy);
    assert_eq!(classify_split(&stats(40, 3, 1)), Split::Medium);
    assert_eq!(classify_split(&stats(40, 5, 2)), Split::Hard);
    assert_eq!(classify_split(&stats(1, 1, 2)), Split::Hard);
}

const TINY_DIFF: &str = "\
diff --git a/llvm/lib/Analysis/Probe.cpp b/llvm/lib/Analysis/Probe.cpp
--- a/llvm/lib/Analysis/Probe.cpp
+++ b/llvm/lib/Analysis/Probe.cpp
@@ -1,1 +1,1 @@
-int probe = 0;
+int probe = 1;
";

fn make_issue(id: u64, bug_type: BugType, timestamp: chrono::DateTime<Utc>, reps: u64) -> Issue {
    let rep = Reproducer::new(
        "define void @f() { ret void }\n",
        vec!["-passes=instsimplify".to_string(), "-S".to_string()],
    )
    .unwrap();
    Issue {
        id,
        bug_type,
        base_commit: CommitId::new(format!("{:040x}", id * 2 + 1)).unwrap(),
        fixing_commit: CommitId::new(format!("{:040x}", id * 2 + 2)).unwrap(),
        reproducers: vec![rep; reps as usize],
        golden_patch: GoldenPatch::new(TINY_DIFF, "A U Thor <a@example.org>", "fix\n").unwrap(),
        component: "InstSimplify".to_string(),
        timestamp,
        title: format!("issue {id}"),
        body: "body\n".to_string(),
        labels: vec!["llvm:instsimplify".to_string()],
        author: "reporter".to_string(),
    }
}

#[test]
fn golden_patch_rejects_paths_outside_roots() {
    let stray = TINY_DIFF.replace("llvm/lib/Analysis/Probe.cpp", "clang/lib/Sema/Sema.cpp");
    let err = GoldenPatch::new(stray, "A <a@b>", "m\n").unwrap_err();
    assert!(matches!(err, ModelError::PatchOutsideRoots(p) if p.starts_with("clang/")));
}

#[test]
fn live_subset_filters_on_fix_timestamp() {
    let t = |m: u32| Utc.with_ymd_and_hms(2024, m, 1, 0, 0, 0).unwrap();
    let set = BenchmarkSet {
        name: "all".to_string(),
        issues: vec![
            make_issue(1, BugType::Crash, t(1), 1),
            make_issue(2, BugType::Crash, t(5), 1),
            make_issue(3, BugType::Miscompilation, t(9), 1),
        ],
        created_at: t(10),
    };
    set.validate().unwrap();

    let live = select_live_subset(&set, t(4)).unwrap();
    assert_eq!(live.issues.iter().map(|i| i.id).collect::<Vec<_>>(), vec![2, 3]);
    assert_eq!(live.name, "all");

    // A cutoff before the oldest issue keeps everything.
    let all = select_live_subset(&set, t(1)).unwrap();
    assert_eq!(all, set);

    assert_eq!(select_live_subset(&set, t(12)), Err(ModelError::EmptyResult));
}

#[test]
fn duplicate_ids_rejected() {
    let t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let set = BenchmarkSet {
        name: "dup".to_string(),
        issues: vec![make_issue(7, BugType::Crash, t, 1), make_issue(7, BugType::Crash, t, 1)],
        created_at: t,
    };
    assert_eq!(set.validate(), Err(ModelError::DuplicateId(7)));
}

#[test]
fn empty_set_stats_use_sentinels() {
    let set = BenchmarkSet {
        name: "empty".to_string(),
        issues: Vec::new(),
        created_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
    };
    let stats = compute_set_stats(&set, &BTreeMap::new(), None).unwrap();
    assert_eq!(stats.total.bugs, 0);
    assert_eq!(stats.avg_edited_lines, None);
    assert!(stats.to_text().contains("\u{2014}"));
    let json = serde_json::to_value(&stats).unwrap();
    assert_eq!(json["avg_edited_lines"], serde_json::Value::Null);
}

#[test]
fn coverage_gap_reported() {
    let t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let set = BenchmarkSet {
        name: "gap".to_string(),
        issues: vec![make_issue(5, BugType::Crash, t, 1)],
        created_at: t,
    };
    let err = compute_set_stats(&set, &BTreeMap::new(), None).unwrap_err();
    assert_eq!(err, ModelError::CoverageGap(5));
}

#[derive(Deserialize)]
struct ProfileRow {
    bug: String,
    lines: u64,
    funcs: u64,
    files: u64,
    live: bool,
    reps: u64,
    regs: u64,
}

/// Builds a full set from the bundled shape profile and checks the
/// descriptor table against independently summed expectations.
#[test]
fn profile_set_stats_match_hand_sums() {
    let rows: Vec<ProfileRow> =
        serde_json::from_str(include_str!("../../data/split_profile.json")).unwrap();
    assert_eq!(rows.len(), 334);

    let live_t = Utc.with_ymd_and_hms(2024, 11, 1, 0, 0, 0).unwrap();
    let old_t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let cutoff = Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap();

    let mut issues = Vec::new();
    let mut edit_stats = BTreeMap::new();
    let mut reg_tests = BTreeMap::new();
    for (idx, row) in rows.iter().enumerate() {
        let id = 1000 + idx as u64;
        let bug = match row.bug.as_str() {
            "C" => BugType::Crash,
            "M" => BugType::Miscompilation,
            other => panic!("bad bug tag {other}"),
        };
        let ts = if row.live { live_t } else { old_t };
        issues.push(make_issue(id, bug, ts, row.reps));
        edit_stats.insert(id, stats(row.lines, row.funcs, row.files));
        reg_tests.insert(id, row.regs);
    }
    let set = BenchmarkSet {
        name: "profile".to_string(),
        issues,
        created_at: live_t,
    };
    set.validate().unwrap();

    // Hand sums straight off the rows, as an independent oracle.
    let n = rows.len() as f64;
    let sum = |f: &dyn Fn(&ProfileRow) -> u64| rows.iter().map(|r| f(r)).sum::<u64>() as f64;
    let expect_lines = (sum(&|r| r.lines) / n * 10.0).round() / 10.0;
    let expect_funcs = (sum(&|r| r.funcs) / n * 10.0).round() / 10.0;
    let expect_files = (sum(&|r| r.files) / n * 10.0).round() / 10.0;
    let expect_reps = (sum(&|r| r.reps) / n * 10.0).round() / 10.0;
    let expect_regs = (sum(&|r| r.regs) / n * 10.0).round() / 10.0;

    let rounded = compute_set_stats(&set, &edit_stats, Some(&reg_tests))
        .unwrap()
        .rounded();
    assert_eq!(rounded.avg_edited_lines, Some(expect_lines));
    assert_eq!(rounded.avg_edited_funcs, Some(expect_funcs));
    assert_eq!(rounded.avg_edited_files, Some(expect_files));
    assert_eq!(rounded.avg_reproducers, Some(expect_reps));
    assert_eq!(rounded.avg_regression_tests, Some(expect_regs));

    // The profile is tuned to the published shape of the corpus.
    assert_eq!(rounded.avg_edited_lines, Some(17.1));
    assert_eq!(rounded.avg_edited_funcs, Some(1.6));
    assert_eq!(rounded.avg_edited_files, Some(1.2));
    assert_eq!(rounded.avg_reproducers, Some(1.4));
    assert_eq!(rounded.avg_regression_tests, Some(722.2));

    assert_eq!(rounded.total.bugs, 334);
    assert_eq!(rounded.total.crashes, 222);
    assert_eq!(rounded.total.miscompilations, 112);
    let easy = rounded.by_split[&Split::Easy];
    let medium = rounded.by_split[&Split::Medium];
    let hard = rounded.by_split[&Split::Hard];
    assert_eq!((easy.bugs, easy.crashes, easy.miscompilations), (255, 176, 79));
    assert_eq!((medium.bugs, medium.crashes, medium.miscompilations), (44, 26, 18));
    assert_eq!((hard.bugs, hard.crashes, hard.miscompilations), (35, 20, 15));

    // Live subset: filter by cutoff, then recompute.
    let live = select_live_subset(&set, cutoff).unwrap();
    assert_eq!(live.issues.len(), 229);
    let live_stats = compute_set_stats(&live, &edit_stats, Some(&reg_tests))
        .unwrap()
        .rounded();
    assert_eq!(live_stats.total.crashes, 160);
    assert_eq!(live_stats.total.miscompilations, 69);
    assert_eq!(live_stats.avg_reproducers, Some(1.5));
    let live_easy = live_stats.by_split[&Split::Easy];
    assert_eq!(live_easy.bugs, 172);
    assert_eq!(live_stats.by_split[&Split::Medium].bugs, 34);
    assert_eq!(live_stats.by_split[&Split::Hard].bugs, 23);
}

#[test]
fn manifest_round_trips() {
    let t = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
    let set = BenchmarkSet {
        name: "mini".to_string(),
        issues: vec![
            parse_issue_record(&slp_record_text()).unwrap(),
            make_issue(42, BugType::Miscompilation, t, 2),
        ],
        created_at: t,
    };
    let dir = tempfile::tempdir().unwrap();
    write_manifest(dir.path(), &set).unwrap();

    let index_text = std::fs::read_to_string(dir.path().join("index.json")).unwrap();
    assert!(index_text.contains("conventions"));
    assert!(dir.path().join("records/99899.rec").exists());

    let loaded = load_manifest(dir.path()).unwrap();
    assert_eq!(loaded, set);
}
