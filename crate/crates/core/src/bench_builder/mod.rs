//! Benchmark construction pipeline: collect fix candidates from an issue
//! feed, screen them, validate their reproducers against real builds, and
//! validate the human fix, producing a benchmark set plus a funnel report.
//!
//! The stages only ever shrink the candidate pool:
//! collect, dedupe by fixing commit, screen on metadata (stage one),
//! reproduce on a buildable base (stage two), then check that the golden
//! patch builds, fixes, and does not regress (stage three).

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench_model::{
    BenchmarkSet, BugType, CommitId, GoldenPatch, Issue, Reproducer, EXCLUDED_LABELS,
};
use crate::diffscope::UnifiedDiff;
use crate::toolchain::{BuildHandle, BuildOutcome, ReproProbe, TestScope, Toolchain};

/// One issue-plus-fix candidate from the collection feed, one JSON object
/// per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedCandidate {
    pub id: u64,
    pub title: String,
    /// Full report body; reproducers are fenced ```llvm blocks inside it.
    pub body: String,
    pub labels: Vec<String>,
    pub author: String,
    /// When the issue was reported.
    pub timestamp: DateTime<Utc>,
    pub fix: FixInfo,
    /// Ancestors of the fixing commit, parent first. The pipeline picks the
    /// first one that builds.
    pub ancestry: Vec<String>,
}

/// The upstream fixing commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixInfo {
    pub sha: String,
    pub author_line: String,
    /// Author date of the fix; becomes the issue timestamp, which is what
    /// contamination-aware subsetting filters on.
    pub date: DateTime<Utc>,
    pub message: String,
    /// The fix as a unified diff.
    pub patch: String,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("feed line {line}: {source}")]
    Feed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Parses a JSONL candidate feed. Blank lines and `#` comment lines are
/// skipped.
pub fn parse_feed(text: &str) -> Result<Vec<FeedCandidate>, BuildError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cand: FeedCandidate =
            serde_json::from_str(trimmed).map_err(|source| BuildError::Feed {
                line: idx + 1,
                source,
            })?;
        out.push(cand);
    }
    Ok(out)
}

pub fn read_feed(path: &Path) -> Result<Vec<FeedCandidate>, BuildError> {
    parse_feed(&fs::read_to_string(path)?)
}

/// Why a candidate fell out of the funnel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RejectReason {
    DuplicateFix { kept: u64 },
    ExcludedLabel(String),
    NoBugTypeLabel,
    NoReproducerBlock,
    BadPatch(String),
    NoBuildableBase,
    NotReproducing,
    ProbeIndeterminate(String),
    GoldenDoesNotBuild,
    GoldenDoesNotFix,
    GoldenRegresses(Vec<String>),
    InvalidRecord(String),
    ToolFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub candidate_id: u64,
    pub reason: RejectReason,
}

/// Funnel counts for one pipeline run. Each stage can only shrink the pool.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub collected: u64,
    pub after_dedupe: u64,
    pub stage1_accepted: u64,
    pub stage2_validated: u64,
    pub stage3_final: u64,
    pub rejections: Vec<Rejection>,
}

impl PipelineReport {
    /// The funnel property: monotonically non-increasing stage counts, and
    /// every drop accounted for by a rejection.
    pub fn check_funnel(&self) -> Result<(), String> {
        let seq = [
            self.collected,
            self.after_dedupe,
            self.stage1_accepted,
            self.stage2_validated,
            self.stage3_final,
        ];
        if seq.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("funnel increases: {seq:?}"));
        }
        let dropped = self.collected - self.stage3_final;
        if dropped != self.rejections.len() as u64 {
            return Err(format!(
                "{} candidates dropped but {} rejections recorded",
                dropped,
                self.rejections.len()
            ));
        }
        Ok(())
    }
}

/// Transform owning a source file, by file stem. Used to infer the component
/// when no `llvm:` label names it.
pub const COMPONENT_BY_FILE_STEM: &[(&str, &str)] = &[
    ("SLPVectorizer", "SLPVectorizer"),
    ("InstructionSimplify", "InstSimplify"),
    ("InstCombineCalls", "InstCombine"),
    ("InstructionCombining", "InstCombine"),
    ("LoopPeel", "LoopUnroll"),
    ("LoopUnrollPass", "LoopUnroll"),
    ("GVN", "GVN"),
    ("ValueTracking", "ValueTracking"),
    ("SimplifyCFG", "SimplifyCFG"),
    ("LoopVectorize", "LoopVectorize"),
];

/// Component owning the first file the diff touches, from the stem table.
pub fn component_from_paths(diff: &UnifiedDiff) -> Option<String> {
    for fp in &diff.files {
        let path = fp.effective_path();
        let stem = Path::new(path).file_stem()?.to_str()?;
        if let Some((_, comp)) = COMPONENT_BY_FILE_STEM.iter().find(|(s, _)| *s == stem) {
            return Some(comp.to_string());
        }
    }
    None
}

/// Drops candidates whose fixing commit was already claimed by an earlier
/// candidate. Earlier means smaller (report timestamp, id).
pub fn dedupe_candidates(
    candidates: Vec<FeedCandidate>,
) -> (Vec<FeedCandidate>, Vec<Rejection>) {
    let mut keeper: std::collections::BTreeMap<String, (DateTime<Utc>, u64)> =
        std::collections::BTreeMap::new();
    for c in &candidates {
        let entry = keeper
            .entry(c.fix.sha.clone())
            .or_insert((c.timestamp, c.id));
        if (c.timestamp, c.id) < *entry {
            *entry = (c.timestamp, c.id);
        }
    }
    let mut kept = Vec::new();
    let mut rejections = Vec::new();
    for c in candidates {
        let (_, keep_id) = keeper[&c.fix.sha];
        if c.id == keep_id {
            kept.push(c);
        } else {
            rejections.push(Rejection {
                candidate_id: c.id,
                reason: RejectReason::DuplicateFix { kept: keep_id },
            });
        }
    }
    (kept, rejections)
}

/// A candidate that survived metadata screening.
#[derive(Debug, Clone)]
pub struct ScreenedCandidate {
    pub feed: FeedCandidate,
    pub bug_type: BugType,
    pub reproducers: Vec<Reproducer>,
    pub golden: GoldenPatch,
    pub component: String,
}

fn bug_type_from_labels(labels: &[String]) -> Option<BugType> {
    let lower: Vec<String> = labels.iter().map(|l| l.to_ascii_lowercase()).collect();
    if lower.iter().any(|l| l.contains("miscompil")) {
        Some(BugType::Miscompilation)
    } else if lower.iter().any(|l| l == "crash" || l == "crash-on-valid") {
        Some(BugType::Crash)
    } else {
        None
    }
}

/// Extracts reproducers from fenced ```llvm blocks in an issue body. Blocks
/// must start with an `; opt ...` invocation line; other blocks are ignored.
pub fn extract_reproducers(body: &str) -> Vec<Reproducer> {
    let mut reps = Vec::new();
    let mut lines = body.lines().peekable();
    while let Some(line) = lines.next() {
        if line.trim() != "```llvm" {
            continue;
        }
        let mut block = Vec::new();
        for inner in lines.by_ref() {
            if inner.trim() == "```" {
                break;
            }
            block.push(inner);
        }
        let Some(first) = block.first() else { continue };
        let run = first
            .trim_start_matches(';')
            .trim()
            .trim_start_matches("RUN:")
            .trim();
        let mut toks = run.split_whitespace();
        if toks.next() != Some("opt") {
            continue;
        }
        let mut flags = Vec::new();
        for tok in toks {
            match tok {
                "<" | "|" => break,
                "%s" => continue,
                _ => flags.push(tok.to_string()),
            }
        }
        let ir: String = block[1..].iter().map(|l| format!("{l}\n")).collect();
        if let Ok(rep) = Reproducer::new(ir, flags) {
            reps.push(rep);
        }
    }
    reps
}

/// Stage one: metadata-only screening. No builds, no tool runs.
pub fn stage1_screen(cand: &FeedCandidate) -> Result<ScreenedCandidate, RejectReason> {
    for label in &cand.labels {
        if EXCLUDED_LABELS.contains(&label.to_ascii_lowercase().as_str()) {
            return Err(RejectReason::ExcludedLabel(label.clone()));
        }
    }
    let bug_type = bug_type_from_labels(&cand.labels).ok_or(RejectReason::NoBugTypeLabel)?;
    let reproducers = extract_reproducers(&cand.body);
    if reproducers.is_empty() {
        return Err(RejectReason::NoReproducerBlock);
    }
    let golden = GoldenPatch::new(
        cand.fix.patch.clone(),
        cand.fix.author_line.clone(),
        cand.fix.message.clone(),
    )
    .map_err(|e| RejectReason::BadPatch(e.to_string()))?;
    let component = Issue::component_from_labels(&cand.labels)
        .or_else(|| component_from_paths(&golden.parsed()))
        .unwrap_or_default();
    Ok(ScreenedCandidate {
        feed: cand.clone(),
        bug_type,
        reproducers,
        golden,
        component,
    })
}

/// A candidate whose bug demonstrably reproduces on a buildable base.
#[derive(Debug, Clone)]
pub struct ValidatedCandidate {
    pub screened: ScreenedCandidate,
    pub base_commit: CommitId,
    pub base_handle: BuildHandle,
    /// The subset of extracted reproducers that actually reproduce.
    pub live_reproducers: Vec<Reproducer>,
}

/// Stage two: find the first buildable ancestor and check that at least one
/// reproducer triggers the recorded bug type on it.
pub fn stage2_validate(
    tc: &Toolchain,
    sc: &ScreenedCandidate,
) -> Result<ValidatedCandidate, RejectReason> {
    let mut base = None;
    for sha in &sc.feed.ancestry {
        let Ok(commit) = CommitId::new(sha.clone()) else {
            continue;
        };
        if !tc.has_snapshot(&commit) {
            continue;
        }
        match tc.build(&commit, None) {
            Ok(BuildOutcome::Ready(handle)) => {
                base = Some((commit, handle));
                break;
            }
            Ok(BuildOutcome::Failed { .. }) => continue,
            Err(e) => return Err(RejectReason::ToolFailure(e.to_string())),
        }
    }
    let (base_commit, base_handle) = base.ok_or(RejectReason::NoBuildableBase)?;

    let mut live = Vec::new();
    let mut indeterminate = None;
    for rep in &sc.reproducers {
        match tc.probe(&base_handle, sc.bug_type, rep) {
            Ok(ReproProbe::Reproduced(ev)) if ev.matches(sc.bug_type) => {
                live.push(rep.clone());
            }
            Ok(ReproProbe::Reproduced(_)) | Ok(ReproProbe::NotReproduced) => {}
            Ok(ReproProbe::Indeterminate { reason }) => indeterminate = Some(reason),
            Err(e) => return Err(RejectReason::ToolFailure(e.to_string())),
        }
    }
    if live.is_empty() {
        return Err(match indeterminate {
            Some(reason) => RejectReason::ProbeIndeterminate(reason),
            None => RejectReason::NotReproducing,
        });
    }
    Ok(ValidatedCandidate {
        screened: sc.clone(),
        base_commit,
        base_handle,
        live_reproducers: live,
    })
}

/// Stage three: the golden patch must build on the base, stop every live
/// reproducer, and keep the component's regression tests green.
pub fn stage3_validate_golden(
    tc: &Toolchain,
    vc: &ValidatedCandidate,
) -> Result<Issue, RejectReason> {
    let sc = &vc.screened;
    let patched = match tc.build(&vc.base_commit, Some(&sc.golden.diff_text)) {
        Ok(BuildOutcome::Ready(handle)) => handle,
        Ok(BuildOutcome::Failed { .. }) => return Err(RejectReason::GoldenDoesNotBuild),
        Err(e) => return Err(RejectReason::ToolFailure(e.to_string())),
    };
    for rep in &vc.live_reproducers {
        match tc.probe(&patched, sc.bug_type, rep) {
            Ok(ReproProbe::NotReproduced) => {}
            Ok(ReproProbe::Reproduced(_)) => return Err(RejectReason::GoldenDoesNotFix),
            Ok(ReproProbe::Indeterminate { reason }) => {
                return Err(RejectReason::ProbeIndeterminate(reason))
            }
            Err(e) => return Err(RejectReason::ToolFailure(e.to_string())),
        }
    }
    if !sc.component.is_empty() {
        let scope = TestScope::Component(sc.component.clone());
        match tc.run_regression_tests(&patched, &scope) {
            Ok(summary) if !summary.all_passed() => {
                return Err(RejectReason::GoldenRegresses(summary.failures))
            }
            Ok(_) => {}
            Err(e) => return Err(RejectReason::ToolFailure(e.to_string())),
        }
    }

    let fixing_commit = CommitId::new(sc.feed.fix.sha.clone())
        .map_err(|e| RejectReason::InvalidRecord(e.to_string()))?;
    let issue = Issue {
        id: sc.feed.id,
        bug_type: sc.bug_type,
        base_commit: vc.base_commit.clone(),
        fixing_commit,
        reproducers: vc.live_reproducers.clone(),
        golden_patch: sc.golden.clone(),
        component: sc.component.clone(),
        // the fix timestamp, not the report timestamp: subsetting cuts on
        // when the knowledge entered the upstream repository
        timestamp: sc.feed.fix.date,
        title: sc.feed.title.clone(),
        body: sc.feed.body.clone(),
        labels: sc.feed.labels.clone(),
        author: sc.feed.author.clone(),
    };
    issue
        .validate()
        .map_err(|e| RejectReason::InvalidRecord(e.to_string()))?;
    Ok(issue)
}

/// Runs the whole funnel over a feed.
pub fn build_benchmark(
    tc: &Toolchain,
    feed: Vec<FeedCandidate>,
    name: &str,
) -> (BenchmarkSet, PipelineReport) {
    let mut report = PipelineReport {
        collected: feed.len() as u64,
        ..PipelineReport::default()
    };

    let (unique, mut dup_rejects) = dedupe_candidates(feed);
    report.after_dedupe = unique.len() as u64;
    report.rejections.append(&mut dup_rejects);

    let mut screened = Vec::new();
    for cand in &unique {
        match stage1_screen(cand) {
            Ok(sc) => screened.push(sc),
            Err(reason) => report.rejections.push(Rejection {
                candidate_id: cand.id,
                reason,
            }),
        }
    }
    report.stage1_accepted = screened.len() as u64;

    let mut validated = Vec::new();
    for sc in &screened {
        match stage2_validate(tc, sc) {
            Ok(vc) => validated.push(vc),
            Err(reason) => report.rejections.push(Rejection {
                candidate_id: sc.feed.id,
                reason,
            }),
        }
    }
    report.stage2_validated = validated.len() as u64;

    let mut issues = Vec::new();
    for vc in &validated {
        match stage3_validate_golden(tc, vc) {
            Ok(issue) => issues.push(issue),
            Err(reason) => report.rejections.push(Rejection {
                candidate_id: vc.screened.feed.id,
                reason,
            }),
        }
    }
    report.stage3_final = issues.len() as u64;

    let created_at = issues
        .iter()
        .map(|i| i.timestamp)
        .max()
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    let set = BenchmarkSet {
        name: name.to_string(),
        issues,
        created_at,
    };
    (set, report)
}
