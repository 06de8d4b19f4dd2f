//! Benchmark domain model: bugs, reproducers, golden patches, issues, splits,
//! and benchmark sets, plus the textual record format they are stored in.
//!
//! The model enforces its invariants at construction/validation time so the
//! rest of the crate can treat a loaded [`Issue`] as well-formed.

mod record;

pub use record::{parse_issue_record, render_issue_record, RecordError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffscope::{self, EditStats, UnifiedDiff};

/// Repository roots a golden patch is allowed to touch.
pub const DEFAULT_CODE_ROOTS: &[&str] = &["llvm/lib/", "llvm/include/"];

/// Labels that disqualify an issue from the benchmark.
pub const EXCLUDED_LABELS: &[&str] = &["wontfix", "duplicate", "invalid"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugType {
    Crash,
    Miscompilation,
}

impl fmt::Display for BugType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BugType::Crash => write!(f, "Crash"),
            BugType::Miscompilation => write!(f, "Miscompilation"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("commit id must be 40 hex characters, got {0:?}")]
    InvalidCommit(String),
    #[error("reproducer IR text is empty")]
    EmptyIr,
    #[error("opt flags carry no pass selection: {0:?}")]
    NoPassSelection(Vec<String>),
    #[error("golden patch does not parse: {0}")]
    PatchParse(#[from] diffscope::DiffError),
    #[error("golden patch touches {0}, outside the code roots")]
    PatchOutsideRoots(String),
    #[error("issue id must be positive")]
    NonPositiveId,
    #[error("issue has no reproducers")]
    EmptyReproducers,
    #[error("base and fixing commit are identical")]
    SameCommits,
    #[error("excluded label present: {0}")]
    ExcludedLabel(String),
    #[error("duplicate issue id in set: {0}")]
    DuplicateId(u64),
    #[error("live subset is empty for the given cutoff")]
    EmptyResult,
    #[error("edit stats missing for issue {0}")]
    CoverageGap(u64),
}

/// A 40-character lowercase hex commit id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CommitId(String);

impl CommitId {
    pub fn new(s: impl Into<String>) -> Result<Self, ModelError> {
        let s = s.into();
        if s.len() == 40 && s.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
            Ok(CommitId(s))
        } else {
            Err(ModelError::InvalidCommit(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Abbreviated id for logs and directory names.
    pub fn short(&self) -> &str {
        &self.0[..12]
    }
}

impl TryFrom<String> for CommitId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, ModelError> {
        CommitId::new(s)
    }
}

impl From<CommitId> for String {
    fn from(c: CommitId) -> String {
        c.0
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn is_pass_selection_token(tok: &str) -> bool {
    tok.contains("passes=") || matches!(tok, "-O1" | "-O2" | "-O3" | "-Os" | "-Oz")
}

/// IR input plus the optimizer invocation that triggers the bug.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reproducer {
    pub ir_text: String,
    pub opt_flags: Vec<String>,
}

impl Reproducer {
    pub fn new(ir_text: impl Into<String>, opt_flags: Vec<String>) -> Result<Self, ModelError> {
        let ir_text = ir_text.into();
        if ir_text.trim().is_empty() {
            return Err(ModelError::EmptyIr);
        }
        if !opt_flags.iter().any(|t| is_pass_selection_token(t)) {
            return Err(ModelError::NoPassSelection(opt_flags));
        }
        Ok(Reproducer { ir_text, opt_flags })
    }

    /// The `; opt ...` line this reproducer canonically renders with.
    pub fn run_line(&self) -> String {
        format!("; opt {} < %s", self.opt_flags.join(" "))
    }
}

/// The human fix: a unified diff restricted to the code roots, with the
/// commit's author line and message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenPatch {
    pub diff_text: String,
    pub author_line: String,
    pub message: String,
}

impl GoldenPatch {
    pub fn new(
        diff_text: impl Into<String>,
        author_line: impl Into<String>,
        message: impl Into<String>,
    ) -> Result<Self, ModelError> {
        Self::with_roots(diff_text, author_line, message, DEFAULT_CODE_ROOTS)
    }

    pub fn with_roots(
        diff_text: impl Into<String>,
        author_line: impl Into<String>,
        message: impl Into<String>,
        roots: &[&str],
    ) -> Result<Self, ModelError> {
        let diff_text = diff_text.into();
        let parsed = diffscope::parse_unified_diff(&diff_text)?;
        for fp in &parsed.files {
            let path = fp.effective_path();
            if !roots.iter().any(|r| path.starts_with(r)) {
                return Err(ModelError::PatchOutsideRoots(path.to_string()));
            }
        }
        let mut message = message.into();
        if !message.is_empty() && !message.ends_with('\n') {
            message.push('\n');
        }
        Ok(GoldenPatch {
            diff_text,
            author_line: author_line.into(),
            message,
        })
    }

    pub fn parsed(&self) -> UnifiedDiff {
        diffscope::parse_unified_diff(&self.diff_text)
            .expect("diff_text was validated at construction")
    }
}

/// One benchmark entry: a reported optimizer bug with its validated
/// reproducers and the upstream fix.
///
/// `timestamp` is the fix timestamp (author date of the fixing commit), which
/// is what live-subset filtering cuts on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub id: u64,
    pub bug_type: BugType,
    pub base_commit: CommitId,
    pub fixing_commit: CommitId,
    pub reproducers: Vec<Reproducer>,
    pub golden_patch: GoldenPatch,
    pub component: String,
    pub timestamp: DateTime<Utc>,
    pub title: String,
    pub body: String,
    pub labels: Vec<String>,
    pub author: String,
}

impl Issue {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id == 0 {
            return Err(ModelError::NonPositiveId);
        }
        if self.reproducers.is_empty() {
            return Err(ModelError::EmptyReproducers);
        }
        if self.base_commit == self.fixing_commit {
            return Err(ModelError::SameCommits);
        }
        for label in &self.labels {
            let l = label.to_ascii_lowercase();
            if EXCLUDED_LABELS.contains(&l.as_str()) {
                return Err(ModelError::ExcludedLabel(label.clone()));
            }
        }
        Ok(())
    }

    /// Component name derivable from `llvm:`-prefixed labels, e.g.
    /// `llvm:SLPVectorizer`.
    pub fn component_from_labels(labels: &[String]) -> Option<String> {
        labels
            .iter()
            .find_map(|l| l.strip_prefix("llvm:"))
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Split {
    Easy,
    Medium,
    Hard,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Easy => write!(f, "easy"),
            Split::Medium => write!(f, "medium"),
            Split::Hard => write!(f, "hard"),
        }
    }
}

/// Difficulty from golden-patch shape: more than one file is hard, one file
/// across several functions is medium, the rest easy.
pub fn classify_split(stats: &EditStats) -> Split {
    if stats.files > 1 {
        Split::Hard
    } else if stats.funcs > 1 {
        Split::Medium
    } else {
        Split::Easy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub name: String,
    pub issues: Vec<Issue>,
    pub created_at: DateTime<Utc>,
}

impl BenchmarkSet {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for issue in &self.issues {
            issue.validate()?;
            if !seen.insert(issue.id) {
                return Err(ModelError::DuplicateId(issue.id));
            }
        }
        Ok(())
    }

    pub fn issue(&self, id: u64) -> Option<&Issue> {
        self.issues.iter().find(|i| i.id == id)
    }
}

/// Issues whose fix timestamp is at or after `cutoff`. A cutoff before the
/// oldest issue returns the identical set; a cutoff after the newest errors.
pub fn select_live_subset(
    set: &BenchmarkSet,
    cutoff: DateTime<Utc>,
) -> Result<BenchmarkSet, ModelError> {
    let issues: Vec<Issue> = set
        .issues
        .iter()
        .filter(|i| i.timestamp >= cutoff)
        .cloned()
        .collect();
    if issues.is_empty() {
        return Err(ModelError::EmptyResult);
    }
    Ok(BenchmarkSet {
        name: set.name.clone(),
        issues,
        created_at: set.created_at,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub bugs: u64,
    pub crashes: u64,
    pub miscompilations: u64,
}

/// Descriptor table for a benchmark set. Averages are `None` for an empty
/// set and render as an em-free "—" sentinel in text, `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetStats {
    pub total: SplitCounts,
    pub by_split: BTreeMap<Split, SplitCounts>,
    pub avg_reproducers: Option<f64>,
    pub avg_regression_tests: Option<f64>,
    pub avg_edited_lines: Option<f64>,
    pub avg_edited_funcs: Option<f64>,
    pub avg_edited_files: Option<f64>,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl SetStats {
    /// Copy with averages rounded to one decimal, the emission precision.
    pub fn rounded(&self) -> SetStats {
        SetStats {
            total: self.total,
            by_split: self.by_split.clone(),
            avg_reproducers: self.avg_reproducers.map(round1),
            avg_regression_tests: self.avg_regression_tests.map(round1),
            avg_edited_lines: self.avg_edited_lines.map(round1),
            avg_edited_funcs: self.avg_edited_funcs.map(round1),
            avg_edited_files: self.avg_edited_files.map(round1),
        }
    }

    pub fn to_text(&self) -> String {
        let fmt_avg = |v: Option<f64>| match v {
            Some(x) => format!("{:.1}", x),
            None => "\u{2014}".to_string(),
        };
        let mut out = String::new();
        out.push_str(&format!(
            "bugs: {} ({} crash / {} miscompilation)\n",
            self.total.bugs, self.total.crashes, self.total.miscompilations
        ));
        for (split, c) in &self.by_split {
            out.push_str(&format!(
                "  {split}: {} ({} / {})\n",
                c.bugs, c.crashes, c.miscompilations
            ));
        }
        out.push_str(&format!(
            "avg reproducers/issue:     {}\n",
            fmt_avg(self.avg_reproducers)
        ));
        out.push_str(&format!(
            "avg regression tests:      {}\n",
            fmt_avg(self.avg_regression_tests)
        ));
        out.push_str(&format!(
            "avg edited lines:          {}\n",
            fmt_avg(self.avg_edited_lines)
        ));
        out.push_str(&format!(
            "avg edited functions:      {}\n",
            fmt_avg(self.avg_edited_funcs)
        ));
        out.push_str(&format!(
            "avg edited files:          {}\n",
            fmt_avg(self.avg_edited_files)
        ));
        out
    }
}

/// Counts and averages over a set. `edit_stats` must cover every issue;
/// `reg_tests` (regression tests available per issue) may be absent, which
/// leaves that average unset.
pub fn compute_set_stats(
    set: &BenchmarkSet,
    edit_stats: &BTreeMap<u64, EditStats>,
    reg_tests: Option<&BTreeMap<u64, u64>>,
) -> Result<SetStats, ModelError> {
    let mut total = SplitCounts::default();
    let mut by_split: BTreeMap<Split, SplitCounts> = BTreeMap::new();
    let mut sum_reps = 0u64;
    let mut sum_regs = 0u64;
    let mut sum_lines = 0u64;
    let mut sum_funcs = 0u64;
    let mut sum_files = 0u64;

    for issue in &set.issues {
        let stats = edit_stats
            .get(&issue.id)
            .ok_or(ModelError::CoverageGap(issue.id))?;
        if let Some(regs) = reg_tests {
            sum_regs += *regs.get(&issue.id).ok_or(ModelError::CoverageGap(issue.id))?;
        }
        let split = classify_split(stats);
        let bucket = by_split.entry(split).or_default();
        total.bugs += 1;
        bucket.bugs += 1;
        match issue.bug_type {
            BugType::Crash => {
                total.crashes += 1;
                bucket.crashes += 1;
            }
            BugType::Miscompilation => {
                total.miscompilations += 1;
                bucket.miscompilations += 1;
            }
        }
        sum_reps += issue.reproducers.len() as u64;
        sum_lines += stats.lines;
        sum_funcs += stats.funcs;
        sum_files += stats.files;
    }

    let n = set.issues.len() as f64;
    let avg = |sum: u64| if n > 0.0 { Some(sum as f64 / n) } else { None };
    Ok(SetStats {
        total,
        by_split,
        avg_reproducers: avg(sum_reps),
        avg_regression_tests: if reg_tests.is_some() { avg(sum_regs) } else { None },
        avg_edited_lines: avg(sum_lines),
        avg_edited_funcs: avg(sum_funcs),
        avg_edited_files: avg(sum_files),
    })
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad index.json: {0}")]
    Index(#[from] serde_json::Error),
    #[error("record {path}: {source}")]
    Record {
        path: String,
        #[source]
        source: RecordError,
    },
    #[error("set invalid: {0}")]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestIndex {
    version: u32,
    name: String,
    created_at: DateTime<Utc>,
    issue_ids: Vec<u64>,
    conventions: BTreeMap<String, String>,
}

fn manifest_conventions() -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "live_filter_timestamp".to_string(),
            "fixing-commit-author-date".to_string(),
        ),
        (
            "edited_lines_metric".to_string(),
            "added-plus-removed".to_string(),
        ),
        (
            "function_granularity".to_string(),
            "per-file-function".to_string(),
        ),
    ])
}

/// Writes `index.json` plus one record file per issue under `dir/records/`.
pub fn write_manifest(dir: &Path, set: &BenchmarkSet) -> Result<(), ManifestError> {
    set.validate()?;
    let records = dir.join("records");
    fs::create_dir_all(&records)?;
    let index = ManifestIndex {
        version: 1,
        name: set.name.clone(),
        created_at: set.created_at,
        issue_ids: set.issues.iter().map(|i| i.id).collect(),
        conventions: manifest_conventions(),
    };
    fs::write(
        dir.join("index.json"),
        serde_json::to_string_pretty(&index)? + "\n",
    )?;
    for issue in &set.issues {
        fs::write(
            records.join(format!("{}.rec", issue.id)),
            render_issue_record(issue),
        )?;
    }
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<BenchmarkSet, ManifestError> {
    let index: ManifestIndex =
        serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
    let mut issues = Vec::with_capacity(index.issue_ids.len());
    for id in &index.issue_ids {
        let path = dir.join("records").join(format!("{id}.rec"));
        let text = fs::read_to_string(&path)?;
        let issue = parse_issue_record(&text).map_err(|source| ManifestError::Record {
            path: path.display().to_string(),
            source,
        })?;
        issues.push(issue);
    }
    let set = BenchmarkSet {
        name: index.name,
        issues,
        created_at: index.created_at,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests;
