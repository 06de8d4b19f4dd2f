//! Unified-diff structure, edit statistics, and localization scoring.
//!
//! A parsed [`UnifiedDiff`] is the common currency between benchmark
//! construction (golden patches), the agent workspace (previews and submitted
//! patches), and evaluation (localization recall). Parsing keeps hunk bodies
//! byte-faithful; rendering normalizes headers, so parse-render-parse is a
//! fixpoint.

mod generate;
mod index;
mod parse;

pub use generate::{
    apply_diff, apply_diff_to_tree, apply_file_patch, diff_file_contents, diff_trees,
    ApplyError,
};
pub use index::{function_name_from_heading, scan_source, FunctionIndex, FunctionSpan};
pub use parse::{parse_unified_diff, render_unified_diff};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Context,
    Removed,
    Added,
}

/// One `@@`-delimited region of a file patch. Line counts are redundant with
/// `lines` and checked at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u64,
    pub old_len: u64,
    pub new_start: u64,
    pub new_len: u64,
    pub section_heading: Option<String>,
    pub lines: Vec<(LineKind, String)>,
    /// Indices into `lines` after which the source carried a
    /// `\ No newline at end of file` marker.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub no_newline_after: Vec<usize>,
}

impl Hunk {
    /// Lines counted against the old file: context + removed.
    pub fn counted_old(&self) -> u64 {
        self.lines
            .iter()
            .filter(|(k, _)| matches!(k, LineKind::Context | LineKind::Removed))
            .count() as u64
    }

    /// Lines counted against the new file: context + added.
    pub fn counted_new(&self) -> u64 {
        self.lines
            .iter()
            .filter(|(k, _)| matches!(k, LineKind::Context | LineKind::Added))
            .count() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePatch {
    pub old_path: String,
    pub new_path: String,
    pub hunks: Vec<Hunk>,
}

pub const DEV_NULL: &str = "/dev/null";

impl FilePatch {
    pub fn is_creation(&self) -> bool {
        self.old_path == DEV_NULL
    }

    pub fn is_deletion(&self) -> bool {
        self.new_path == DEV_NULL
    }

    /// The path the edit lands on: the new path, or the old one for deletions.
    pub fn effective_path(&self) -> &str {
        if self.is_deletion() {
            &self.old_path
        } else {
            &self.new_path
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UnifiedDiff {
    pub files: Vec<FilePatch>,
}

impl UnifiedDiff {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("malformed diff header at line {0}")]
    MalformedHeader(usize),
    #[error("hunk body does not match declared lengths in {file}, hunk {hunk_index}")]
    HunkArithmeticMismatch { file: String, hunk_index: usize },
}

/// Size of a patch: total changed lines, distinct touched functions, distinct
/// touched files. `funcs` only counts changes the function index (or hunk
/// heading) could attribute; the rest are reported in `diagnostics`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStats {
    pub lines: u64,
    pub funcs: u64,
    pub files: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// Counts added plus removed lines, distinct files, and distinct
/// (file, function) pairs owning at least one changed line.
///
/// Changed lines are located in old-file coordinates: removed lines at their
/// own position, added lines at the position they are inserted. Attribution
/// falls back to the hunk's section heading when the index has no span.
pub fn compute_edit_stats(diff: &UnifiedDiff, index: &FunctionIndex) -> EditStats {
    let mut lines = 0u64;
    let mut files = BTreeSet::new();
    let mut funcs = BTreeSet::new();
    let mut diagnostics = Vec::new();

    for fp in &diff.files {
        let path = fp.effective_path().to_string();
        files.insert(path.clone());
        for (hunk_index, hunk) in fp.hunks.iter().enumerate() {
            let mut old_line = hunk.old_start;
            let mut changed = 0u64;
            let mut attributed = false;
            for (kind, _) in &hunk.lines {
                match kind {
                    LineKind::Context => old_line += 1,
                    LineKind::Removed | LineKind::Added => {
                        changed += 1;
                        let at = old_line;
                        if let Some(name) =
                            index.resolve(&path, at, hunk.section_heading.as_deref())
                        {
                            funcs.insert((path.clone(), name));
                            attributed = true;
                        }
                        if matches!(kind, LineKind::Removed) {
                            old_line += 1;
                        }
                    }
                }
            }
            lines += changed;
            if changed > 0 && !attributed {
                diagnostics.push(format!(
                    "{path}: hunk {hunk_index} (@@ -{},{}) not attributable to a function",
                    hunk.old_start, hunk.old_len
                ));
            }
        }
    }

    EditStats {
        lines,
        funcs: funcs.len() as u64,
        files: files.len() as u64,
        diagnostics,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallLevel {
    File,
    Function,
}

/// Recall of a candidate patch against the golden one, at both granularities.
/// `func_recall` is `None` when no golden change could be attributed to a
/// function; such pairs are excluded from mean aggregation and counted apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub file_recall: f64,
    pub func_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecallError {
    #[error("golden diff has no edited entries at the requested level")]
    EmptyGolden,
}

fn edited_files(diff: &UnifiedDiff) -> BTreeSet<String> {
    diff.files
        .iter()
        .filter(|fp| {
            fp.hunks
                .iter()
                .any(|h| h.lines.iter().any(|(k, _)| !matches!(k, LineKind::Context)))
        })
        .map(|fp| fp.effective_path().to_string())
        .collect()
}

fn edited_funcs(diff: &UnifiedDiff, index: &FunctionIndex) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for fp in &diff.files {
        let path = fp.effective_path().to_string();
        for hunk in &fp.hunks {
            let mut old_line = hunk.old_start;
            for (kind, _) in &hunk.lines {
                match kind {
                    LineKind::Context => old_line += 1,
                    LineKind::Removed | LineKind::Added => {
                        if let Some(name) =
                            index.resolve(&path, old_line, hunk.section_heading.as_deref())
                        {
                            out.insert((path.clone(), name));
                        }
                        if matches!(kind, LineKind::Removed) {
                            old_line += 1;
                        }
                    }
                }
            }
        }
    }
    out
}

/// |candidate ∩ golden| / |golden| over edited files or functions.
pub fn localization_recall(
    candidate: &UnifiedDiff,
    golden: &UnifiedDiff,
    index: &FunctionIndex,
    level: RecallLevel,
) -> Result<f64, RecallError> {
    match level {
        RecallLevel::File => {
            let gold = edited_files(golden);
            if gold.is_empty() {
                return Err(RecallError::EmptyGolden);
            }
            let cand = edited_files(candidate);
            Ok(cand.intersection(&gold).count() as f64 / gold.len() as f64)
        }
        RecallLevel::Function => {
            let gold = edited_funcs(golden, index);
            if gold.is_empty() {
                return Err(RecallError::EmptyGolden);
            }
            let cand = edited_funcs(candidate, index);
            Ok(cand.intersection(&gold).count() as f64 / gold.len() as f64)
        }
    }
}

/// Both recall levels in one report; see [`localization_recall`].
pub fn localization_report(
    candidate: &UnifiedDiff,
    golden: &UnifiedDiff,
    index: &FunctionIndex,
) -> Result<LocalizationReport, RecallError> {
    let file_recall = localization_recall(candidate, golden, index, RecallLevel::File)?;
    let func_recall = match localization_recall(candidate, golden, index, RecallLevel::Function) {
        Ok(r) => Some(r),
        Err(RecallError::EmptyGolden) => None,
    };
    Ok(LocalizationReport {
        file_recall,
        func_recall,
    })
}
