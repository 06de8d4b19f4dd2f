//! Stage four: held-out validation of the candidate patch, no model turns.
//!
//! The workspace the agent edited is gone; only its patch text survives.
//! Validation re-applies that patch to a pristine copy of the base, rebuilds,
//! re-probes every reproducer, and widens the regression scope to the whole
//! middle end. It also measures the candidate against the human fix: edit
//! size and localization recall at file and function granularity.

use std::collections::BTreeMap;

use walkdir::WalkDir;

use crate::agent_tools::render_evidence;
use crate::bench_model::Issue;
use crate::diffscope::{
    apply_diff_to_tree, compute_edit_stats, localization_report, parse_unified_diff, EditStats,
    FunctionIndex, LocalizationReport, UnifiedDiff,
};
use crate::toolchain::{BuildOutcome, ReproProbe, TestScope, Toolchain};

use super::{FailureKind, SessionError};

/// Terminal verdict of held-out validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationOutcome {
    Passed,
    /// The patch does not parse or does not apply to a pristine base tree.
    PatchRejected { detail: String },
    /// The patched tree does not build.
    BuildFailed { log: String },
    /// A reproducer still triggers the bug (or gave no verdict).
    BugPersists { detail: String },
    /// The widened regression scope has failures.
    ExtendedTestsFailed { failures: Vec<String> },
}

/// Full validation report: verdict plus the differential measurements
/// against the golden patch.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub outcome: ValidationOutcome,
    /// Size of the candidate patch; `None` when it did not parse.
    pub candidate_stats: Option<EditStats>,
    /// Size of the human fix.
    pub golden_stats: EditStats,
    /// Candidate-vs-golden recall; `None` when the candidate did not parse.
    pub localization: Option<LocalizationReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, ValidationOutcome::Passed)
    }

    /// The failure category this verdict maps to, if any. A patch that
    /// wrecks the tree (unapplyable, unbuildable) is distinguished from one
    /// that builds but fails held-out checks.
    pub fn failure_kind(&self) -> Option<FailureKind> {
        match &self.outcome {
            ValidationOutcome::Passed => None,
            ValidationOutcome::PatchRejected { .. } | ValidationOutcome::BuildFailed { .. } => {
                Some(FailureKind::RuinLlvm)
            }
            ValidationOutcome::BugPersists { .. }
            | ValidationOutcome::ExtendedTestsFailed { .. } => Some(FailureKind::PostValError),
        }
    }

    pub fn summary(&self) -> String {
        let verdict = match &self.outcome {
            ValidationOutcome::Passed => "passed".to_string(),
            ValidationOutcome::PatchRejected { detail } => {
                format!("patch rejected: {detail}")
            }
            ValidationOutcome::BuildFailed { .. } => "patched tree does not build".to_string(),
            ValidationOutcome::BugPersists { detail } => format!("bug persists: {detail}"),
            ValidationOutcome::ExtendedTestsFailed { failures } => {
                format!("{} extended regression test(s) fail", failures.len())
            }
        };
        let mut out = format!("validation: {verdict}\n");
        if let Some(stats) = &self.candidate_stats {
            out.push_str(&format!(
                "candidate size: {} lines, {} function(s), {} file(s)\n",
                stats.lines, stats.funcs, stats.files
            ));
        }
        out.push_str(&format!(
            "golden size: {} lines, {} function(s), {} file(s)\n",
            self.golden_stats.lines, self.golden_stats.funcs, self.golden_stats.files
        ));
        if let Some(loc) = &self.localization {
            out.push_str(&format!("file recall vs golden: {:.2}\n", loc.file_recall));
            match loc.func_recall {
                Some(r) => out.push_str(&format!("function recall vs golden: {r:.2}\n")),
                None => out.push_str("function recall vs golden: not attributable\n"),
            }
        }
        out
    }
}

/// Loads a snapshot directory into a path-keyed tree, mirroring what the
/// build step will do, so patch application is checked against exactly the
/// content the build sees.
fn load_tree(tc: &Toolchain, issue: &Issue) -> Result<BTreeMap<String, String>, SessionError> {
    let root = tc.snapshot_dir(&issue.base_commit);
    if !root.is_dir() {
        return Err(SessionError::Setup(format!(
            "no source snapshot for commit {}",
            issue.base_commit
        )));
    }
    let mut tree = BTreeMap::new();
    for entry in WalkDir::new(&root).sort_by_file_name() {
        let entry = entry.map_err(|e| SessionError::Toolchain(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(&root)
            .map_err(|e| SessionError::Toolchain(e.to_string()))?
            .to_string_lossy()
            .replace('\\', "/");
        if let Ok(text) = std::fs::read_to_string(entry.path()) {
            tree.insert(rel, text);
        }
    }
    Ok(tree)
}

/// Validates one candidate patch against a pristine base. Infrastructure
/// failures (missing snapshots, replay gaps) surface as errors; everything
/// the patch itself causes lands in the report.
pub fn validate_candidate(
    tc: &Toolchain,
    issue: &Issue,
    patch_text: &str,
) -> Result<ValidationReport, SessionError> {
    let index = FunctionIndex::build(&tc.snapshot_dir(&issue.base_commit))
        .map_err(|e| SessionError::Toolchain(e.to_string()))?;
    let golden = issue.golden_patch.parsed();
    let golden_stats = compute_edit_stats(&golden, &index);

    let finish = |outcome: ValidationOutcome, candidate: Option<&UnifiedDiff>| ValidationReport {
        outcome,
        candidate_stats: candidate.map(|c| compute_edit_stats(c, &index)),
        golden_stats: golden_stats.clone(),
        localization: candidate.and_then(|c| localization_report(c, &golden, &index).ok()),
    };

    let candidate = match parse_unified_diff(patch_text) {
        Ok(diff) if diff.is_empty() => {
            return Ok(finish(
                ValidationOutcome::PatchRejected {
                    detail: "the patch is empty".to_string(),
                },
                None,
            ))
        }
        Ok(diff) => diff,
        Err(e) => {
            return Ok(finish(
                ValidationOutcome::PatchRejected {
                    detail: format!("the patch does not parse: {e}"),
                },
                None,
            ))
        }
    };

    // Apply to a fresh tree first: a patch that only applied because of the
    // agent's leftover workspace state must fail here.
    let mut tree = load_tree(tc, issue)?;
    if let Err(e) = apply_diff_to_tree(&candidate, &mut tree) {
        return Ok(finish(
            ValidationOutcome::PatchRejected {
                detail: format!("the patch does not apply to a pristine base: {e}"),
            },
            Some(&candidate),
        ));
    }

    let outcome = tc
        .build(&issue.base_commit, Some(patch_text))
        .map_err(|e| SessionError::Toolchain(e.to_string()))?;
    let handle = match outcome {
        BuildOutcome::Ready(h) => h,
        BuildOutcome::Failed { log } => {
            return Ok(finish(
                ValidationOutcome::BuildFailed { log },
                Some(&candidate),
            ))
        }
    };

    for (i, rep) in issue.reproducers.iter().enumerate() {
        let probe = tc
            .probe(&handle, issue.bug_type, rep)
            .map_err(|e| SessionError::Toolchain(e.to_string()))?;
        match probe {
            ReproProbe::NotReproduced => {}
            ReproProbe::Reproduced(evidence) => {
                return Ok(finish(
                    ValidationOutcome::BugPersists {
                        detail: format!(
                            "reproducer {} still triggers the bug:\n{}",
                            i + 1,
                            render_evidence(&evidence)
                        ),
                    },
                    Some(&candidate),
                ))
            }
            ReproProbe::Indeterminate { reason } => {
                return Ok(finish(
                    ValidationOutcome::BugPersists {
                        detail: format!("reproducer {} gave no verdict: {reason}", i + 1),
                    },
                    Some(&candidate),
                ))
            }
        }
    }

    let summary = tc
        .run_regression_tests(&handle, &TestScope::AllMiddleEnd)
        .map_err(|e| SessionError::Toolchain(e.to_string()))?;
    if !summary.all_passed() {
        return Ok(finish(
            ValidationOutcome::ExtendedTestsFailed {
                failures: summary.failures.clone(),
            },
            Some(&candidate),
        ));
    }

    Ok(finish(ValidationOutcome::Passed, Some(&candidate)))
}
