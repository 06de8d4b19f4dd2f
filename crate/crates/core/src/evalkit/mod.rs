//! Scoring for completed repair sessions: pass@1 resolution, review-adjusted
//! rates, dollar cost, failure and tool-call distributions, the token-limit
//! sweep, and the one-sided paired comparison between two agents.
//!
//! Metric functions are pure over [`RunRecord`] slices; the only concurrent
//! piece is [`run_benchmark`], which fans issues out to a worker pool with
//! nothing shared mutably between sessions.

mod config;
mod report;
mod runner;

pub use config::{ConfigError, HarnessConfig, ENV_PREFIX};
pub use report::{emit_report, Report, ReportFormat};
pub use runner::{record_from_session, run_benchmark, run_benchmark_observed, AgentKind, RunConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::agent_core::FailureKind;
use crate::bench_model::{BugType, Split};

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

/// Token accounting for one session. `total` is always `input + output`;
/// `cached` counts the portion of `input` served from a prompt cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
    pub cached: u64,
    pub total: u64,
}

impl TokenUsage {
    pub fn new(input: u64, output: u64, cached: u64) -> Self {
        TokenUsage {
            input,
            output,
            cached,
            total: input + output,
        }
    }
}

/// Calls and error results for one tool across one session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ToolUsage {
    pub calls: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// Held-out validation accepted the candidate patch.
    AcceptedPatch,
    /// Anything else; `failure_kind` names the category.
    Failure,
}

/// One benchmark session, as persisted for scoring. The `bug_type`, `split`,
/// and recall fields are metadata the report tables draw on; they are
/// optional so that hand-assembled or externally produced records stay
/// valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub issue_id: u64,
    pub agent: String,
    pub model: String,
    pub outcome: RunOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_kind: Option<FailureKind>,
    pub tokens: TokenUsage,
    pub rounds: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tool_counts: BTreeMap<String, ToolUsage>,
    pub wall_time_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dollars: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_type: Option<BugType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub func_recall: Option<f64>,
}

impl RunRecord {
    pub fn accepted(&self) -> bool {
        self.outcome == RunOutcome::AcceptedPatch
    }

    /// The record's internal invariants: a failure category accompanies
    /// exactly the failure outcome, and the token total adds up.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let fail = |msg: &str| MetricsError::BadRecord(self.issue_id, msg.to_string());
        match self.outcome {
            RunOutcome::AcceptedPatch if self.failure_kind.is_some() => {
                return Err(fail("accepted records carry no failure kind"))
            }
            RunOutcome::Failure if self.failure_kind.is_none() => {
                return Err(fail("failed records need a failure kind"))
            }
            _ => {}
        }
        if self.tokens.total != self.tokens.input + self.tokens.output {
            return Err(fail("token total must equal input + output"));
        }
        if self.tokens.cached > self.tokens.input {
            return Err(fail("cached tokens cannot exceed input tokens"));
        }
        Ok(())
    }
}

/// A reviewer's judgement of one accepted patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewLabel {
    pub issue_id: u64,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    /// The patch genuinely fixes the root cause.
    Correct,
    /// The patch silences the signal by weakening or removing a check.
    ChangeAssert,
    /// The patch edits code unrelated to the defect.
    WrongLocalization,
    /// Right place, wrong repair.
    WrongFix,
}

/// Paired pass/fail counts for two agents over a common issue set. The
/// first index is the baseline, the second the treatment: `n01` counts
/// issues only the treatment resolved, `n10` issues only the baseline did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedMatrix {
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
    pub n00: u64,
}

impl PairedMatrix {
    pub fn total(&self) -> u64 {
        self.n01 + self.n10 + self.n11 + self.n00
    }

    /// Builds the matrix from two record sets, pairing them on issue id.
    /// Issues present in only one set are dropped.
    pub fn from_records(baseline: &[RunRecord], treatment: &[RunRecord]) -> Self {
        let treated: BTreeMap<u64, bool> =
            treatment.iter().map(|r| (r.issue_id, r.accepted())).collect();
        let mut m = PairedMatrix {
            n01: 0,
            n10: 0,
            n11: 0,
            n00: 0,
        };
        for b in baseline {
            let Some(&t) = treated.get(&b.issue_id) else {
                continue;
            };
            match (b.accepted(), t) {
                (false, true) => m.n01 += 1,
                (true, false) => m.n10 += 1,
                (true, true) => m.n11 += 1,
                (false, false) => m.n00 += 1,
            }
        }
        m
    }
}

/// Per-million-token prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceCard {
    pub input: f64,
    pub output: f64,
    pub cached_input: f64,
}

impl PriceCard {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.input < 0.0 || self.output < 0.0 || self.cached_input < 0.0 {
            return Err(MetricsError::NegativeRate);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no records selected")]
    EmptySelection,
    #[error("accepted issue {0} has no review label")]
    MissingLabel(u64),
    #[error("n01 + n10 = 0: the paired test is undefined")]
    DegenerateMatrix,
    #[error("cached tokens exceed input tokens")]
    NegativeTokens,
    #[error("price card rates must be non-negative")]
    NegativeRate,
    #[error("no failed records")]
    NoFailures,
    #[error("record for issue {0} is inconsistent: {1}")]
    BadRecord(u64, String),
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Fraction of records whose patch was accepted (pass@1: one sample per
/// issue). Filter with iterator adapters before calling; an empty selection
/// is an error rather than a silent zero.
pub fn resolution_rate<'a, I>(records: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = &'a RunRecord>,
{
    let mut total = 0u64;
    let mut accepted = 0u64;
    for r in records {
        total += 1;
        if r.accepted() {
            accepted += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::EmptySelection);
    }
    Ok(accepted as f64 / total as f64)
}

/// The review-adjusted resolution rate and its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenuineRate {
    /// Correct patches over all issues.
    pub genuine_rate: f64,
    /// Correct patches over accepted patches.
    pub correct_share: f64,
    pub total: u64,
    pub accepted: u64,
    pub correct: u64,
}

/// Counts an issue as truly resolved only when its accepted patch is
/// labeled [`Verdict::Correct`]. Every accepted record must carry a label;
/// labels for other issues are ignored.
pub fn genuine_resolution_rate(
    records: &[RunRecord],
    labels: &[ReviewLabel],
) -> Result<GenuineRate, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptySelection);
    }
    let by_issue: BTreeMap<u64, &ReviewLabel> =
        labels.iter().map(|l| (l.issue_id, l)).collect();
    let mut accepted = 0u64;
    let mut correct = 0u64;
    for r in records {
        if !r.accepted() {
            continue;
        }
        accepted += 1;
        let label = by_issue
            .get(&r.issue_id)
            .ok_or(MetricsError::MissingLabel(r.issue_id))?;
        if label.verdict == Verdict::Correct {
            correct += 1;
        }
    }
    let total = records.len() as u64;
    Ok(GenuineRate {
        genuine_rate: correct as f64 / total as f64,
        correct_share: if accepted == 0 {
            0.0
        } else {
            correct as f64 / accepted as f64
        },
        total,
        accepted,
        correct,
    })
}

pub const MCNEMAR_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McNemarResult {
    pub chi2: f64,
    pub p: f64,
    pub significant: bool,
}

/// One-sided McNemar test with continuity correction over the discordant
/// counts: chi2 = (|n01 - n10| - 1)^2 / (n01 + n10), and the one-sided p is
/// half the df-1 chi-square upper tail when the treatment leads (n01 > n10),
/// else one minus that half-tail.
pub fn mcnemar_one_sided(m: &PairedMatrix) -> Result<McNemarResult, MetricsError> {
    if m.n01 + m.n10 == 0 {
        return Err(MetricsError::DegenerateMatrix);
    }
    let b = m.n01 as f64;
    let c = m.n10 as f64;
    let chi2 = ((b - c).abs() - 1.0).powi(2) / (b + c);
    // For X ~ chi-square(1), P(X >= x) = erfc(sqrt(x / 2)).
    let upper = erfc((chi2 / 2.0).sqrt());
    let p = if m.n01 > m.n10 {
        0.5 * upper
    } else {
        1.0 - 0.5 * upper
    };
    Ok(McNemarResult {
        chi2,
        p,
        significant: p < MCNEMAR_ALPHA,
    })
}

/// Dollar cost of one session's tokens under a price card: non-cached input
/// at the input rate, cached input at the cached rate, output at the output
/// rate, all per million tokens.
pub fn compute_cost(tokens: &TokenUsage, card: &PriceCard) -> Result<f64, MetricsError> {
    card.validate()?;
    if tokens.cached > tokens.input {
        return Err(MetricsError::NegativeTokens);
    }
    let fresh = (tokens.input - tokens.cached) as f64;
    Ok(
        (fresh * card.input
            + tokens.cached as f64 * card.cached_input
            + tokens.output as f64 * card.output)
            / 1e6,
    )
}

/// Distribution of failure categories over the failed records; fractions
/// sum to one.
pub fn failure_distribution(
    records: &[RunRecord],
) -> Result<BTreeMap<FailureKind, f64>, MetricsError> {
    let mut counts: BTreeMap<FailureKind, u64> = BTreeMap::new();
    let mut failed = 0u64;
    for r in records {
        if let Some(kind) = r.failure_kind {
            *counts.entry(kind).or_default() += 1;
            failed += 1;
        }
    }
    if failed == 0 {
        return Err(MetricsError::NoFailures);
    }
    Ok(counts
        .into_iter()
        .map(|(k, n)| (k, n as f64 / failed as f64))
        .collect())
}

/// Fraction of issues resolved within a cumulative token limit: accepted
/// records whose total usage stayed at or under `limit`, over all records.
/// Monotone non-decreasing in `limit`; equals the resolution rate once
/// `limit` covers every accepted record.
pub fn resolved_at_token_limit(records: &[RunRecord], limit: u64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let within = records
        .iter()
        .filter(|r| r.accepted() && r.tokens.total <= limit)
        .count();
    within as f64 / records.len() as f64
}

/// Aggregate tool traffic for one tool across a record set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToolCallStats {
    /// Arithmetic mean of calls per issue.
    pub mean_calls: f64,
    /// Error results over calls, across the whole set.
    pub failure_rate: f64,
    pub calls: u64,
    pub errors: u64,
}

/// Per-tool means and failure rates over a record set. Tools a record never
/// called contribute zero calls to that record's share of the mean.
pub fn tool_call_distribution(records: &[RunRecord]) -> BTreeMap<String, ToolCallStats> {
    let mut totals: BTreeMap<String, ToolUsage> = BTreeMap::new();
    for r in records {
        for (tool, usage) in &r.tool_counts {
            let t = totals.entry(tool.clone()).or_default();
            t.calls += usage.calls;
            t.errors += usage.errors;
        }
    }
    let n = records.len() as f64;
    totals
        .into_iter()
        .map(|(tool, t)| {
            (
                tool,
                ToolCallStats {
                    mean_calls: if n == 0.0 { 0.0 } else { t.calls as f64 / n },
                    failure_rate: if t.calls == 0 {
                        0.0
                    } else {
                        t.errors as f64 / t.calls as f64
                    },
                    calls: t.calls,
                    errors: t.errors,
                },
            )
        })
        .collect()
}
