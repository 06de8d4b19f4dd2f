//! Rendering scored runs into the three interchange shapes: a text table
//! for terminals, JSON as the canonical machine format, CSV for
//! spreadsheets. All three are produced from the same [`Report`] value, so
//! the numbers can never drift between formats.
//!
//! Display rounding is fixed: percentages to 0.1, dollars to 0.01.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{
    failure_distribution, genuine_resolution_rate, tool_call_distribution, MetricsError,
    ReviewLabel, RunRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (text|json|csv)")),
        }
    }
}

/// Fraction to a percentage rounded to 0.1.
pub fn round_percent(fraction: f64) -> f64 {
    (fraction * 1000.0).round() / 10.0
}

/// Dollars rounded to cents.
pub fn round_dollars(dollars: f64) -> f64 {
    (dollars * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupRates {
    pub issues: u64,
    pub resolved: u64,
    pub resolved_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallSummary {
    /// Mean file-level recall as a percentage; unscored records count as
    /// zero.
    pub file_mean_percent: f64,
    /// Mean function-level recall as a percentage, same convention.
    pub func_mean_percent: f64,
    /// Records with a recall measurement.
    pub scored: u64,
    /// Records without one (no candidate survived to validation); scored
    /// as zero above and counted here.
    pub unscored: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenuineSummary {
    pub labels: u64,
    pub accepted_percent: f64,
    pub correct_share_percent: f64,
    pub genuine_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToolRow {
    pub mean_calls: f64,
    pub error_percent: f64,
}

/// One evaluation, aggregated. Serializes to the canonical JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub issues: u64,
    pub resolved: u64,
    pub resolved_percent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_cost_dollars: Option<f64>,
    pub by_bug_type: BTreeMap<String, GroupRates>,
    pub by_split: BTreeMap<String, GroupRates>,
    /// Failure category to percent of failed records; empty when nothing
    /// failed.
    pub failure_distribution_percent: BTreeMap<String, f64>,
    pub recall: RecallSummary,
    pub tools: BTreeMap<String, ToolRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub genuine: Option<GenuineSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn unique_value<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    let set: BTreeSet<&str> = values.collect();
    if set.len() == 1 {
        set.into_iter().next().map(str::to_string)
    } else {
        None
    }
}

fn group_rates<'a>(
    records: impl Iterator<Item = &'a RunRecord>,
    key: impl Fn(&RunRecord) -> Option<String>,
) -> BTreeMap<String, GroupRates> {
    let mut groups: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for r in records {
        let Some(k) = key(r) else { continue };
        let entry = groups.entry(k).or_default();
        entry.0 += 1;
        if r.accepted() {
            entry.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|(k, (issues, resolved))| {
            (
                k,
                GroupRates {
                    issues,
                    resolved,
                    resolved_percent: round_percent(resolved as f64 / issues as f64),
                },
            )
        })
        .collect()
}

impl Report {
    /// Aggregates a record set (optionally with review labels) into the
    /// report shape. An empty set produces an all-zero report rather than
    /// an error.
    pub fn build(
        records: &[RunRecord],
        labels: Option<&[ReviewLabel]>,
    ) -> Result<Report, MetricsError> {
        for r in records {
            r.validate()?;
        }
        let issues = records.len() as u64;
        let resolved = records.iter().filter(|r| r.accepted()).count() as u64;
        let resolved_percent = if issues == 0 {
            0.0
        } else {
            round_percent(resolved as f64 / issues as f64)
        };

        let costed: Vec<f64> = records.iter().filter_map(|r| r.dollars).collect();
        let avg_cost_dollars = if costed.is_empty() {
            None
        } else {
            Some(round_dollars(costed.iter().sum::<f64>() / costed.len() as f64))
        };

        let failure_distribution_percent = match failure_distribution(records) {
            Ok(dist) => dist
                .into_iter()
                .map(|(k, f)| (k.label().to_string(), round_percent(f)))
                .collect(),
            Err(MetricsError::NoFailures) => BTreeMap::new(),
            Err(e) => return Err(e),
        };

        let scored = records.iter().filter(|r| r.file_recall.is_some()).count() as u64;
        let recall = RecallSummary {
            file_mean_percent: mean_percent(records, issues, |r| r.file_recall),
            func_mean_percent: mean_percent(records, issues, |r| r.func_recall),
            scored,
            unscored: issues - scored,
        };

        let genuine = match labels {
            Some(labels) if issues > 0 => {
                let g = genuine_resolution_rate(records, labels)?;
                Some(GenuineSummary {
                    labels: labels.len() as u64,
                    accepted_percent: round_percent(g.accepted as f64 / g.total as f64),
                    correct_share_percent: round_percent(g.correct_share),
                    genuine_percent: round_percent(g.genuine_rate),
                })
            }
            _ => None,
        };

        let tools = tool_call_distribution(records)
            .into_iter()
            .map(|(tool, stats)| {
                (
                    tool,
                    ToolRow {
                        mean_calls: (stats.mean_calls * 10.0).round() / 10.0,
                        error_percent: round_percent(stats.failure_rate),
                    },
                )
            })
            .collect();

        let mut notes = Vec::new();
        if avg_cost_dollars.is_some() && records.iter().all(|r| r.tokens.cached == 0) {
            notes.push(
                "cost assumes no cached input: no cached-token counts were recorded".to_string(),
            );
        }

        Ok(Report {
            agent: unique_value(records.iter().map(|r| r.agent.as_str())),
            model: unique_value(records.iter().map(|r| r.model.as_str())),
            issues,
            resolved,
            resolved_percent,
            avg_cost_dollars,
            by_bug_type: group_rates(records.iter(), |r| {
                r.bug_type.map(|b| b.to_string().to_lowercase())
            }),
            by_split: group_rates(records.iter(), |r| r.split.map(|s| s.to_string())),
            failure_distribution_percent,
            recall,
            tools,
            genuine,
            notes,
        })
    }

    /// The terminal rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "repair evaluation report");
        let _ = writeln!(out, "========================");
        if let Some(agent) = &self.agent {
            let _ = writeln!(out, "agent       {agent}");
        }
        if let Some(model) = &self.model {
            let _ = writeln!(out, "model       {model}");
        }
        let _ = writeln!(out, "issues      {}", self.issues);
        let _ = writeln!(
            out,
            "resolved    {} ({:.1}%)",
            self.resolved, self.resolved_percent
        );
        if let Some(cost) = self.avg_cost_dollars {
            let _ = writeln!(out, "avg cost    ${cost:.2}");
        }
        if !self.by_bug_type.is_empty() {
            let _ = writeln!(out, "\nby bug type");
            for (name, g) in &self.by_bug_type {
                let _ = writeln!(
                    out,
                    "  {name:<16} {}/{} ({:.1}%)",
                    g.resolved, g.issues, g.resolved_percent
                );
            }
        }
        if !self.by_split.is_empty() {
            let _ = writeln!(out, "\nby split");
            for (name, g) in &self.by_split {
                let _ = writeln!(
                    out,
                    "  {name:<16} {}/{} ({:.1}%)",
                    g.resolved, g.issues, g.resolved_percent
                );
            }
        }
        if !self.failure_distribution_percent.is_empty() {
            let _ = writeln!(out, "\nfailure distribution");
            for (name, pct) in &self.failure_distribution_percent {
                let _ = writeln!(out, "  {name:<16} {pct:.1}%");
            }
        }
        let _ = writeln!(out, "\nlocalization recall (unscored count as zero)");
        let _ = writeln!(
            out,
            "  file mean        {:.1}%  (scored {}, unscored {})",
            self.recall.file_mean_percent, self.recall.scored, self.recall.unscored
        );
        let _ = writeln!(
            out,
            "  func mean        {:.1}%",
            self.recall.func_mean_percent
        );
        if !self.tools.is_empty() {
            let _ = writeln!(out, "\ntool calls (mean per issue, error rate)");
            for (tool, row) in &self.tools {
                let _ = writeln!(
                    out,
                    "  {tool:<16} {:>5.1}  ({:.1}%)",
                    row.mean_calls, row.error_percent
                );
            }
        }
        if let Some(g) = &self.genuine {
            let _ = writeln!(out, "\nreview-adjusted ({} labels)", g.labels);
            let _ = writeln!(out, "  accepted         {:.1}%", g.accepted_percent);
            let _ = writeln!(out, "  correct share    {:.1}%", g.correct_share_percent);
            let _ = writeln!(out, "  genuine          {:.1}%", g.genuine_percent);
        }
        for note in &self.notes {
            let _ = writeln!(out, "\nnote: {note}");
        }
        out
    }
}

fn mean_percent(
    records: &[RunRecord],
    issues: u64,
    field: impl Fn(&RunRecord) -> Option<f64>,
) -> f64 {
    if issues == 0 {
        return 0.0;
    }
    let sum: f64 = records.iter().filter_map(&field).sum();
    round_percent(sum / issues as f64)
}

/// CSV of the raw records: a header plus one row per record.
fn to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(
        "issue_id,agent,model,outcome,failure_kind,input_tokens,output_tokens,cached_tokens,\
         total_tokens,rounds,wall_time_seconds,dollars,bug_type,split,file_recall,func_recall\n",
    );
    for r in records {
        let outcome = if r.accepted() { "accepted_patch" } else { "failure" };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:.3},{},{},{},{},{}",
            r.issue_id,
            r.agent,
            r.model,
            outcome,
            r.failure_kind.map(|k| k.label().to_string()).unwrap_or_default(),
            r.tokens.input,
            r.tokens.output,
            r.tokens.cached,
            r.tokens.total,
            r.rounds,
            r.wall_time_seconds,
            r.dollars.map(|d| format!("{d:.4}")).unwrap_or_default(),
            r.bug_type
                .map(|b| b.to_string().to_lowercase())
                .unwrap_or_default(),
            r.split.map(|s| s.to_string()).unwrap_or_default(),
            r.file_recall.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.func_recall.map(|v| format!("{v:.4}")).unwrap_or_default(),
        );
    }
    out
}

/// Renders a record set in the requested format. JSON is the canonical
/// machine format; the text table and CSV are projections of the same
/// aggregation.
pub fn emit_report(
    records: &[RunRecord],
    labels: Option<&[ReviewLabel]>,
    format: ReportFormat,
) -> Result<String, MetricsError> {
    match format {
        ReportFormat::Csv => Ok(to_csv(records)),
        ReportFormat::Json => {
            let report = Report::build(records, labels)?;
            Ok(serde_json::to_string_pretty(&report).expect("report serializes"))
        }
        ReportFormat::Text => {
            let report = Report::build(records, labels)?;
            Ok(report.to_text())
        }
    }
}
