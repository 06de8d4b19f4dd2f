//! Fans a benchmark set out to repair sessions on a worker pool.
//!
//! Each issue gets its own session, transport, and workspace; the only
//! shared state is the read-only toolchain and configuration. A session
//! that errors or panics becomes a `Failure(ImplError)` record instead of
//! taking the run down.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agent_core::{
    run_baseline_session, run_repair_session, FailureKind, ModelTransport, SessionConfig,
    SessionOutcome, TrajectoryEvent,
};
use crate::bench_model::{classify_split, BenchmarkSet, Issue};
use crate::diffscope::{compute_edit_stats, FunctionIndex};
use crate::toolchain::Toolchain;

use super::{compute_cost, PriceCard, RunOutcome, RunRecord, TokenUsage, ToolUsage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// The staged agent: setup, diagnosis, fixing, held-out validation.
    Mini,
    /// The single-loop restricted-shell agent.
    Baseline,
}

impl AgentKind {
    pub fn label(self) -> &'static str {
        match self {
            AgentKind::Mini => "mini",
            AgentKind::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mini" => Ok(AgentKind::Mini),
            "baseline" => Ok(AgentKind::Baseline),
            other => Err(format!("unknown agent kind {other:?} (mini|baseline)")),
        }
    }
}

/// Everything a benchmark run needs besides the issues and the toolchain.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub session: SessionConfig,
    /// Root of the reference documentation served to agents.
    pub doc_root: PathBuf,
    /// Model name recorded on every run record.
    pub model: String,
    /// Worker threads; defaults to min(issue count, host parallelism).
    pub workers: Option<usize>,
    /// When set, each record carries its dollar cost.
    pub price_card: Option<PriceCard>,
}

impl RunConfig {
    pub fn new(doc_root: impl Into<PathBuf>) -> Self {
        RunConfig {
            session: SessionConfig::default(),
            doc_root: doc_root.into(),
            model: "scripted".to_string(),
            workers: None,
            price_card: None,
        }
    }
}

/// Runs one agent over every issue in the set and returns one record per
/// issue, in the set's order regardless of scheduling.
pub fn run_benchmark(
    agent: AgentKind,
    set: &BenchmarkSet,
    config: &RunConfig,
    tc: &Toolchain,
    transport_factory: &(dyn Fn(&Issue) -> Box<dyn ModelTransport> + Sync),
) -> Vec<RunRecord> {
    run_benchmark_observed(agent, set, config, tc, transport_factory, &|_, _| {})
}

/// Like [`run_benchmark`], additionally handing every completed session to
/// `observer` before it is folded into a record, so callers can persist
/// trajectories. Sessions the harness failed to complete have no outcome
/// and are not observed. The observer runs on worker threads.
pub fn run_benchmark_observed(
    agent: AgentKind,
    set: &BenchmarkSet,
    config: &RunConfig,
    tc: &Toolchain,
    transport_factory: &(dyn Fn(&Issue) -> Box<dyn ModelTransport> + Sync),
    observer: &(dyn Fn(&Issue, &SessionOutcome) + Sync),
) -> Vec<RunRecord> {
    let issues = &set.issues;
    if issues.is_empty() {
        return Vec::new();
    }
    let host = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let workers = config.workers.unwrap_or(host).min(issues.len()).max(1);

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, RunRecord)>> = Mutex::new(Vec::with_capacity(issues.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= issues.len() {
                    break;
                }
                let record = run_one(agent, &issues[i], config, tc, transport_factory, observer);
                results.lock().unwrap().push((i, record));
            });
        }
    });

    let mut collected = results.into_inner().unwrap();
    collected.sort_by_key(|(i, _)| *i);
    collected.into_iter().map(|(_, r)| r).collect()
}

fn run_one(
    agent: AgentKind,
    issue: &Issue,
    config: &RunConfig,
    tc: &Toolchain,
    transport_factory: &(dyn Fn(&Issue) -> Box<dyn ModelTransport> + Sync),
    observer: &(dyn Fn(&Issue, &SessionOutcome) + Sync),
) -> RunRecord {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(|| {
        let mut transport = transport_factory(issue);
        match agent {
            AgentKind::Mini => run_repair_session(
                tc,
                issue,
                &config.doc_root,
                transport.as_mut(),
                &config.session,
            ),
            AgentKind::Baseline => run_baseline_session(
                tc,
                issue,
                &config.doc_root,
                transport.as_mut(),
                &config.session,
            ),
        }
    }));
    let wall = start.elapsed().as_secs_f64();

    match result {
        Ok(Ok(outcome)) => {
            observer(issue, &outcome);
            record_from_session(agent, config, tc, issue, &outcome, wall)
        }
        Ok(Err(_)) | Err(_) => impl_error_record(agent, config, tc, issue, wall),
    }
}

/// Difficulty split of the issue's golden patch. Function attribution uses
/// the base snapshot when available and degrades to file counts otherwise.
fn issue_split(tc: &Toolchain, issue: &Issue) -> crate::bench_model::Split {
    let index = FunctionIndex::build(&tc.snapshot_dir(&issue.base_commit))
        .unwrap_or_else(|_| FunctionIndex::empty());
    classify_split(&compute_edit_stats(&issue.golden_patch.parsed(), &index))
}

/// A record for a session the harness itself failed to complete.
fn impl_error_record(
    agent: AgentKind,
    config: &RunConfig,
    tc: &Toolchain,
    issue: &Issue,
    wall_time_seconds: f64,
) -> RunRecord {
    RunRecord {
        issue_id: issue.id,
        agent: agent.label().to_string(),
        model: config.model.clone(),
        outcome: RunOutcome::Failure,
        failure_kind: Some(FailureKind::ImplError),
        tokens: TokenUsage::default(),
        rounds: 0,
        tool_counts: BTreeMap::new(),
        wall_time_seconds,
        dollars: None,
        bug_type: Some(issue.bug_type),
        split: Some(issue_split(tc, issue)),
        file_recall: None,
        func_recall: None,
    }
}

/// Folds a finished session into the persistent record shape: token totals
/// from the turn log, per-tool call and error counts, localization recall,
/// split and cost metadata.
pub fn record_from_session(
    agent: AgentKind,
    config: &RunConfig,
    tc: &Toolchain,
    issue: &Issue,
    outcome: &SessionOutcome,
    wall_time_seconds: f64,
) -> RunRecord {
    let mut input = 0u64;
    let mut output = 0u64;
    let mut tool_counts: BTreeMap<String, ToolUsage> = BTreeMap::new();
    let mut pending_call: Option<String> = None;
    for event in &outcome.trajectory {
        match event {
            TrajectoryEvent::ModelTurn {
                input_tokens,
                output_tokens,
                ..
            } => {
                input += input_tokens;
                output += output_tokens;
            }
            TrajectoryEvent::ToolCall { name, .. } => {
                tool_counts.entry(name.clone()).or_default().calls += 1;
                pending_call = Some(name.clone());
            }
            TrajectoryEvent::ToolResult { ok, .. } => {
                if let Some(name) = pending_call.take() {
                    if !ok {
                        tool_counts.entry(name).or_default().errors += 1;
                    }
                }
            }
            _ => {}
        }
    }
    let tokens = TokenUsage::new(input, output, 0);

    let (run_outcome, failure_kind) = if outcome.resolved {
        (RunOutcome::AcceptedPatch, None)
    } else {
        (
            RunOutcome::Failure,
            Some(outcome.failure.unwrap_or(FailureKind::ImplError)),
        )
    };

    let (file_recall, func_recall) = outcome
        .validation
        .as_ref()
        .and_then(|v| v.localization.as_ref())
        .map(|loc| (Some(loc.file_recall), loc.func_recall))
        .unwrap_or((None, None));

    RunRecord {
        issue_id: issue.id,
        agent: agent.label().to_string(),
        model: config.model.clone(),
        outcome: run_outcome,
        failure_kind,
        tokens,
        rounds: outcome.rounds_used,
        tool_counts,
        wall_time_seconds,
        dollars: config
            .price_card
            .as_ref()
            .and_then(|card| compute_cost(&tokens, card).ok()),
        bug_type: Some(issue.bug_type),
        split: Some(issue_split(tc, issue)),
        file_recall,
        func_recall,
    }
}
