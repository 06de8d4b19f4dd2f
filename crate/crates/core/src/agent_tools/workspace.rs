//! The mutable source workspace an agent session operates on, plus the
//! executor that binds workspace, toolchain, and issue into the tool set.
//!
//! The workspace holds the checked-out tree in memory: a pristine copy of
//! the base snapshot and a current copy that edits mutate. Diffs against the
//! pristine copy are the patch under construction; builds always apply that
//! patch to the pristine snapshot, so the workspace never needs write access
//! to the snapshot directory itself.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use thiserror::Error;
use walkdir::WalkDir;

use crate::bench_model::{CommitId, Issue, Reproducer};
use crate::diffscope::{
    diff_file_contents, render_unified_diff, scan_source, FunctionIndex, UnifiedDiff,
};
use crate::toolchain::{
    render_stack_trace, BuildHandle, BuildOutcome, Evidence, ReproProbe, StackTrace, TestScope,
    Toolchain,
};

use super::{truncate_payload, ToolCall, ALL_TOOLS};

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("no source snapshot for commit {0}")]
    MissingSnapshot(String),
    #[error("path escapes the workspace: {0}")]
    PathOutsideWorkspace(String),
    #[error("no such file: {0}")]
    NoSuchFile(String),
    #[error("pattern occurs {count} times in {path}; it must be unique")]
    NotUnique { path: String, count: usize },
    #[error("pattern not found in {0}")]
    PatternNotFound(String),
    #[error("invalid pattern: {0}")]
    BadPattern(String),
    #[error("empty pattern")]
    EmptyPattern,
    #[error("io: {0}")]
    Io(String),
}

/// Normalizes a workspace-relative path: forward slashes, no leading `./`,
/// and no way to escape the tree.
fn normalize_path(raw: &str) -> Result<String, WorkspaceError> {
    let cleaned = raw.trim().replace('\\', "/");
    let cleaned = cleaned.trim_start_matches("./").trim_matches('/');
    if cleaned.starts_with('/') || raw.trim().starts_with('/') {
        return Err(WorkspaceError::PathOutsideWorkspace(raw.to_string()));
    }
    if cleaned
        .split('/')
        .any(|part| part == ".." || part.is_empty() && !cleaned.is_empty())
    {
        return Err(WorkspaceError::PathOutsideWorkspace(raw.to_string()));
    }
    Ok(cleaned.to_string())
}

/// In-memory working tree for one repair session.
pub struct SessionWorkspace {
    base_commit: CommitId,
    pristine: BTreeMap<String, String>,
    current: BTreeMap<String, String>,
    /// Function spans of the pristine tree, used for diff hunk headings.
    index: FunctionIndex,
}

impl SessionWorkspace {
    /// Loads the snapshot of `commit` from the toolchain's snapshot store.
    /// Files that are not valid UTF-8 are skipped; the sources the tools
    /// operate on are text by construction.
    pub fn from_snapshot(tc: &Toolchain, commit: &CommitId) -> Result<Self, WorkspaceError> {
        if !tc.has_snapshot(commit) {
            return Err(WorkspaceError::MissingSnapshot(commit.to_string()));
        }
        let root = tc.snapshot_dir(commit);
        let mut pristine = BTreeMap::new();
        for entry in WalkDir::new(&root).sort_by_file_name() {
            let entry = entry.map_err(|e| WorkspaceError::Io(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(&root)
                .map_err(|e| WorkspaceError::Io(e.to_string()))?
                .to_string_lossy()
                .replace('\\', "/");
            if let Ok(text) = std::fs::read_to_string(entry.path()) {
                pristine.insert(rel, text);
            }
        }
        let mut index = FunctionIndex::empty();
        for (path, text) in &pristine {
            if path.ends_with(".cpp") || path.ends_with(".h") {
                index.insert_file(path.clone(), scan_source(text));
            }
        }
        Ok(SessionWorkspace {
            base_commit: commit.clone(),
            current: pristine.clone(),
            pristine,
            index,
        })
    }

    pub fn base_commit(&self) -> &CommitId {
        &self.base_commit
    }

    pub fn file(&self, path: &str) -> Option<&str> {
        self.current.get(path).map(String::as_str)
    }

    pub fn file_count(&self) -> usize {
        self.current.len()
    }

    /// Paths whose name contains the pattern, case-insensitively.
    pub fn find(&self, pattern: &str) -> Vec<String> {
        let needle = pattern.to_lowercase();
        self.current
            .keys()
            .filter(|p| p.to_lowercase().contains(&needle))
            .cloned()
            .collect()
    }

    /// Regex search across file contents; `prefix` restricts the paths.
    pub fn grep(&self, pattern: &str, prefix: Option<&str>) -> Result<Vec<String>, WorkspaceError> {
        let re = Regex::new(pattern).map_err(|e| WorkspaceError::BadPattern(e.to_string()))?;
        let prefix = match prefix {
            Some(p) => Some(normalize_path(p)?),
            None => None,
        };
        let mut hits = Vec::new();
        for (path, text) in &self.current {
            if let Some(pre) = &prefix {
                if !path.starts_with(pre.as_str()) {
                    continue;
                }
            }
            for (lineno, line) in text.lines().enumerate() {
                if re.is_match(line) {
                    hits.push(format!("{path}:{}: {}", lineno + 1, line));
                }
            }
        }
        Ok(hits)
    }

    /// Immediate entries of a directory; directories carry a trailing `/`.
    pub fn list(&self, dir: &str) -> Result<Vec<String>, WorkspaceError> {
        let dir = normalize_path(dir)?;
        let prefix = if dir.is_empty() {
            String::new()
        } else {
            format!("{dir}/")
        };
        let mut entries = BTreeSet::new();
        for path in self.current.keys() {
            let Some(rest) = path.strip_prefix(&prefix) else {
                continue;
            };
            match rest.split_once('/') {
                Some((child, _)) => entries.insert(format!("{child}/")),
                None => entries.insert(rest.to_string()),
            };
        }
        if entries.is_empty() && !dir.is_empty() && !self.current.contains_key(&dir) {
            return Err(WorkspaceError::NoSuchFile(dir));
        }
        Ok(entries.into_iter().collect())
    }

    /// Numbered source lines, optionally restricted to `[start, end]`
    /// (1-based, inclusive).
    pub fn read_numbered(
        &self,
        path: &str,
        start: Option<u64>,
        end: Option<u64>,
    ) -> Result<String, WorkspaceError> {
        let path = normalize_path(path)?;
        let text = self
            .current
            .get(&path)
            .ok_or_else(|| WorkspaceError::NoSuchFile(path.clone()))?;
        let start = start.unwrap_or(1).max(1);
        let end = end.unwrap_or(u64::MAX);
        let mut out = String::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i as u64 + 1;
            if lineno < start || lineno > end {
                continue;
            }
            out.push_str(&format!("{lineno:5}| {line}\n"));
        }
        if out.is_empty() {
            out.push_str("(no lines in range)\n");
        }
        Ok(out)
    }

    /// Replaces exactly one occurrence of `old` in `path`. Ambiguous or
    /// absent patterns are refused so edits never land in the wrong place.
    pub fn edit(&mut self, path: &str, old: &str, new: &str) -> Result<(), WorkspaceError> {
        let path = normalize_path(path)?;
        if old.is_empty() {
            return Err(WorkspaceError::EmptyPattern);
        }
        let text = self
            .current
            .get(&path)
            .ok_or_else(|| WorkspaceError::NoSuchFile(path.clone()))?;
        let count = text.matches(old).count();
        match count {
            0 => Err(WorkspaceError::PatternNotFound(path)),
            1 => {
                let updated = text.replacen(old, new, 1);
                self.current.insert(path, updated);
                Ok(())
            }
            n => Err(WorkspaceError::NotUnique { path, count: n }),
        }
    }

    /// Discards every edit.
    pub fn reset(&mut self) {
        self.current = self.pristine.clone();
    }

    /// The accumulated changes as a structured diff.
    pub fn diff(&self) -> UnifiedDiff {
        let mut files = Vec::new();
        for (path, old_text) in &self.pristine {
            let new_text = self.current.get(path).map(String::as_str).unwrap_or("");
            if let Some(patch) =
                diff_file_contents(path, path, old_text, new_text, Some(&self.index))
            {
                files.push(patch);
            }
        }
        UnifiedDiff { files }
    }

    /// The accumulated changes rendered as patch text; `None` when clean.
    pub fn current_patch(&self) -> Option<String> {
        let diff = self.diff();
        if diff.is_empty() {
            None
        } else {
            Some(render_unified_diff(&diff))
        }
    }

    pub fn is_clean(&self) -> bool {
        self.current == self.pristine
    }

    /// Finds a function definition in the current tree by name or qualified
    /// suffix and returns its location and source.
    pub fn lookup_code(&self, symbol: &str) -> Option<(String, u64, u64, String)> {
        // Scan the live tree rather than the pristine index so edits are
        // reflected immediately.
        let mut live = FunctionIndex::empty();
        for (path, text) in &self.current {
            if path.ends_with(".cpp") || path.ends_with(".h") {
                live.insert_file(path.clone(), scan_source(text));
            }
        }
        let (file, span) = live.lookup_symbol(symbol)?;
        let text = self.current.get(file)?;
        let body: String = text
            .lines()
            .enumerate()
            .filter(|(i, _)| {
                let lineno = *i as u64 + 1;
                lineno >= span.start && lineno <= span.end
            })
            .map(|(i, l)| format!("{:5}| {l}\n", i + 1))
            .collect();
        Some((file.to_string(), span.start, span.end, body))
    }
}

/// Outcome phase of one `test` run; the first failing phase wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestPhase {
    Build,
    Reproduce,
    Regression,
    Complete,
}

/// Result of one full `test` invocation.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub pass: bool,
    pub phase: TestPhase,
    pub detail: String,
    /// The exact patch text that was built and tested; `None` for a clean
    /// workspace (which tests the unmodified base).
    pub patch: Option<String>,
}

impl TestReport {
    pub fn render(&self) -> String {
        if self.pass {
            format!("TEST PASS\n{}", self.detail)
        } else {
            let phase = match self.phase {
                TestPhase::Build => "build",
                TestPhase::Reproduce => "bug check",
                TestPhase::Regression => "regression tests",
                TestPhase::Complete => "complete",
            };
            format!("TEST FAIL ({phase})\n{}", self.detail)
        }
    }
}

/// Result of executing one tool call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolResult {
    pub ok: bool,
    /// Already truncated to the payload cap.
    pub payload: String,
}

impl ToolResult {
    fn ok(payload: impl Into<String>) -> Self {
        ToolResult {
            ok: true,
            payload: truncate_payload(&payload.into()),
        }
    }

    fn err(payload: impl Into<String>) -> Self {
        ToolResult {
            ok: false,
            payload: truncate_payload(&format!("error: {}", payload.into())),
        }
    }
}

const GREP_MATCH_CAP: usize = 200;

/// Binds a workspace, the toolchain, and one issue into the executable tool
/// set. Budgets are owned by the session loop, not the executor.
pub struct ToolExecutor<'a> {
    toolchain: &'a Toolchain,
    issue: &'a Issue,
    pub workspace: SessionWorkspace,
    /// Documentation corpus: (name, content) pairs.
    docs: Vec<(String, String)>,
    last_build: Option<BuildHandle>,
    dirty_since_build: bool,
    /// The report of the most recent `test` call.
    pub last_test: Option<TestReport>,
}

impl<'a> ToolExecutor<'a> {
    pub fn new(
        toolchain: &'a Toolchain,
        issue: &'a Issue,
        doc_root: &Path,
    ) -> Result<Self, WorkspaceError> {
        let workspace = SessionWorkspace::from_snapshot(toolchain, &issue.base_commit)?;
        let mut docs = Vec::new();
        if doc_root.is_dir() {
            for entry in WalkDir::new(doc_root).sort_by_file_name() {
                let entry = entry.map_err(|e| WorkspaceError::Io(e.to_string()))?;
                if !entry.file_type().is_file() {
                    continue;
                }
                let name = entry.file_name().to_string_lossy().to_string();
                if let Ok(text) = std::fs::read_to_string(entry.path()) {
                    docs.push((name, text));
                }
            }
        }
        Ok(ToolExecutor {
            toolchain,
            issue,
            workspace,
            docs,
            last_build: None,
            dirty_since_build: false,
            last_test: None,
        })
    }

    pub fn issue(&self) -> &Issue {
        self.issue
    }

    /// Runs one tool call. Errors come back as failed results, never as
    /// panics: the model sees the message and can correct itself.
    pub fn execute(&mut self, call: &ToolCall) -> ToolResult {
        match call.name.as_str() {
            "find" => self.tool_find(call),
            "grep" => self.tool_grep(call),
            "list" => self.tool_list(call),
            "read" => self.tool_read(call),
            "edit" => self.tool_edit(call),
            "preview" => self.tool_preview(),
            "code" => self.tool_code(call),
            "docs" => self.tool_docs(call, false),
            "langref" => self.tool_docs(call, true),
            "debug" => self.tool_debug(call),
            "eval" => self.tool_eval(call),
            "reset" => self.tool_reset(),
            "test" => self.tool_test(),
            "stop" => ToolResult::ok("stopping."),
            other => {
                let names: Vec<&str> = ALL_TOOLS.iter().map(|(n, _)| *n).collect();
                ToolResult::err(format!(
                    "unknown tool `{other}`; available tools: {}",
                    names.join(", ")
                ))
            }
        }
    }

    fn require<'c>(&self, call: &'c ToolCall, key: &str) -> Result<&'c str, ToolResult> {
        call.arg(key)
            .ok_or_else(|| ToolResult::err(format!("{} requires `{key}=...`", call.name)))
    }

    fn tool_find(&self, call: &ToolCall) -> ToolResult {
        let pattern = match self.require(call, "pattern") {
            Ok(p) => p,
            Err(e) => return e,
        };
        let hits = self.workspace.find(pattern);
        if hits.is_empty() {
            ToolResult::ok(format!("no files match \"{pattern}\""))
        } else {
            ToolResult::ok(hits.join("\n"))
        }
    }

    fn tool_grep(&self, call: &ToolCall) -> ToolResult {
        let pattern = match self.require(call, "pattern") {
            Ok(p) => p,
            Err(e) => return e,
        };
        match self.workspace.grep(pattern, call.arg("path")) {
            Ok(hits) if hits.is_empty() => {
                ToolResult::ok(format!("no matches for /{pattern}/"))
            }
            Ok(mut hits) => {
                let total = hits.len();
                let mut out;
                if total > GREP_MATCH_CAP {
                    hits.truncate(GREP_MATCH_CAP);
                    out = hits.join("\n");
                    out.push_str(&format!(
                        "\n({} further matches omitted)",
                        total - GREP_MATCH_CAP
                    ));
                } else {
                    out = hits.join("\n");
                }
                ToolResult::ok(out)
            }
            Err(e) => ToolResult::err(e.to_string()),
        }
    }

    fn tool_list(&self, call: &ToolCall) -> ToolResult {
        let dir = call.arg("path").unwrap_or("");
        match self.workspace.list(dir) {
            Ok(entries) if entries.is_empty() => ToolResult::ok("(empty)"),
            Ok(entries) => ToolResult::ok(entries.join("\n")),
            Err(e) => ToolResult::err(e.to_string()),
        }
    }

    fn tool_read(&self, call: &ToolCall) -> ToolResult {
        let path = match self.require(call, "path") {
            Ok(p) => p,
            Err(e) => return e,
        };
        let parse_bound = |key: &str| -> Result<Option<u64>, ToolResult> {
            match call.arg(key) {
                None => Ok(None),
                Some(raw) => raw.trim().parse::<u64>().map(Some).map_err(|_| {
                    ToolResult::err(format!("{key} must be a line number, got \"{raw}\""))
                }),
            }
        };
        let start = match parse_bound("start") {
            Ok(v) => v,
            Err(e) => return e,
        };
        let end = match parse_bound("end") {
            Ok(v) => v,
            Err(e) => return e,
        };
        match self.workspace.read_numbered(path, start, end) {
            Ok(text) => ToolResult::ok(text),
            Err(e) => ToolResult::err(e.to_string()),
        }
    }

    fn tool_edit(&mut self, call: &ToolCall) -> ToolResult {
        let path = match self.require(call, "path") {
            Ok(p) => p.to_string(),
            Err(e) => return e,
        };
        let old = match self.require(call, "old") {
            Ok(v) => v.to_string(),
            Err(e) => return e,
        };
        let new = match self.require(call, "new") {
            Ok(v) => v.to_string(),
            Err(e) => return e,
        };
        match self.workspace.edit(&path, &old, &new) {
            Ok(()) => {
                self.dirty_since_build = true;
                ToolResult::ok(format!("ok: replaced one occurrence in {path}"))
            }
            Err(e) => ToolResult::err(e.to_string()),
        }
    }

    fn tool_preview(&self) -> ToolResult {
        match self.workspace.current_patch() {
            Some(patch) => ToolResult::ok(patch),
            None => ToolResult::ok("(workspace is clean; no edits yet)"),
        }
    }

    fn tool_code(&self, call: &ToolCall) -> ToolResult {
        let symbol = match self.require(call, "symbol") {
            Ok(s) => s,
            Err(e) => return e,
        };
        match self.workspace.lookup_code(symbol) {
            Some((file, start, end, body)) => ToolResult::ok(format!(
                "{file}:{start}-{end}\n{body}"
            )),
            None => ToolResult::err(format!("no function definition found for \"{symbol}\"")),
        }
    }

    fn tool_docs(&self, call: &ToolCall, langref_only: bool) -> ToolResult {
        let query = match self.require(call, "query") {
            Ok(q) => q,
            Err(e) => return e,
        };
        let words: Vec<String> = query
            .to_lowercase()
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if words.is_empty() {
            return ToolResult::err("query must not be empty");
        }
        let mut best: Option<(usize, &str, &str)> = None;
        for (name, text) in &self.docs {
            if langref_only && !name.starts_with("langref") {
                continue;
            }
            let haystack = format!("{}\n{}", name, text).to_lowercase();
            let score = words.iter().filter(|w| haystack.contains(w.as_str())).count();
            if score == 0 {
                continue;
            }
            let better = match &best {
                None => true,
                Some((s, _, _)) => score > *s,
            };
            if better {
                best = Some((score, name, text));
            }
        }
        match best {
            Some((_, name, text)) => ToolResult::ok(format!("# {name}\n\n{text}")),
            None => ToolResult::ok(format!("no documentation matched \"{query}\"")),
        }
    }

    /// Builds the current workspace state (base plus accumulated patch),
    /// reusing the previous build when nothing changed since.
    fn build_current(&mut self) -> Result<BuildHandle, String> {
        if !self.dirty_since_build {
            if let Some(handle) = &self.last_build {
                return Ok(handle.clone());
            }
        }
        let patch = self.workspace.current_patch();
        let outcome = self
            .toolchain
            .build(self.workspace.base_commit(), patch.as_deref())
            .map_err(|e| e.to_string())?;
        match outcome {
            BuildOutcome::Ready(handle) => {
                self.last_build = Some(handle.clone());
                self.dirty_since_build = false;
                Ok(handle)
            }
            BuildOutcome::Failed { log } => Err(log),
        }
    }

    fn tool_debug(&mut self, call: &ToolCall) -> ToolResult {
        let commands = match self.require(call, "commands") {
            Ok(c) => c.to_string(),
            Err(e) => return e,
        };
        let Some(rep) = self.issue.reproducers.first() else {
            return ToolResult::err("this issue has no reproducer to debug against");
        };
        let handle = match self.build_current() {
            Ok(h) => h,
            Err(log) => return ToolResult::err(format!("build failed:\n{log}")),
        };
        let mut session = match self.toolchain.debug_session(&handle, rep) {
            Ok(s) => s,
            Err(e) => return ToolResult::err(e.to_string()),
        };
        let mut out = String::new();
        for command in commands.lines().map(str::trim).filter(|l| !l.is_empty()) {
            out.push_str(&format!("({command})\n"));
            match session.run_command(command) {
                Ok(response) => {
                    out.push_str(&response);
                    if !response.ends_with('\n') {
                        out.push('\n');
                    }
                }
                Err(e) => {
                    out.push_str(&format!("error: {e}\n"));
                    break;
                }
            }
        }
        if out.is_empty() {
            out.push_str("(no commands given)");
        }
        ToolResult::ok(out)
    }

    fn tool_eval(&mut self, call: &ToolCall) -> ToolResult {
        let ir = match self.require(call, "ir") {
            Ok(v) => v.to_string(),
            Err(e) => return e,
        };
        let flags: Vec<String> = match call.arg("flags") {
            Some(raw) => raw.split_whitespace().map(str::to_string).collect(),
            None => match self.issue.reproducers.first() {
                Some(rep) => rep.opt_flags.clone(),
                None => return ToolResult::err("eval needs `flags=...`; the issue has no reproducer to borrow them from"),
            },
        };
        let rep = match Reproducer::new(ir, flags) {
            Ok(r) => r,
            Err(e) => return ToolResult::err(e.to_string()),
        };
        let handle = match self.build_current() {
            Ok(h) => h,
            Err(log) => return ToolResult::err(format!("build failed:\n{log}")),
        };
        match self.toolchain.run_opt(&handle, &rep) {
            Ok(t) => {
                let mut out = format!("exit status: {}\n", t.exit_code);
                if t.timed_out {
                    out.push_str("(timed out)\n");
                }
                let stdout = t.stdout_text();
                let stderr = t.stderr_text();
                if !stdout.is_empty() {
                    out.push_str("--- stdout ---\n");
                    out.push_str(&stdout);
                    if !stdout.ends_with('\n') {
                        out.push('\n');
                    }
                }
                if !stderr.is_empty() {
                    out.push_str("--- stderr ---\n");
                    out.push_str(&stderr);
                    if !stderr.ends_with('\n') {
                        out.push('\n');
                    }
                }
                ToolResult {
                    ok: t.succeeded(),
                    payload: truncate_payload(&out),
                }
            }
            Err(e) => ToolResult::err(e.to_string()),
        }
    }

    fn tool_reset(&mut self) -> ToolResult {
        self.workspace.reset();
        self.last_build = None;
        self.dirty_since_build = false;
        ToolResult::ok("workspace reset; all edits discarded")
    }

    fn tool_test(&mut self) -> ToolResult {
        let report = self.run_full_test();
        let payload = report.render();
        let ok = report.pass;
        self.last_test = Some(report);
        ToolResult {
            ok,
            payload: truncate_payload(&payload),
        }
    }

    /// Full validation of the current workspace state: build the patch on
    /// the base, confirm every reproducer stopped triggering the bug, then
    /// run the component's regression tests.
    pub fn run_full_test(&mut self) -> TestReport {
        let patch = self.workspace.current_patch();
        let handle = match self.build_current() {
            Ok(h) => h,
            Err(log) => {
                return TestReport {
                    pass: false,
                    phase: TestPhase::Build,
                    detail: format!("the patched tree does not compile:\n{log}"),
                    patch,
                }
            }
        };

        for (i, rep) in self.issue.reproducers.iter().enumerate() {
            let probe = match self.toolchain.probe(&handle, self.issue.bug_type, rep) {
                Ok(p) => p,
                Err(e) => {
                    return TestReport {
                        pass: false,
                        phase: TestPhase::Reproduce,
                        detail: format!("probe of reproducer {} failed: {e}", i + 1),
                        patch,
                    }
                }
            };
            match probe {
                ReproProbe::NotReproduced => {}
                ReproProbe::Reproduced(evidence) => {
                    return TestReport {
                        pass: false,
                        phase: TestPhase::Reproduce,
                        detail: format!(
                            "reproducer {} still triggers the bug:\n{}",
                            i + 1,
                            render_evidence(&evidence)
                        ),
                        patch,
                    }
                }
                ReproProbe::Indeterminate { reason } => {
                    return TestReport {
                        pass: false,
                        phase: TestPhase::Reproduce,
                        detail: format!("reproducer {} gave no verdict: {reason}", i + 1),
                        patch,
                    }
                }
            }
        }

        let scope = TestScope::Component(self.issue.component.clone());
        let summary = match self.toolchain.run_regression_tests(&handle, &scope) {
            Ok(s) => s,
            Err(e) => {
                return TestReport {
                    pass: false,
                    phase: TestPhase::Regression,
                    detail: format!("regression run failed to start: {e}"),
                    patch,
                }
            }
        };
        if !summary.all_passed() {
            return TestReport {
                pass: false,
                phase: TestPhase::Regression,
                detail: format!(
                    "{} of {} component tests fail:\n{}",
                    summary.failures.len(),
                    summary.passed + summary.failures.len() as u64,
                    summary.failures.join("\n")
                ),
                patch,
            };
        }

        TestReport {
            pass: true,
            phase: TestPhase::Complete,
            detail: format!(
                "build ok; {} reproducer(s) no longer trigger the bug; {} component tests pass",
                self.issue.reproducers.len(),
                summary.passed
            ),
            patch,
        }
    }
}

/// Human-readable summary of probe evidence for test reports and prompts.
pub fn render_evidence(evidence: &Evidence) -> String {
    match evidence {
        Evidence::Crash {
            frames,
            fully_filtered,
            ..
        } => {
            let trace = render_stack_trace(&StackTrace {
                frames: frames.clone(),
            });
            if *fully_filtered {
                format!("crash (only framework frames in the trace):\n{trace}")
            } else {
                format!("crash at:\n{trace}")
            }
        }
        Evidence::Miscompile { counterexample } => {
            let mut out = format!("translation validation refuted: {}\n", counterexample.error);
            for (name, value) in &counterexample.example_bindings {
                out.push_str(&format!("  {name} = {value}\n"));
            }
            out.push_str(&format!(
                "  source value: {}\n  target value: {}\n",
                counterexample.source_value, counterexample.target_value
            ));
            out
        }
    }
}
