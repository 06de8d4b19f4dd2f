//! Textual issue records: `Key: value` lines plus fenced blocks.
//!
//! A record is self-contained and human-readable. Scalar fields are single
//! lines; the issue body, each reproducer, and the golden patch sit in fenced
//! code blocks tagged `plain`, `llvm`, and `diff` respectively. Reproducers
//! may repeat. `render_issue_record` emits the canonical form, and
//! `parse_issue_record(render_issue_record(i))` is field-equal to `i`.

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use super::{
    BugType, CommitId, GoldenPatch, Issue, ModelError, Reproducer,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RecordError {
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("malformed {0} block: {1}")]
    MalformedBlock(&'static str, String),
    #[error("unknown bug type {0:?}")]
    UnknownBugType(String),
    #[error("invalid {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

fn invalid(field: &'static str, err: impl ToString) -> RecordError {
    RecordError::InvalidField {
        field,
        reason: err.to_string(),
    }
}

struct Block {
    lang: String,
    text: String,
}

/// Splits the record into scalar fields and fenced blocks keyed by the
/// introducing `Key:` line.
struct RawRecord {
    scalars: Vec<(String, String)>,
    blocks: Vec<(String, Block)>,
}

fn is_key_line(line: &str) -> Option<(&str, &str)> {
    let colon = line.find(':')?;
    let key = &line[..colon];
    if key.is_empty()
        || !key.chars().next().unwrap().is_ascii_alphabetic()
        || !key.chars().all(|c| c.is_ascii_alphanumeric())
    {
        return None;
    }
    Some((key, line[colon + 1..].trim()))
}

fn split_raw(text: &str) -> Result<RawRecord, RecordError> {
    let mut scalars = Vec::new();
    let mut blocks = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        let Some((key, value)) = is_key_line(line) else {
            // Free text outside any block is tolerated (e.g. a comment line),
            // but an unattached fence is not.
            if line.starts_with("```") {
                return Err(RecordError::MalformedBlock("record", "fence without a key".into()));
            }
            i += 1;
            continue;
        };
        let key = key.to_string();
        if !value.is_empty() {
            scalars.push((key, value.to_string()));
            i += 1;
            continue;
        }
        // A bare `Key:` line introduces one or more fenced blocks.
        i += 1;
        let mut took_block = false;
        loop {
            while i < lines.len() && lines[i].trim().is_empty() {
                i += 1;
            }
            if i >= lines.len() || !lines[i].starts_with("```") {
                break;
            }
            let lang = lines[i][3..].trim().to_string();
            i += 1;
            let body_start = i;
            while i < lines.len() && lines[i] != "```" {
                i += 1;
            }
            if i >= lines.len() {
                return Err(RecordError::MalformedBlock(
                    "record",
                    format!("unterminated fence under {key}"),
                ));
            }
            let mut body = lines[body_start..i].join("\n");
            if i > body_start {
                body.push('\n');
            }
            i += 1;
            blocks.push((key.clone(), Block { lang, text: body }));
            took_block = true;
        }
        if !took_block {
            // `Key:` with nothing after it is an empty scalar.
            scalars.push((key, String::new()));
        }
    }
    Ok(RawRecord { scalars, blocks })
}

fn parse_reproducer_block(block: &Block) -> Result<Reproducer, RecordError> {
    let malformed = |reason: &str| {
        RecordError::MalformedBlock("Reproducers", reason.to_string())
    };
    if block.lang != "llvm" {
        return Err(malformed(&format!("expected llvm fence, got {:?}", block.lang)));
    }
    let mut lines = block.text.lines();
    let run = lines.next().ok_or_else(|| malformed("empty block"))?;
    let run = run
        .trim_start_matches(';')
        .trim()
        .trim_start_matches("RUN:")
        .trim();
    let mut toks = run.split_whitespace();
    if toks.next() != Some("opt") {
        return Err(malformed("first line must be an `; opt ...` invocation"));
    }
    let mut flags = Vec::new();
    for tok in toks {
        match tok {
            "<" | "|" => break,
            "%s" => continue,
            _ => flags.push(tok.to_string()),
        }
    }
    let ir_text: String = block
        .text
        .lines()
        .skip(1)
        .map(|l| format!("{l}\n"))
        .collect();
    Reproducer::new(ir_text, flags).map_err(|e| malformed(&e.to_string()))
}

fn parse_golden_block(block: &Block) -> Result<GoldenPatch, RecordError> {
    let malformed = |reason: &str| {
        RecordError::MalformedBlock("GoldenPatch", reason.to_string())
    };
    if block.lang != "diff" {
        return Err(malformed(&format!("expected diff fence, got {:?}", block.lang)));
    }
    let mut author = None;
    let mut message = String::new();
    let mut diff_start = None;
    for (idx, line) in block.text.lines().enumerate() {
        if idx == 0 {
            author = Some(
                line.strip_prefix("Author: ")
                    .ok_or_else(|| malformed("first line must be `Author: ...`"))?
                    .to_string(),
            );
            continue;
        }
        if line.starts_with("diff --git") || line.starts_with("--- ") {
            diff_start = Some(idx);
            break;
        }
        message.push_str(line);
        message.push('\n');
    }
    let author = author.ok_or_else(|| malformed("empty block"))?;
    let diff_start = diff_start.ok_or_else(|| malformed("no diff body"))?;
    let diff_text: String = block
        .text
        .lines()
        .skip(diff_start)
        .map(|l| format!("{l}\n"))
        .collect();
    GoldenPatch::new(diff_text, author, message).map_err(|e| malformed(&e.to_string()))
}

/// Parses one issue record. Field order is free; the canonical renderer's
/// order is what `render_issue_record` emits.
pub fn parse_issue_record(text: &str) -> Result<Issue, RecordError> {
    let raw = split_raw(text)?;
    let scalar = |name: &'static str| -> Result<&str, RecordError> {
        raw.scalars
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
            .ok_or(RecordError::MissingField(name))
    };

    let bug_type = match scalar("BugType")? {
        "Crash" => BugType::Crash,
        "Miscompilation" => BugType::Miscompilation,
        other => return Err(RecordError::UnknownBugType(other.to_string())),
    };
    let base_commit = CommitId::new(scalar("BaseCommit")?)
        .map_err(|e| invalid("BaseCommit", e))?;
    let fixing_commit = CommitId::new(scalar("FixingCommit")?)
        .map_err(|e| invalid("FixingCommit", e))?;
    let id: u64 = scalar("IssueID")?
        .parse()
        .map_err(|e| invalid("IssueID", e))?;
    let timestamp: DateTime<Utc> = scalar("IssueTimestamp")?
        .parse()
        .map_err(|e| invalid("IssueTimestamp", e))?;
    let author = scalar("IssueAuthor")?.to_string();
    let title = scalar("IssueTitle")?.to_string();
    let labels: Vec<String> = scalar("IssueLabels")?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let component = match raw.scalars.iter().find(|(k, _)| k == "Component") {
        Some((_, v)) => v.clone(),
        None => Issue::component_from_labels(&labels).unwrap_or_default(),
    };

    let mut reproducers = Vec::new();
    let mut golden = None;
    let mut body = None;
    for (key, block) in &raw.blocks {
        match key.as_str() {
            "Reproducers" => reproducers.push(parse_reproducer_block(block)?),
            "GoldenPatch" => golden = Some(parse_golden_block(block)?),
            "IssueBody" => body = Some(block.text.clone()),
            _ => {}
        }
    }
    if reproducers.is_empty() {
        return Err(RecordError::MissingField("Reproducers"));
    }
    let golden_patch = golden.ok_or(RecordError::MissingField("GoldenPatch"))?;
    let body = body.ok_or(RecordError::MissingField("IssueBody"))?;

    let issue = Issue {
        id,
        bug_type,
        base_commit,
        fixing_commit,
        reproducers,
        golden_patch,
        component,
        timestamp,
        title,
        body,
        labels,
        author,
    };
    issue.validate().map_err(|e| match e {
        ModelError::NonPositiveId => invalid("IssueID", e),
        ModelError::SameCommits => invalid("FixingCommit", e),
        ModelError::ExcludedLabel(_) => invalid("IssueLabels", e),
        other => invalid("record", other),
    })?;
    Ok(issue)
}

fn push_block(out: &mut String, key: &str, lang: &str, body: &str) {
    out.push_str(key);
    out.push_str(":\n```");
    out.push_str(lang);
    out.push('\n');
    out.push_str(body);
    if !body.is_empty() && !body.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```\n");
}

/// Canonical record text for an issue.
pub fn render_issue_record(issue: &Issue) -> String {
    let mut out = String::new();
    out.push_str(&format!("BugType: {}\n", issue.bug_type));
    out.push_str(&format!("Component: {}\n", issue.component));
    out.push_str(&format!("BaseCommit: {}\n", issue.base_commit));
    out.push_str(&format!("FixingCommit: {}\n", issue.fixing_commit));
    out.push_str("Reproducers:\n");
    for rep in &issue.reproducers {
        out.push_str("```llvm\n");
        out.push_str(&rep.run_line());
        out.push('\n');
        out.push_str(&rep.ir_text);
        if !rep.ir_text.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("```\n");
    }
    let mut golden_body = format!("Author: {}\n", issue.golden_patch.author_line);
    golden_body.push_str(&issue.golden_patch.message);
    golden_body.push_str(&issue.golden_patch.diff_text);
    push_block(&mut out, "GoldenPatch", "diff", &golden_body);
    out.push_str(&format!("IssueID: {}\n", issue.id));
    out.push_str(&format!(
        "IssueTimestamp: {}\n",
        issue.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true)
    ));
    out.push_str(&format!("IssueAuthor: {}\n", issue.author));
    out.push_str(&format!("IssueLabels: {}\n", issue.labels.join(", ")));
    out.push_str(&format!("IssueTitle: {}\n", issue.title));
    push_block(&mut out, "IssueBody", "plain", &issue.body);
    out
}
