//! Build unified diffs from file contents and apply them back to a tree.
//! Generation is exact (longest common subsequence on lines, with common
//! prefix/suffix trimming); application is strict, with no context fuzz.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;
use walkdir::WalkDir;

use super::{FilePatch, FunctionIndex, Hunk, LineKind, UnifiedDiff, DEV_NULL};

const CONTEXT: usize = 3;

#[derive(Debug, Error)]
pub enum ApplyError {
    #[error("{file}: file not found")]
    MissingFile { file: String },
    #[error("{file}: already exists, cannot create")]
    AlreadyExists { file: String },
    #[error("{file}: hunk {hunk_index} does not match current content")]
    ContextMismatch { file: String, hunk_index: usize },
    #[error("{file}: hunks overlap or are out of order")]
    Overlap { file: String },
    #[error("io error on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: io::Error,
    },
}

/// Splits into lines without terminators; reports whether the content ended
/// with a final newline. Empty content counts as newline-terminated.
fn split_lines(text: &str) -> (Vec<&str>, bool) {
    if text.is_empty() {
        return (Vec::new(), true);
    }
    let ends_nl = text.ends_with('\n');
    let mut lines: Vec<&str> = text.split('\n').collect();
    if ends_nl {
        lines.pop();
    }
    (lines, ends_nl)
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Equal(usize),
    Change(usize, usize), // removed, added
}

fn edit_script(old: &[&str], new: &[&str]) -> Vec<Op> {
    let mut prefix = 0;
    while prefix < old.len() && prefix < new.len() && old[prefix] == new[prefix] {
        prefix += 1;
    }
    let mut suffix = 0;
    while suffix < old.len() - prefix
        && suffix < new.len() - prefix
        && old[old.len() - 1 - suffix] == new[new.len() - 1 - suffix]
    {
        suffix += 1;
    }
    let mut ops = Vec::new();
    if prefix > 0 {
        ops.push(Op::Equal(prefix));
    }
    ops.extend(lcs_ops(
        &old[prefix..old.len() - suffix],
        &new[prefix..new.len() - suffix],
    ));
    if suffix > 0 {
        ops.push(Op::Equal(suffix));
    }
    coalesce(ops)
}

fn lcs_ops(old: &[&str], new: &[&str]) -> Vec<Op> {
    let n = old.len();
    let m = new.len();
    if n == 0 && m == 0 {
        return Vec::new();
    }
    if n == 0 || m == 0 || n.saturating_mul(m) > 4_000_000 {
        // degenerate or oversized middle: one wholesale replacement
        return vec![Op::Change(n, m)];
    }
    // lcs[i][j] = LCS length of old[i..], new[j..]
    let mut lcs = vec![0u32; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[at(i, j)] = if old[i] == new[j] {
                lcs[at(i + 1, j + 1)] + 1
            } else {
                lcs[at(i + 1, j)].max(lcs[at(i, j + 1)])
            };
        }
    }
    let mut ops = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut removed = 0usize;
    let mut added = 0usize;
    while i < n && j < m {
        if old[i] == new[j] && lcs[at(i, j)] == lcs[at(i + 1, j + 1)] + 1 {
            if removed > 0 || added > 0 {
                ops.push(Op::Change(removed, added));
                removed = 0;
                added = 0;
            }
            ops.push(Op::Equal(1));
            i += 1;
            j += 1;
        } else if lcs[at(i + 1, j)] >= lcs[at(i, j + 1)] {
            removed += 1;
            i += 1;
        } else {
            added += 1;
            j += 1;
        }
    }
    removed += n - i;
    added += m - j;
    if removed > 0 || added > 0 {
        ops.push(Op::Change(removed, added));
    }
    coalesce(ops)
}

fn coalesce(ops: Vec<Op>) -> Vec<Op> {
    let mut out: Vec<Op> = Vec::new();
    for op in ops {
        match (out.last_mut(), op) {
            (Some(Op::Equal(a)), Op::Equal(b)) => *a += b,
            (Some(Op::Change(r, a)), Op::Change(r2, a2)) => {
                *r += r2;
                *a += a2;
            }
            _ => out.push(op),
        }
    }
    out
}

/// One line of the linearized edit stream.
struct StreamLine {
    kind: LineKind,
    text: String,
    old_pos: usize, // 0-based old position; for added lines, the insertion point
    new_pos: usize,
    missing_nl: bool,
}

fn whole_file_patch(path: &str, lines: &[&str], ends_nl: bool, create: bool) -> FilePatch {
    let kind = if create {
        LineKind::Added
    } else {
        LineKind::Removed
    };
    let mut body: Vec<(LineKind, String)> =
        lines.iter().map(|l| (kind, l.to_string())).collect();
    if body.is_empty() {
        body.push((kind, String::new()));
    }
    let mut no_newline_after = Vec::new();
    if !ends_nl {
        no_newline_after.push(body.len() - 1);
    }
    let len = body.len() as u64;
    let (old_path, new_path, hunk) = if create {
        (
            DEV_NULL.to_string(),
            path.to_string(),
            Hunk {
                old_start: 0,
                old_len: 0,
                new_start: 1,
                new_len: len,
                section_heading: None,
                lines: body,
                no_newline_after,
            },
        )
    } else {
        (
            path.to_string(),
            DEV_NULL.to_string(),
            Hunk {
                old_start: 1,
                old_len: len,
                new_start: 0,
                new_len: 0,
                section_heading: None,
                lines: body,
                no_newline_after,
            },
        )
    };
    FilePatch {
        old_path,
        new_path,
        hunks: vec![hunk],
    }
}

/// Diff of two file contents. Returns `None` when the contents are equal.
/// Pass [`DEV_NULL`] as a path for creations/deletions. The optional function
/// index supplies hunk headings for the file's path.
pub fn diff_file_contents(
    old_path: &str,
    new_path: &str,
    old: &str,
    new: &str,
    index: Option<&FunctionIndex>,
) -> Option<FilePatch> {
    if old_path == DEV_NULL {
        let (lines, nl) = split_lines(new);
        return Some(whole_file_patch(new_path, &lines, nl, true));
    }
    if new_path == DEV_NULL {
        let (lines, nl) = split_lines(old);
        return Some(whole_file_patch(old_path, &lines, nl, false));
    }
    if old == new {
        return None;
    }

    let (old_lines, old_nl) = split_lines(old);
    let (new_lines, new_nl) = split_lines(new);
    let script = edit_script(&old_lines, &new_lines);

    let mut stream = Vec::new();
    {
        let (mut op_old, mut op_new) = (0usize, 0usize);
        for op in &script {
            match *op {
                Op::Equal(k) => {
                    for _ in 0..k {
                        let old_missing = op_old + 1 == old_lines.len() && !old_nl;
                        let new_missing = op_new + 1 == new_lines.len() && !new_nl;
                        if old_missing == new_missing {
                            stream.push(StreamLine {
                                kind: LineKind::Context,
                                text: old_lines[op_old].to_string(),
                                old_pos: op_old,
                                new_pos: op_new,
                                missing_nl: old_missing,
                            });
                        } else {
                            // Same text but only one side ends the file without
                            // a newline, so the line is not actually shared.
                            stream.push(StreamLine {
                                kind: LineKind::Removed,
                                text: old_lines[op_old].to_string(),
                                old_pos: op_old,
                                new_pos: op_new,
                                missing_nl: old_missing,
                            });
                            stream.push(StreamLine {
                                kind: LineKind::Added,
                                text: new_lines[op_new].to_string(),
                                old_pos: op_old + 1,
                                new_pos: op_new,
                                missing_nl: new_missing,
                            });
                        }
                        op_old += 1;
                        op_new += 1;
                    }
                }
                Op::Change(r, a) => {
                    for _ in 0..r {
                        stream.push(StreamLine {
                            kind: LineKind::Removed,
                            text: old_lines[op_old].to_string(),
                            old_pos: op_old,
                            new_pos: op_new,
                            missing_nl: op_old + 1 == old_lines.len() && !old_nl,
                        });
                        op_old += 1;
                    }
                    for _ in 0..a {
                        stream.push(StreamLine {
                            kind: LineKind::Added,
                            text: new_lines[op_new].to_string(),
                            old_pos: op_old,
                            new_pos: op_new,
                            missing_nl: op_new + 1 == new_lines.len() && !new_nl,
                        });
                        op_new += 1;
                    }
                }
            }
        }
    }

    let change_idx: Vec<usize> = stream
        .iter()
        .enumerate()
        .filter(|(_, l)| !matches!(l.kind, LineKind::Context))
        .map(|(i, _)| i)
        .collect();
    if change_idx.is_empty() {
        // newline-status mismatches were materialized as remove/add pairs
        // above, so an all-context stream means the files are equal
        return None;
    }

    // merge context windows over stream indices
    let mut windows: Vec<(usize, usize)> = Vec::new(); // inclusive stream ranges
    for &c in &change_idx {
        let lo = c.saturating_sub(CONTEXT);
        let hi = (c + CONTEXT).min(stream.len() - 1);
        match windows.last_mut() {
            Some((_, prev_hi)) if lo <= *prev_hi + 1 => *prev_hi = (*prev_hi).max(hi),
            _ => windows.push((lo, hi)),
        }
    }

    let mut hunks = Vec::new();
    for (lo, hi) in windows {
        let slice = &stream[lo..=hi];
        let mut lines = Vec::with_capacity(slice.len());
        let mut marks = Vec::new();
        for l in slice {
            lines.push((l.kind, l.text.clone()));
            if l.missing_nl {
                marks.push(lines.len() - 1);
            }
        }
        let old_len = slice
            .iter()
            .filter(|l| !matches!(l.kind, LineKind::Added))
            .count() as u64;
        let new_len = slice
            .iter()
            .filter(|l| !matches!(l.kind, LineKind::Removed))
            .count() as u64;
        let old_start = match slice.iter().find(|l| !matches!(l.kind, LineKind::Added)) {
            Some(l) => l.old_pos as u64 + 1,
            None => slice[0].old_pos as u64, // pure insertion: anchor after old_pos
        };
        let new_start = match slice.iter().find(|l| !matches!(l.kind, LineKind::Removed)) {
            Some(l) => l.new_pos as u64 + 1,
            None => slice[0].new_pos as u64,
        };
        let heading_anchor = slice[0].old_pos;
        hunks.push(Hunk {
            old_start,
            old_len,
            new_start,
            new_len,
            section_heading: heading_for(old_path, &old_lines, heading_anchor, index),
            lines,
            no_newline_after: marks,
        });
    }

    Some(FilePatch {
        old_path: old_path.into(),
        new_path: new_path.into(),
        hunks,
    })
}

/// Heading for a hunk whose first line sits at 0-based `before_line` in the
/// old content: preferably the signature of the enclosing indexed function,
/// otherwise the nearest preceding declaration-looking line.
fn heading_for(
    path: &str,
    old_lines: &[&str],
    before_line: usize,
    index: Option<&FunctionIndex>,
) -> Option<String> {
    if let Some(idx) = index {
        if let Some(spans) = idx.file_spans(path) {
            let line = before_line as u64 + 1;
            if let Some(span) = spans
                .iter()
                .rev()
                .find(|s| s.start <= line)
            {
                return Some(span.signature.clone());
            }
        }
    }
    for i in (0..before_line.min(old_lines.len())).rev() {
        let line = old_lines[i];
        let first = line.chars().next().unwrap_or(' ');
        if (first.is_ascii_alphabetic() || first == '_')
            && !line.starts_with("namespace")
            && !line.starts_with("using ")
            && !line.starts_with("extern ")
            && !line.starts_with("#")
        {
            return Some(line.trim_end().to_string());
        }
    }
    None
}

/// Diff of two directory trees (UTF-8 files only), sorted by path.
pub fn diff_trees(
    old_root: &Path,
    new_root: &Path,
    index: Option<&FunctionIndex>,
) -> io::Result<UnifiedDiff> {
    let collect = |root: &Path| -> io::Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        if !root.exists() {
            return Ok(map);
        }
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(io::Error::other)?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walkdir yields children of root")
                .to_string_lossy()
                .replace('\\', "/");
            let content = fs::read(entry.path())?;
            let Ok(text) = String::from_utf8(content) else {
                continue; // binary files are outside diff scope
            };
            map.insert(rel, text);
        }
        Ok(map)
    };
    let old_files = collect(old_root)?;
    let new_files = collect(new_root)?;

    let mut files = Vec::new();
    let empty = String::new();
    let mut paths: Vec<&String> = old_files.keys().chain(new_files.keys()).collect();
    paths.sort();
    paths.dedup();
    for path in paths {
        let fp = match (old_files.get(path), new_files.get(path)) {
            (Some(o), Some(n)) => diff_file_contents(path, path, o, n, index),
            (Some(o), None) => diff_file_contents(path, DEV_NULL, o, &empty, index),
            (None, Some(n)) => diff_file_contents(DEV_NULL, path, &empty, n, index),
            (None, None) => None,
        };
        if let Some(fp) = fp {
            files.push(fp);
        }
    }
    Ok(UnifiedDiff { files })
}

/// Applies a diff to files under `root`. Strict: every context and removed
/// line must match the current content exactly.
pub fn apply_diff(diff: &UnifiedDiff, root: &Path) -> Result<(), ApplyError> {
    for fp in &diff.files {
        let rel = fp.effective_path();
        let target = root.join(rel);
        let io_err = |source| ApplyError::Io {
            file: rel.to_string(),
            source,
        };
        let current = if target.is_file() {
            Some(fs::read_to_string(&target).map_err(io_err)?)
        } else {
            None
        };
        match apply_file_patch(fp, current.as_deref())? {
            Some(content) => {
                if let Some(parent) = target.parent() {
                    fs::create_dir_all(parent).map_err(io_err)?;
                }
                fs::write(&target, content).map_err(io_err)?;
            }
            None => fs::remove_file(&target).map_err(io_err)?,
        }
    }
    Ok(())
}

/// Applies a diff to an in-memory tree of path to content.
pub fn apply_diff_to_tree(
    diff: &UnifiedDiff,
    tree: &mut BTreeMap<String, String>,
) -> Result<(), ApplyError> {
    for fp in &diff.files {
        let rel = fp.effective_path();
        let current = tree.get(rel).cloned();
        match apply_file_patch(fp, current.as_deref())? {
            Some(content) => {
                tree.insert(rel.to_string(), content);
            }
            None => {
                tree.remove(rel);
            }
        }
    }
    Ok(())
}

/// Applies one file's hunks to its current content. `old` is `None` when the
/// file does not exist; a `None` result means the patch deletes the file.
pub fn apply_file_patch(
    fp: &FilePatch,
    old: Option<&str>,
) -> Result<Option<String>, ApplyError> {
    let rel = fp.effective_path();

    if fp.is_creation() {
        if old.is_some() {
            return Err(ApplyError::AlreadyExists { file: rel.into() });
        }
        let mut content = String::new();
        if let Some(h) = fp.hunks.first() {
            for (i, (kind, text)) in h.lines.iter().enumerate() {
                if !matches!(kind, LineKind::Added) {
                    return Err(ApplyError::ContextMismatch {
                        file: rel.into(),
                        hunk_index: 0,
                    });
                }
                content.push_str(text);
                if !h.no_newline_after.contains(&i) {
                    content.push('\n');
                }
            }
        }
        return Ok(Some(content));
    }

    let Some(current) = old else {
        return Err(ApplyError::MissingFile { file: rel.into() });
    };

    if fp.is_deletion() {
        let (cur_lines, _) = split_lines(current);
        let expect: Vec<&str> = fp
            .hunks
            .iter()
            .flat_map(|h| h.lines.iter())
            .filter(|(k, _)| matches!(k, LineKind::Removed))
            .map(|(_, t)| t.as_str())
            .collect();
        if cur_lines != expect {
            return Err(ApplyError::ContextMismatch {
                file: rel.into(),
                hunk_index: 0,
            });
        }
        return Ok(None);
    }

    let (cur_lines, ends_nl) = split_lines(current);
    let mut out: Vec<String> = Vec::with_capacity(cur_lines.len());
    let mut pos = 0usize;
    let mut out_ends_nl = true;

    let mut last_old_end = 0u64;
    for (hunk_index, hunk) in fp.hunks.iter().enumerate() {
        if hunk.old_len > 0 && hunk.old_start < last_old_end {
            return Err(ApplyError::Overlap { file: rel.into() });
        }
        last_old_end = hunk.old_start + hunk.old_len;

        let hunk_start = if hunk.old_len == 0 {
            hunk.old_start as usize // insert after this 1-based line
        } else {
            hunk.old_start.saturating_sub(1) as usize
        };
        if hunk_start < pos || hunk_start > cur_lines.len() {
            return Err(ApplyError::ContextMismatch {
                file: rel.into(),
                hunk_index,
            });
        }
        while pos < hunk_start {
            out.push(cur_lines[pos].to_string());
            pos += 1;
        }
        for (i, (kind, text)) in hunk.lines.iter().enumerate() {
            match kind {
                LineKind::Context | LineKind::Removed => {
                    if pos >= cur_lines.len() || cur_lines[pos] != text {
                        return Err(ApplyError::ContextMismatch {
                            file: rel.into(),
                            hunk_index,
                        });
                    }
                    if matches!(kind, LineKind::Context) {
                        out.push(text.clone());
                        out_ends_nl = !hunk.no_newline_after.contains(&i);
                    }
                    pos += 1;
                }
                LineKind::Added => {
                    out.push(text.clone());
                    out_ends_nl = !hunk.no_newline_after.contains(&i);
                }
            }
        }
    }
    while pos < cur_lines.len() {
        out.push(cur_lines[pos].to_string());
        pos += 1;
        out_ends_nl = ends_nl;
    }

    let mut content = out.join("\n");
    if out_ends_nl && !out.is_empty() {
        content.push('\n');
    }
    Ok(Some(content))
}
