//! Parse and render unified diffs, including the git preamble lines found in
//! commit patches (`diff --git`, `index`, mode lines). Hunk bodies are kept
//! byte-faithful; rendering emits a normalized header form.

use super::{DiffError, FilePatch, Hunk, LineKind, UnifiedDiff, DEV_NULL};

/// Lines that may precede the `---`/`+++` pair of a file entry in git output.
fn is_git_preamble(line: &str) -> bool {
    line.starts_with("diff --git ")
        || line.starts_with("index ")
        || line.starts_with("new file mode")
        || line.starts_with("deleted file mode")
        || line.starts_with("old mode")
        || line.starts_with("new mode")
        || line.starts_with("similarity index")
        || line.starts_with("dissimilarity index")
        || line.starts_with("rename from")
        || line.starts_with("rename to")
        || line.starts_with("copy from")
        || line.starts_with("copy to")
}

fn strip_header_path(raw: &str) -> String {
    // Drop a trailing tab-separated timestamp, then the a/ or b/ prefix.
    let path = raw.split('\t').next().unwrap_or(raw).trim_end();
    if path == DEV_NULL {
        return path.to_string();
    }
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path)
        .to_string()
}

fn parse_hunk_header(line: &str) -> Option<(u64, u64, u64, u64, Option<String>)> {
    let rest = line.strip_prefix("@@ -")?;
    let close = rest.find(" @@")?;
    let (ranges, tail) = rest.split_at(close);
    let tail = &tail[3..];
    let heading = tail
        .strip_prefix(' ')
        .filter(|h| !h.is_empty())
        .map(|h| h.to_string());

    let mut parts = ranges.splitn(2, " +");
    let old = parts.next()?;
    let new = parts.next()?;
    let parse_range = |s: &str| -> Option<(u64, u64)> {
        match s.split_once(',') {
            Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    };
    let (old_start, old_len) = parse_range(old)?;
    let (new_start, new_len) = parse_range(new)?;
    Some((old_start, old_len, new_start, new_len, heading))
}

/// Parses one or more file patches in unified format.
///
/// Errors carry 1-based line numbers. Input that is not a diff at all fails
/// with `MalformedHeader(1)`; a hunk whose body does not satisfy its declared
/// lengths fails with `HunkArithmeticMismatch`.
pub fn parse_unified_diff(text: &str) -> Result<UnifiedDiff, DiffError> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    // split leaves a phantom empty element after a trailing newline
    if text.ends_with('\n') {
        lines.pop();
    }
    let mut i = 0usize;
    let mut files = Vec::new();

    while i < lines.len() {
        let line = lines[i];
        if line.is_empty() && i + 1 == lines.len() {
            // trailing newline artifact
            break;
        }
        if is_git_preamble(line) {
            i += 1;
            continue;
        }
        if !line.starts_with("--- ") {
            return Err(DiffError::MalformedHeader(i + 1));
        }
        let old_path = strip_header_path(&line[4..]);
        i += 1;
        let new_line = lines.get(i).copied().unwrap_or("");
        if !new_line.starts_with("+++ ") {
            return Err(DiffError::MalformedHeader(i + 1));
        }
        let new_path = strip_header_path(&new_line[4..]);
        i += 1;

        let file_label = if new_path == DEV_NULL {
            old_path.clone()
        } else {
            new_path.clone()
        };
        let mut hunks = Vec::new();
        while i < lines.len() && lines[i].starts_with("@@ ") {
            let hunk_index = hunks.len();
            let (old_start, old_len, new_start, new_len, section_heading) =
                parse_hunk_header(lines[i]).ok_or(DiffError::MalformedHeader(i + 1))?;
            i += 1;

            let mut body = Vec::new();
            let mut no_newline_after = Vec::new();
            let mut old_seen = 0u64;
            let mut new_seen = 0u64;
            let mismatch = DiffError::HunkArithmeticMismatch {
                file: file_label.clone(),
                hunk_index,
            };
            while old_seen < old_len || new_seen < new_len {
                let Some(&raw) = lines.get(i) else {
                    return Err(mismatch);
                };
                let (kind, text) = if raw.is_empty() {
                    // some tools emit blank context lines without the leading space
                    (LineKind::Context, "")
                } else {
                    match raw.as_bytes()[0] {
                        b' ' => (LineKind::Context, &raw[1..]),
                        b'-' => (LineKind::Removed, &raw[1..]),
                        b'+' => (LineKind::Added, &raw[1..]),
                        b'\\' => {
                            if body.is_empty() {
                                return Err(mismatch);
                            }
                            no_newline_after.push(body.len() - 1);
                            i += 1;
                            continue;
                        }
                        _ => return Err(mismatch),
                    }
                };
                match kind {
                    LineKind::Context => {
                        if old_seen >= old_len || new_seen >= new_len {
                            return Err(mismatch);
                        }
                        old_seen += 1;
                        new_seen += 1;
                    }
                    LineKind::Removed => {
                        if old_seen >= old_len {
                            return Err(mismatch);
                        }
                        old_seen += 1;
                    }
                    LineKind::Added => {
                        if new_seen >= new_len {
                            return Err(mismatch);
                        }
                        new_seen += 1;
                    }
                }
                body.push((kind, text.to_string()));
                i += 1;
            }
            // a trailing no-newline marker may follow the last body line
            while i < lines.len() && lines[i].starts_with('\\') {
                if body.is_empty() {
                    return Err(mismatch);
                }
                no_newline_after.push(body.len() - 1);
                i += 1;
            }

            hunks.push(Hunk {
                old_start,
                old_len,
                new_start,
                new_len,
                section_heading,
                lines: body,
                no_newline_after,
            });
        }
        if hunks.is_empty() {
            return Err(DiffError::MalformedHeader(i + 1));
        }
        files.push(FilePatch {
            old_path,
            new_path,
            hunks,
        });
    }

    if files.is_empty() {
        return Err(DiffError::MalformedHeader(1));
    }
    Ok(UnifiedDiff { files })
}

/// Renders the canonical text form: git-style preamble, explicit hunk lengths,
/// bodies byte-identical to what was parsed.
pub fn render_unified_diff(diff: &UnifiedDiff) -> String {
    let mut out = String::new();
    for fp in &diff.files {
        let name = fp.effective_path();
        out.push_str(&format!("diff --git a/{name} b/{name}\n"));
        if fp.is_creation() {
            out.push_str("new file mode 100644\n");
            out.push_str("--- /dev/null\n");
            out.push_str(&format!("+++ b/{}\n", fp.new_path));
        } else if fp.is_deletion() {
            out.push_str("deleted file mode 100644\n");
            out.push_str(&format!("--- a/{}\n", fp.old_path));
            out.push_str("+++ /dev/null\n");
        } else {
            out.push_str(&format!("--- a/{}\n", fp.old_path));
            out.push_str(&format!("+++ b/{}\n", fp.new_path));
        }
        for hunk in &fp.hunks {
            let heading = hunk
                .section_heading
                .as_deref()
                .map(|h| format!(" {h}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "@@ -{},{} +{},{} @@{heading}\n",
                hunk.old_start, hunk.old_len, hunk.new_start, hunk.new_len
            ));
            for (idx, (kind, text)) in hunk.lines.iter().enumerate() {
                let marker = match kind {
                    LineKind::Context => ' ',
                    LineKind::Removed => '-',
                    LineKind::Added => '+',
                };
                out.push(marker);
                out.push_str(text);
                out.push('\n');
                if hunk.no_newline_after.contains(&idx) {
                    out.push_str("\\ No newline at end of file\n");
                }
            }
        }
    }
    out
}
