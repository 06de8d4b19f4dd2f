//! Function spans for C/C++ sources: signature detection plus balanced-brace
//! scanning. Deliberately not a parser; it tracks comments, string literals,
//! preprocessor lines, and namespace/class scopes, which is enough to
//! attribute diff lines and resolve symbols in optimizer sources.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

const SOURCE_EXTENSIONS: &[&str] = &["c", "cc", "cpp", "cxx", "h", "hh", "hpp"];

const CONTROL_KEYWORDS: &[&str] = &[
    "if", "else", "for", "while", "switch", "do", "catch", "return", "sizeof", "new", "delete",
    "try", "case", "default",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    /// Name qualified with the enclosing namespaces and classes.
    pub name: String,
    /// The source line holding the opening parenthesis, trimmed.
    pub signature: String,
    /// 1-based first line of the definition (return type / template line).
    pub start: u64,
    /// 1-based line of the closing brace.
    pub end: u64,
}

#[derive(Debug, Clone, Default)]
pub struct FunctionIndex {
    files: BTreeMap<String, Vec<FunctionSpan>>,
}

impl FunctionIndex {
    /// Index with no files: resolution relies on hunk headings only.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Scans every C/C++ source under `root`, keyed by /-separated relative
    /// path.
    pub fn build(root: &Path) -> io::Result<Self> {
        let mut index = Self::default();
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(io::Error::other)?;
            if !entry.file_type().is_file() {
                continue;
            }
            let ext = entry
                .path()
                .extension()
                .and_then(|e| e.to_str())
                .unwrap_or("");
            if !SOURCE_EXTENSIONS.contains(&ext) {
                continue;
            }
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walkdir yields children of root")
                .to_string_lossy()
                .replace('\\', "/");
            let Ok(text) = std::fs::read_to_string(entry.path()) else {
                continue;
            };
            index.insert_file(rel, scan_source(&text));
        }
        Ok(index)
    }

    pub fn insert_file(&mut self, path: impl Into<String>, spans: Vec<FunctionSpan>) {
        self.files.insert(path.into(), spans);
    }

    pub fn file_spans(&self, path: &str) -> Option<&[FunctionSpan]> {
        self.files.get(path).map(|v| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Function owning `line` (1-based) of `file`. When the file is not
    /// indexed, falls back to extracting a name from the hunk heading.
    pub fn resolve(&self, file: &str, line: u64, heading: Option<&str>) -> Option<String> {
        match self.files.get(file) {
            Some(spans) => spans
                .iter()
                .find(|s| s.start <= line && line <= s.end)
                .map(|s| s.name.clone()),
            None => heading.and_then(function_name_from_heading),
        }
    }

    /// Finds a definition by name. Exact match first, then `::`-segment
    /// suffix matching in either direction, longest overlap preferred.
    pub fn lookup_symbol(&self, query: &str) -> Option<(&str, &FunctionSpan)> {
        let query = query.split('(').next().unwrap_or(query).trim();
        if query.is_empty() {
            return None;
        }
        let q_segs: Vec<&str> = query.split("::").collect();

        let mut best: Option<(usize, &str, &FunctionSpan)> = None;
        for (file, spans) in &self.files {
            for span in spans {
                if span.name == query {
                    return Some((file.as_str(), span));
                }
                let s_segs: Vec<&str> = span.name.split("::").collect();
                let overlap = if ends_with(&s_segs, &q_segs) || ends_with(&q_segs, &s_segs) {
                    q_segs.len().min(s_segs.len())
                } else {
                    continue;
                };
                if best.map(|(b, _, _)| overlap > b).unwrap_or(true) {
                    best = Some((overlap, file.as_str(), span));
                }
            }
        }
        best.map(|(_, f, s)| (f, s))
    }
}

fn ends_with(outer: &[&str], tail: &[&str]) -> bool {
    tail.len() <= outer.len() && outer[outer.len() - tail.len()..] == *tail
}

/// Pulls a function name out of a hunk section heading, e.g.
/// `InstructionCost BoUpSLP::getEntryCost(const TreeEntry *E,` gives
/// `BoUpSLP::getEntryCost`.
pub fn function_name_from_heading(heading: &str) -> Option<String> {
    let paren = heading.find('(')?;
    let head = &heading[..paren];
    let name: String = head
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == ':' || *c == '~')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let name = name.trim_matches(':').to_string();
    let first = name.chars().next()?;
    if first.is_ascii_alphabetic() || first == '_' || first == '~' {
        Some(name)
    } else {
        None
    }
}

#[derive(Debug)]
enum Scope {
    Namespace(String),
    Class(String),
    Function { name: String, start: u64, signature: String },
    Anon,
}

/// Scans one source file. Lines are 1-based. Raw string literals and
/// operator overloads are not recognized; spans for them are simply absent.
pub fn scan_source(text: &str) -> Vec<FunctionSpan> {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut spans = Vec::new();
    let mut scopes: Vec<Scope> = Vec::new();

    let mut in_block_comment = false;
    let mut buffer = String::new();
    let mut buffer_start: u64 = 0;

    for (line_idx, raw_line) in lines.iter().enumerate() {
        let line_no = line_idx as u64 + 1;
        let line = raw_line.trim_end_matches('\r');

        if !in_block_comment {
            let t = line.trim_start();
            if t.starts_with('#') {
                continue; // preprocessor line; continuations are rare enough to ignore
            }
        }

        let bytes = line.as_bytes();
        let mut i = 0usize;
        let mut in_string = false;
        let mut in_char = false;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if in_block_comment {
                if c == '*' && bytes.get(i + 1) == Some(&b'/') {
                    in_block_comment = false;
                    i += 2;
                    continue;
                }
                i += 1;
                continue;
            }
            if in_string || in_char {
                if c == '\\' {
                    i += 2;
                    continue;
                }
                if (in_string && c == '"') || (in_char && c == '\'') {
                    in_string = false;
                    in_char = false;
                }
                i += 1;
                continue;
            }
            match c {
                '/' if bytes.get(i + 1) == Some(&b'/') => break, // line comment
                '/' if bytes.get(i + 1) == Some(&b'*') => {
                    in_block_comment = true;
                    i += 2;
                    continue;
                }
                '"' => in_string = true,
                '\'' => in_char = true,
                '{' => {
                    let statement_level = !matches!(
                        scopes.last(),
                        Some(Scope::Function { .. }) | Some(Scope::Anon)
                    );
                    if statement_level {
                        scopes.push(classify_statement(&buffer, buffer_start, &lines, &scopes));
                        buffer.clear();
                    } else {
                        scopes.push(Scope::Anon);
                    }
                    i += 1;
                    continue;
                }
                '}' => {
                    if let Some(scope) = scopes.pop() {
                        if let Scope::Function {
                            name,
                            start,
                            signature,
                        } = scope
                        {
                            spans.push(FunctionSpan {
                                name,
                                signature,
                                start,
                                end: line_no,
                            });
                        }
                    }
                    buffer.clear();
                    i += 1;
                    continue;
                }
                ';' => {
                    let statement_level = !matches!(
                        scopes.last(),
                        Some(Scope::Function { .. }) | Some(Scope::Anon)
                    );
                    if statement_level {
                        buffer.clear();
                    }
                    i += 1;
                    continue;
                }
                _ => {}
            }
            let statement_level =
                !matches!(scopes.last(), Some(Scope::Function { .. }) | Some(Scope::Anon));
            if statement_level && !(buffer.is_empty() && c.is_whitespace()) {
                if buffer.is_empty() {
                    buffer_start = line_no;
                }
                buffer.push(c);
            }
            i += 1;
        }
        // newline inside an accumulating statement
        let statement_level =
            !matches!(scopes.last(), Some(Scope::Function { .. }) | Some(Scope::Anon));
        if statement_level && !buffer.is_empty() {
            buffer.push('\n');
        }
    }

    spans.sort_by_key(|s| s.start);
    spans
}

/// Decides what kind of scope an opening brace introduces, given the
/// statement text accumulated before it.
fn classify_statement(buffer: &str, buffer_start: u64, lines: &[&str], scopes: &[Scope]) -> Scope {
    let stmt = buffer.trim();
    if stmt.starts_with("namespace") {
        let name = stmt
            .split_whitespace()
            .nth(1)
            .unwrap_or("")
            .trim_end_matches("::");
        return Scope::Namespace(name.to_string());
    }
    for kw in ["class ", "struct ", "union "] {
        if let Some(rest) = stmt.strip_prefix(kw) {
            // `struct X {` or `class X : public Y {`; skip variable definitions
            // like `struct X x = {` (those carry an '=')
            if !stmt.contains('=') && !stmt.contains('(') {
                let name: String = rest
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                    .collect();
                if !name.is_empty() {
                    return Scope::Class(name);
                }
                return Scope::Anon;
            }
        }
    }
    if stmt.starts_with("enum") || stmt.starts_with("extern") {
        return Scope::Anon;
    }

    let Some(paren) = stmt.find('(') else {
        return Scope::Anon;
    };
    // an unbalanced statement means the brace sits inside an argument list
    if stmt.matches('(').count() != stmt.matches(')').count() {
        return Scope::Anon;
    }
    // `int xs[] = {` and lambdas never look like `name(`
    let name: String = stmt[..paren]
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == ':' || *c == '~')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let name = name.trim_matches(':').to_string();
    let Some(first) = name.chars().next() else {
        return Scope::Anon;
    };
    if !(first.is_ascii_alphabetic() || first == '_' || first == '~') {
        return Scope::Anon;
    }
    let base = name.split("::").next().unwrap_or(&name);
    if CONTROL_KEYWORDS.contains(&base) || CONTROL_KEYWORDS.contains(&name.as_str()) {
        return Scope::Anon;
    }
    // assignment before the call-like parens means an initializer, not a body
    if stmt[..paren].contains('=') {
        return Scope::Anon;
    }

    let mut qualified = String::new();
    for scope in scopes {
        match scope {
            Scope::Namespace(n) | Scope::Class(n) if !n.is_empty() => {
                qualified.push_str(n);
                qualified.push_str("::");
            }
            _ => {}
        }
    }
    qualified.push_str(&name);

    // the signature line is the one carrying the opening parenthesis
    let newlines_before_paren = stmt[..paren].matches('\n').count() as u64;
    let sig_line = buffer_start + newlines_before_paren;
    let signature = lines
        .get(sig_line as usize - 1)
        .map(|l| l.trim_end().to_string())
        .unwrap_or_default();

    Scope::Function {
        name: qualified,
        start: buffer_start,
        signature,
    }
}
