//! Crash stack trace parsing and noise filtering.
//!
//! Compiler crash dumps bury the interesting frames between signal plumbing
//! at the top and pass-manager dispatch plus process startup at the bottom.
//! The filter drops both ends so the first retained frame is the crash site
//! inside the transform itself.

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frame symbols matching any of these patterns are dropped. Entries are
/// regular expressions matched against the demangled symbol text.
pub const DEFAULT_FRAME_DENYLIST: &[&str] = &[
    r"PrintStackTrace",
    r"RunSignalHandlers",
    r"SignalHandler",
    r"^__restore_rt",
    r"^raise\b",
    r"^gsignal\b",
    r"^abort\b",
    r"__assert",
    r"^__libc",
    r"^_start\b",
    r"^main\b",
    r"PassManager",
    r"PassModel",
    r"PassAdaptor",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub index: u32,
    pub symbol: String,
    /// `file:line[:col]` when the dump carried one.
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackTrace {
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("every frame of the trace matched the denylist")]
pub struct NoFramesRetained;

/// Extracts ` #N 0xADDR symbol [file:line:col]` frames from crash output.
/// Returns `None` when no frame lines are present at all.
pub fn parse_stack_trace(text: &str) -> Option<StackTrace> {
    let frame_re = Regex::new(
        r"(?m)^\s*#(\d+)\s+(?:0x[0-9a-fA-F]+\s+)?(.*?)(?:\s+([^\s()]+:\d+(?::\d+)?))?\s*$",
    )
    .expect("frame regex compiles");
    let mut frames = Vec::new();
    for cap in frame_re.captures_iter(text) {
        let index: u32 = cap[1].parse().ok()?;
        let symbol = cap[2].trim().to_string();
        if symbol.is_empty() {
            continue;
        }
        frames.push(Frame {
            index,
            symbol,
            location: cap.get(3).map(|m| m.as_str().to_string()),
        });
    }
    if frames.is_empty() {
        None
    } else {
        Some(StackTrace { frames })
    }
}

/// Keeps frames whose symbol matches none of the denylist patterns,
/// preserving dump order. An empty result is an error so the caller can fall
/// back to the unfiltered trace explicitly.
pub fn filter_stack_trace(
    trace: &StackTrace,
    denylist: &[String],
) -> Result<StackTrace, NoFramesRetained> {
    let patterns: Vec<Regex> = denylist
        .iter()
        .filter_map(|p| Regex::new(p).ok())
        .collect();
    let frames: Vec<Frame> = trace
        .frames
        .iter()
        .filter(|f| !patterns.iter().any(|re| re.is_match(&f.symbol)))
        .cloned()
        .collect();
    if frames.is_empty() {
        Err(NoFramesRetained)
    } else {
        Ok(StackTrace { frames })
    }
}

/// Renders a trace back to indented frame lines for reports and prompts.
pub fn render_stack_trace(trace: &StackTrace) -> String {
    let mut out = String::new();
    for f in &trace.frames {
        out.push_str(&format!(" #{} {}", f.index, f.symbol));
        if let Some(loc) = &f.location {
            out.push(' ');
            out.push_str(loc);
        }
        out.push('\n');
    }
    out
}
