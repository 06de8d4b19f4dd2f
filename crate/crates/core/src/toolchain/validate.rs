//! Output parsers for the translation validator and the regression runner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Counterexample extracted from a failed refinement check: the input
/// assignment plus the diverging source and target values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    /// `name = value` bindings from the `Example:` section, e.g.
    /// `("i16 %x", "#x0001 (1)")`.
    pub example_bindings: Vec<(String, String)>,
    pub source_value: String,
    pub target_value: String,
    /// The error headline, e.g. `Value mismatch`.
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidatorVerdict {
    /// `Transformation seems to be correct!`
    Correct,
    /// `Transformation doesn't verify!` plus a parsed counterexample.
    DoesntVerify(CounterexampleReport),
    /// Output carried neither verdict (timeout banners, crashes, noise).
    Unknown(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ValidatorParseError {
    #[error("refutation without an Example section")]
    MissingExample,
    #[error("refutation without source/target values")]
    MissingValues,
}

const CORRECT_MARKER: &str = "Transformation seems to be correct!";
const REFUTED_MARKER: &str = "Transformation doesn't verify";

/// Classifies validator output. A refutation that cannot be parsed into a
/// counterexample degrades to `Unknown` with the parse failure as reason.
pub fn classify_validator_output(stdout: &str) -> ValidatorVerdict {
    if stdout.contains(CORRECT_MARKER) {
        return ValidatorVerdict::Correct;
    }
    if stdout.contains(REFUTED_MARKER) {
        return match parse_counterexample(stdout) {
            Ok(report) => ValidatorVerdict::DoesntVerify(report),
            Err(e) => ValidatorVerdict::Unknown(e.to_string()),
        };
    }
    let first = stdout.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    ValidatorVerdict::Unknown(format!("no verdict in output: {first:.80}"))
}

/// Parses the `Example:` block and the source/target values of a refutation.
pub fn parse_counterexample(stdout: &str) -> Result<CounterexampleReport, ValidatorParseError> {
    let mut error = String::new();
    let mut example_bindings = Vec::new();
    let mut source_value = None;
    let mut target_value = None;
    let mut in_example = false;
    for line in stdout.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("ERROR:") {
            error = rest.trim().to_string();
            continue;
        }
        if trimmed == "Example:" {
            in_example = true;
            continue;
        }
        if let Some(v) = trimmed.strip_prefix("Source value:") {
            source_value = Some(v.trim().to_string());
            in_example = false;
            continue;
        }
        if let Some(v) = trimmed.strip_prefix("Target value:") {
            target_value = Some(v.trim().to_string());
            continue;
        }
        if in_example {
            if trimmed.is_empty() {
                continue;
            }
            match trimmed.split_once(" = ") {
                Some((name, value)) => {
                    example_bindings.push((name.trim().to_string(), value.trim().to_string()));
                }
                None => in_example = false,
            }
        }
    }
    if example_bindings.is_empty() {
        return Err(ValidatorParseError::MissingExample);
    }
    match (source_value, target_value) {
        (Some(source_value), Some(target_value)) => Ok(CounterexampleReport {
            example_bindings,
            source_value,
            target_value,
            error,
        }),
        _ => Err(ValidatorParseError::MissingValues),
    }
}

/// Aggregated result of one regression-test run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LitSummary {
    pub passed: u64,
    pub failed: u64,
    /// Names of the failing tests, in output order.
    pub failures: Vec<String>,
}

impl LitSummary {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn total(&self) -> u64 {
        self.passed + self.failed
    }
}

/// Counts `PASS:`/`FAIL:` result lines. Expected failures and unsupported
/// tests are neither passes nor failures.
pub fn parse_lit_output(stdout: &str) -> LitSummary {
    let mut summary = LitSummary::default();
    for line in stdout.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("PASS: ") {
            summary.passed += 1;
        } else if let Some(rest) = trimmed.strip_prefix("FAIL: ") {
            summary.failed += 1;
            summary.failures.push(rest.trim().to_string());
        }
        // XFAIL/XPASS/UNSUPPORTED lines are neither
    }
    summary
}
