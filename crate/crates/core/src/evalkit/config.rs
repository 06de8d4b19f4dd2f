//! The versioned configuration file (TOML) and its environment overrides.
//!
//! One file carries everything operators tune: session budgets, price
//! cards, the stack-frame denylist, and subprocess timeouts. CI overrides
//! individual values through `MIDFIX_*` environment variables without
//! editing the file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_tools::BudgetConfig;
use crate::toolchain::ToolchainConfig;

use super::PriceCard;

/// Environment variables with this prefix override file values.
pub const ENV_PREFIX: &str = "MIDFIX_";

pub const CONFIG_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    UnsupportedVersion(u64),
    #[error("bad override {key}={value}: {reason}")]
    BadOverride {
        key: String,
        value: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Model name stamped on run records.
    #[serde(default = "default_model")]
    pub model: String,
    /// Worker threads for the benchmark runner; defaults to host
    /// parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Root of the documentation corpus served to agents.
    #[serde(default)]
    pub doc_root: Option<PathBuf>,
}

fn default_model() -> String {
    "scripted".to_string()
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            model: default_model(),
            workers: None,
            doc_root: None,
        }
    }
}

/// Subprocess timeouts in seconds; mirrors the toolchain configuration.
/// Each field defaults independently so partial sections work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeoutSection {
    #[serde(default = "default_opt_seconds")]
    pub opt_seconds: u64,
    #[serde(default = "default_validator_seconds")]
    pub validator_seconds: u64,
    #[serde(default = "default_build_seconds")]
    pub build_seconds: u64,
    #[serde(default = "default_lit_seconds")]
    pub lit_seconds: u64,
}

fn default_opt_seconds() -> u64 {
    ToolchainConfig::default().opt_timeout.as_secs()
}
fn default_validator_seconds() -> u64 {
    ToolchainConfig::default().validator_timeout.as_secs()
}
fn default_build_seconds() -> u64 {
    ToolchainConfig::default().build_timeout.as_secs()
}
fn default_lit_seconds() -> u64 {
    ToolchainConfig::default().lit_timeout.as_secs()
}

impl Default for TimeoutSection {
    fn default() -> Self {
        TimeoutSection {
            opt_seconds: default_opt_seconds(),
            validator_seconds: default_validator_seconds(),
            build_seconds: default_build_seconds(),
            lit_seconds: default_lit_seconds(),
        }
    }
}

/// The whole harness configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub version: u64,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub price_card: Option<PriceCard>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub timeouts: TimeoutSection,
    /// Stack-frame patterns dropped when filtering crash traces; empty
    /// means the built-in default list.
    #[serde(default)]
    pub frame_denylist: Vec<String>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            version: CONFIG_VERSION,
            budget: BudgetConfig::default(),
            price_card: None,
            run: RunSection::default(),
            timeouts: TimeoutSection::default(),
            frame_denylist: Vec::new(),
        }
    }
}

impl HarnessConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: HarnessConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if config.version != CONFIG_VERSION {
            return Err(ConfigError::UnsupportedVersion(config.version));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The toolchain configuration this file describes.
    pub fn toolchain_config(&self) -> ToolchainConfig {
        let defaults = ToolchainConfig::default();
        ToolchainConfig {
            opt_timeout: Duration::from_secs(self.timeouts.opt_seconds),
            validator_timeout: Duration::from_secs(self.timeouts.validator_seconds),
            build_timeout: Duration::from_secs(self.timeouts.build_seconds),
            lit_timeout: Duration::from_secs(self.timeouts.lit_seconds),
            frame_denylist: if self.frame_denylist.is_empty() {
                defaults.frame_denylist
            } else {
                self.frame_denylist.clone()
            },
        }
    }

    /// Applies `MIDFIX_*` overrides from an explicit variable list
    /// (testable); unknown keys under the prefix are rejected so typos
    /// surface in CI instead of being ignored.
    pub fn apply_overrides<I, K, V>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (key, value) in vars {
            let key = key.as_ref();
            let value = value.as_ref();
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |reason: &str| ConfigError::BadOverride {
                key: key.to_string(),
                value: value.to_string(),
                reason: reason.to_string(),
            };
            let parse_u64 = || value.parse::<u64>().map_err(|e| bad(&e.to_string()));
            let parse_f64 = || value.parse::<f64>().map_err(|e| bad(&e.to_string()));
            match name {
                "MAX_ROUNDS" => self.budget.max_rounds = parse_u64()?,
                "MAX_TOKENS" => self.budget.max_tokens = parse_u64()?,
                "MAX_TURN_CONTEXT" => self.budget.max_turn_context = parse_u64()?,
                "MAX_EDITS" => self.budget.max_edits = parse_u64()?,
                "MAX_TESTS" => self.budget.max_tests = parse_u64()?,
                "WORKERS" => {
                    self.run.workers = Some(
                        value
                            .parse::<usize>()
                            .map_err(|e| bad(&e.to_string()))?,
                    )
                }
                "MODEL" => self.run.model = value.to_string(),
                "DOC_ROOT" => self.run.doc_root = Some(PathBuf::from(value)),
                "PRICE_INPUT" => self.price_card_mut().input = parse_f64()?,
                "PRICE_OUTPUT" => self.price_card_mut().output = parse_f64()?,
                "PRICE_CACHED_INPUT" => self.price_card_mut().cached_input = parse_f64()?,
                "OPT_SECONDS" => self.timeouts.opt_seconds = parse_u64()?,
                "VALIDATOR_SECONDS" => self.timeouts.validator_seconds = parse_u64()?,
                "BUILD_SECONDS" => self.timeouts.build_seconds = parse_u64()?,
                "LIT_SECONDS" => self.timeouts.lit_seconds = parse_u64()?,
                _ => return Err(bad("unknown override key")),
            }
        }
        Ok(())
    }

    /// Applies overrides from the process environment.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_overrides(std::env::vars())
    }

    fn price_card_mut(&mut self) -> &mut PriceCard {
        self.price_card.get_or_insert(PriceCard {
            input: 0.0,
            output: 0.0,
            cached_input: 0.0,
        })
    }
}
