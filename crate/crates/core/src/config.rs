//! JSON sweep configuration with `key=value` overrides.
//!
//! | key            | type                      | range           | default     |
//! |----------------|---------------------------|-----------------|-------------|
//! | `alphas`       | array of numbers          | each `>= 0`     | required    |
//! | `betas`        | array of numbers          | each in `[0,1]` | required    |
//! | `n_items`      | integer                   | `>= 2`          | `100`       |
//! | `steps`        | integer                   | `>= 1`          | `100000`    |
//! | `n_runs`       | integer                   | `>= 1`          | `50`        |
//! | `master_seed`  | unsigned 64-bit integer   | any             | `1`         |
//! | `tie_rank_mode`| `"max_rank"`/`"min_rank"` |                 | `"max_rank"`|
//! | `tau_variant`  | `"tau_b"`/`"tau_a"`       |                 | `"tau_b"`   |
//! | `trace`        | object or `null`          |                 | `null`      |
//! | `trace.points` | integer                   | `[1, steps]`    | `20`        |
//! | `trace.scale`  | `"log"`/`"linear"`        |                 | `"log"`     |

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::experiment::SweepConfig;

const TOP_LEVEL_KEYS: [&str; 9] = [
    "alphas",
    "betas",
    "n_items",
    "steps",
    "n_runs",
    "master_seed",
    "tie_rank_mode",
    "tau_variant",
    "trace",
];
const TRACE_KEYS: [&str; 2] = ["points", "scale"];
const REQUIRED_KEYS: [&str; 2] = ["alphas", "betas"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config must be a JSON object")]
    NotAnObject,
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("`{key}` out of range: {message}")]
    OutOfRange { key: String, message: String },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
}

impl ConfigError {
    pub(crate) fn out_of_range(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::OutOfRange {
            key: key.into(),
            message: message.into(),
        }
    }

    /// The offending key, when the error concerns one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey(k) | ConfigError::MissingKey(k) => Some(k),
            ConfigError::InvalidValue { key, .. } | ConfigError::OutOfRange { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn syntax_error(e: serde_json::Error) -> ConfigError {
    ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Reads `path` (or starts from `{}` when `None`), applies overrides in order,
/// and validates the result.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<SweepConfig, ConfigError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => "{}".to_owned(),
    };
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<SweepConfig, ConfigError> {
    let mut value: Value = serde_json::from_str(text).map_err(syntax_error)?;
    let root = value.as_object_mut().ok_or(ConfigError::NotAnObject)?;
    for o in overrides {
        apply_override(root, o)?;
    }
    config_from_object(root)
}

/// Applies one `key=value` override. The value is read as JSON when it
/// parses, otherwise as a bare string; `trace.points=10` addresses a nested key.
pub fn apply_override(root: &mut Map<String, Value>, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(assignment.to_owned()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(assignment.to_owned()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_owned()));

    let mut path = key.split('.').peekable();
    let mut target = root;
    while let Some(part) = path.next() {
        if path.peek().is_none() {
            target.insert(part.to_owned(), value);
            break;
        }
        let slot = target
            .entry(part.to_owned())
            .or_insert_with(|| Value::Object(Map::new()));
        if slot.is_null() {
            *slot = Value::Object(Map::new());
        }
        target = slot.as_object_mut().ok_or_else(|| ConfigError::InvalidValue {
            key: key.to_owned(),
            message: format!("`{part}` is not an object"),
        })?;
    }
    Ok(())
}

fn config_from_object(root: &Map<String, Value>) -> Result<SweepConfig, ConfigError> {
    if let Some(k) = root.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
        return Err(ConfigError::UnknownKey(k.clone()));
    }
    if let Some(Value::Object(trace)) = root.get("trace") {
        if let Some(k) = trace.keys().find(|k| !TRACE_KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(format!("trace.{k}")));
        }
    }
    if let Some(k) = REQUIRED_KEYS.iter().find(|k| !root.contains_key(**k)) {
        return Err(ConfigError::MissingKey((*k).to_owned()));
    }

    let config: SweepConfig =
        serde_path_to_error::deserialize(Value::Object(root.clone())).map_err(|e| {
            ConfigError::InvalidValue {
                key: e.path().to_string(),
                message: e.inner().to_string(),
            }
        })?;
    config.validate()?;
    Ok(config)
}

/// Serializes a config so that [`parse_config_str`] returns it unchanged.
pub fn config_to_json(config: &SweepConfig) -> String {
    serde_json::to_string_pretty(config).expect("config is always serializable")
}
