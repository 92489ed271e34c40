//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys are the field names of [`RunConfig`]; missing keys keep their
//! defaults and unknown or repeated keys are errors.

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::types::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("line {line}: unknown key `{name}`")]
    UnknownKey { line: usize, name: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

impl From<ConfigError> for ConfigLoadError {
    fn from(e: ConfigError) -> Self {
        let ConfigError::InvalidValue { key, reason } = e;
        ConfigLoadError::InvalidValue { key, reason }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, ConfigLoadError> {
    raw.parse().map_err(|_| ConfigLoadError::InvalidValue {
        key: key.to_string(),
        reason: format!("cannot parse `{raw}`"),
    })
}

fn assign(cfg: &mut RunConfig, key: &str, raw: &str) -> Result<bool, ConfigLoadError> {
    macro_rules! fields {
        ($($name:ident),* $(,)?) => {
            match key {
                $(stringify!($name) => cfg.$name = parse_value(key, raw)?,)*
                _ => return Ok(false),
            }
        };
    }
    fields!(
        alpha, beta1, beta2, gamma, k_stage1, k_stage2, batch_size, prompt_count, delta_min,
        lambda_std, clip_eps, kl_beta, learning_rate, weight_decay, adv_eps, seed, stage1_steps,
        stage2_steps, dataset_size, feature_dim, dataset_noise, init_log_sigma,
    );
    Ok(true)
}

/// Parses configuration text and validates the result.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigLoadError> {
    let mut cfg = RunConfig::default();
    let mut seen = HashSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigLoadError::ParseError { line, reason: "expected `key = value`".into() });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigLoadError::ParseError { line, reason: "empty key or value".into() });
        }
        if !assign(&mut cfg, key, value)? {
            return Err(ConfigLoadError::UnknownKey { line, name: key.to_string() });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigLoadError::ParseError { line, reason: format!("`{key}` set twice") });
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigLoadError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Renders `cfg` in the same format, one key per line.
pub fn render_config(cfg: &RunConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    let mut out = String::new();
    for (k, v) in value.as_object().expect("config is an object") {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}
