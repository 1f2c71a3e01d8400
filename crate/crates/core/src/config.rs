//! Server configuration: a TOML file plus `DIALOGMAP_*` environment
//! overrides.
//!
//! | key | env | default |
//! |-----|-----|---------|
//! | `listen` | `DIALOGMAP_LISTEN` | `127.0.0.1:7878` |
//! | `log_dir` | `DIALOGMAP_LOG_DIR` | `sessions` |
//! | `max_participants` | `DIALOGMAP_MAX_PARTICIPANTS` | 16 |
//! | `max_in_flight` | `DIALOGMAP_MAX_IN_FLIGHT` | 8 |
//! | `session.mode` | `DIALOGMAP_MODE` (`human` or `ai`) | `AiMap` |
//! | `session.checkpoint_words` | `DIALOGMAP_CHECKPOINT_WORDS` | 50 |
//! | `session.summary_word_limit` | `DIALOGMAP_SUMMARY_WORD_LIMIT` | 6 |
//! | `session.provider.kind` | `DIALOGMAP_PROVIDER` (`mock` or `http`) | `Mock` |
//! | `session.provider.seed` | `DIALOGMAP_MOCK_SEED` | 1 |
//! | `session.provider.endpoint` | `DIALOGMAP_HTTP_ENDPOINT` | |
//! | `session.provider.model` | `DIALOGMAP_HTTP_MODEL` | |
//! | `session.provider.timeout_ms` | `DIALOGMAP_HTTP_TIMEOUT_MS` | 30000 |
//! | `session.provider.max_retries` | `DIALOGMAP_HTTP_MAX_RETRIES` | 1 |
//!
//! The HTTP provider's API key is read from `DIALOGMAP_HTTP_API_KEY` and is
//! never stored in the config.

use crate::types::{ConfigError, Mode, ProviderConfig, SessionConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ENV_PREFIX: &str = "DIALOGMAP_";
const DEFAULT_HTTP_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad value for {key}: {value:?}")]
    Env { key: String, value: String },
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub log_dir: PathBuf,
    pub max_participants: usize,
    pub max_in_flight: usize,
    /// Used for sessions whose first join brings no config.
    pub session: SessionConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: "127.0.0.1:7878".into(),
            log_dir: PathBuf::from("sessions"),
            max_participants: 16,
            max_in_flight: 8,
            session: SessionConfig::mock(Mode::AiMap, 1),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, LoadError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` (if given), applies the process environment and
    /// validates the result.
    pub fn load(path: Option<&Path>) -> Result<Self, LoadError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| LoadError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(std::env::vars())?;
        config.session.validate()?;
        Ok(config)
    }

    /// Applies `DIALOGMAP_*` pairs; other keys are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), LoadError> {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != "DIALOGMAP_HTTP_API_KEY")
            .collect();
        // The provider kind must switch before its fields are set.
        vars.sort_by_key(|(k, _)| k != "DIALOGMAP_PROVIDER");
        for (key, value) in vars {
            self.apply_one(&key, &value)?;
        }
        Ok(())
    }

    fn apply_one(&mut self, key: &str, value: &str) -> Result<(), LoadError> {
        let bad = || LoadError::Env {
            key: key.to_string(),
            value: value.to_string(),
        };
        let num = |v: &str| v.trim().parse::<u64>().map_err(|_| bad());
        let s = &mut self.session;
        match key {
            "DIALOGMAP_LISTEN" => self.listen = value.to_string(),
            "DIALOGMAP_LOG_DIR" => self.log_dir = PathBuf::from(value),
            "DIALOGMAP_MAX_PARTICIPANTS" => self.max_participants = num(value)? as usize,
            "DIALOGMAP_MAX_IN_FLIGHT" => self.max_in_flight = num(value)? as usize,
            "DIALOGMAP_MODE" => {
                s.mode = match value.trim().to_ascii_lowercase().as_str() {
                    "human" | "humanmap" => Mode::HumanMap,
                    "ai" | "aimap" => Mode::AiMap,
                    _ => return Err(bad()),
                }
            }
            "DIALOGMAP_CHECKPOINT_WORDS" => s.checkpoint_words = num(value)? as usize,
            "DIALOGMAP_SUMMARY_WORD_LIMIT" => s.summary_word_limit = num(value)? as usize,
            "DIALOGMAP_PROVIDER" => {
                s.provider = match (value.trim().to_ascii_lowercase().as_str(), &s.provider) {
                    ("mock", ProviderConfig::Mock { .. }) | ("http", ProviderConfig::Http { .. }) => {
                        s.provider.clone()
                    }
                    ("mock", _) => ProviderConfig::Mock { seed: 1 },
                    ("http", _) => ProviderConfig::Http {
                        endpoint: String::new(),
                        model: String::new(),
                        timeout_ms: DEFAULT_HTTP_TIMEOUT_MS,
                        max_retries: 1,
                    },
                    _ => return Err(bad()),
                }
            }
            "DIALOGMAP_MOCK_SEED" => match &mut s.provider {
                ProviderConfig::Mock { seed } => *seed = num(value)?,
                _ => return Err(bad()),
            },
            "DIALOGMAP_HTTP_ENDPOINT" | "DIALOGMAP_HTTP_MODEL" | "DIALOGMAP_HTTP_TIMEOUT_MS"
            | "DIALOGMAP_HTTP_MAX_RETRIES" => {
                let ProviderConfig::Http {
                    endpoint,
                    model,
                    timeout_ms,
                    max_retries,
                } = &mut s.provider
                else {
                    return Err(bad());
                };
                match key {
                    "DIALOGMAP_HTTP_ENDPOINT" => *endpoint = value.to_string(),
                    "DIALOGMAP_HTTP_MODEL" => *model = value.to_string(),
                    "DIALOGMAP_HTTP_TIMEOUT_MS" => *timeout_ms = num(value)?,
                    _ => *max_retries = num(value)? as u32,
                }
            }
            _ => return Err(bad()),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn sample_file_is_the_default() {
        let text = include_str!("../dialogmap.example.toml");
        assert_eq!(ServerConfig::from_toml(text).unwrap(), ServerConfig::default());
    }

    #[test]
    fn toml_then_env() {
        let mut c = ServerConfig::from_toml(
            r#"
listen = "0.0.0.0:9000"
[session]
mode = "HumanMap"
checkpoint_words = 40
summary_word_limit = 6
[session.provider]
kind = "Mock"
seed = 7
"#,
        )
        .unwrap();
        assert_eq!(c.listen, "0.0.0.0:9000");
        assert_eq!(c.session.provider, ProviderConfig::Mock { seed: 7 });
        c.apply_env(env(&[
            ("DIALOGMAP_HTTP_ENDPOINT", "http://localhost:1/v1/chat/completions"),
            ("DIALOGMAP_PROVIDER", "http"),
            ("DIALOGMAP_MODE", "ai"),
            ("PATH", "/bin"),
        ]))
        .unwrap();
        assert_eq!(c.session.mode, Mode::AiMap);
        assert!(matches!(&c.session.provider, ProviderConfig::Http { endpoint, .. } if endpoint.starts_with("http://localhost")));
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(ServerConfig::from_toml("listen = \"x\"\nbogus = 1\n").is_err());
        let mut c = ServerConfig::default();
        assert!(c.apply_env(env(&[("DIALOGMAP_NOPE", "1")])).is_err());
        assert!(c.apply_env(env(&[("DIALOGMAP_CHECKPOINT_WORDS", "many")])).is_err());
    }
}
