//! Service configuration, read from TOML with environment overrides.
//!
//! ```toml
//! bind = "127.0.0.1"
//! port = 8080
//! secret_code = [1, 9, 8, 4]
//! log_dir = "logs"
//! idle_timeout_secs = 1800
//! seed_policy = "random"        # or { fixed = 42 }
//! transfer = true
//! reveal_weights = false         # default for new sessions
//!
//! [engine]
//! beta = 8.0
//! theta = 0.95
//! min_steps = 16
//!
//! [engine.classifier]
//! ridge = 1e-6
//! laplace = 1.0
//! clamp = 1e-12
//! ```
//!
//! `VAULT_PORT` and `VAULT_LOG_DIR` override `port` and `log_dir`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vault_core::engine::EngineParams;
use vault_core::session::CODE_LENGTH;
use vault_core::signal::DEFAULT_SYMBOLS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Fresh random seed per session.
    Random,
    /// Every session uses this seed.
    Fixed(u64),
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub secret_code: Vec<usize>,
    pub log_dir: PathBuf,
    pub idle_timeout_secs: u64,
    pub seed_policy: SeedPolicy,
    pub transfer: bool,
    pub reveal_weights: bool,
    pub engine: EngineParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            secret_code: vec![0, 0, 0, 0],
            log_dir: PathBuf::from("logs"),
            idle_timeout_secs: 30 * 60,
            seed_policy: SeedPolicy::Random,
            transfer: true,
            reveal_weights: false,
            engine: EngineParams::default(),
        }
    }
}

// The secret stays out of debug output and startup lines.
impl fmt::Debug for ServiceConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServiceConfig")
            .field("bind", &self.bind)
            .field("port", &self.port)
            .field("secret_code", &"<redacted>")
            .field("log_dir", &self.log_dir)
            .field("idle_timeout_secs", &self.idle_timeout_secs)
            .field("seed_policy", &self.seed_policy)
            .field("transfer", &self.transfer)
            .field("reveal_weights", &self.reveal_weights)
            .field("engine", &self.engine)
            .finish()
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{var}={value:?} is not a valid value")]
    Env { var: &'static str, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// Applies `VAULT_PORT` / `VAULT_LOG_DIR` from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(value) = lookup("VAULT_PORT") {
            self.port = value.parse().map_err(|_| ConfigError::Env {
                var: "VAULT_PORT",
                value: value.clone(),
            })?;
        }
        if let Some(value) = lookup("VAULT_LOG_DIR") {
            if value.is_empty() {
                return Err(ConfigError::Env {
                    var: "VAULT_LOG_DIR",
                    value,
                });
            }
            self.log_dir = PathBuf::from(value);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.secret_code.len() != CODE_LENGTH || self.secret_code.iter().any(|&d| d >= DEFAULT_SYMBOLS) {
            return Err(ConfigError::Invalid(format!(
                "secret_code must be {CODE_LENGTH} digits in 0..{DEFAULT_SYMBOLS}"
            )));
        }
        if self.idle_timeout_secs == 0 {
            return Err(ConfigError::Invalid("idle_timeout_secs must be positive".into()));
        }
        self.engine
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ServiceConfig, ConfigError> {
        ServiceConfig::from_toml_str(text, Path::new("vault.toml"))
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let c = parse(&doc).unwrap();
        assert_eq!(c.secret_code, vec![1, 9, 8, 4]);
        assert_eq!(c.seed_policy, SeedPolicy::Random);
        assert_eq!(c.engine, EngineParams::default());
        c.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c, ServiceConfig::default());
        assert_eq!(c.idle_timeout_secs, 1800);
    }

    #[test]
    fn fixed_seed_and_partial_engine() {
        let c = parse("seed_policy = { fixed = 42 }\n[engine]\nbeta = 2.5\n").unwrap();
        assert_eq!(c.seed_policy, SeedPolicy::Fixed(42));
        assert_eq!(c.engine.beta, 2.5);
        assert_eq!(c.engine.theta, 0.95);
    }

    #[test]
    fn parse_error_names_path_and_line() {
        let err = parse("port = 80\nport = \"x\"\n").unwrap_err().to_string();
        assert!(err.starts_with("vault.toml:"), "{err}");
        assert!(err.contains("line 2"), "{err}");
        assert!(parse("bogus = 1").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = ServiceConfig::default();
        c.apply_env(|k| match k {
            "VAULT_PORT" => Some("9001".into()),
            "VAULT_LOG_DIR" => Some("/tmp/v".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((c.port, c.log_dir.as_path()), (9001, Path::new("/tmp/v")));
        assert!(c.apply_env(|_| Some("nope".into())).is_err());
    }

    #[test]
    fn validation() {
        let mut c = ServiceConfig::default();
        c.secret_code = vec![1, 2, 3];
        assert!(c.validate().is_err());
        c.secret_code = vec![1, 2, 3, 10];
        assert!(c.validate().is_err());
        c = ServiceConfig::default();
        c.engine.theta = 0.4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn debug_hides_secret() {
        let mut c = ServiceConfig::default();
        c.secret_code = vec![7, 3, 5, 1];
        assert!(!format!("{c:?}").contains("7, 3, 5, 1"));
    }
}
