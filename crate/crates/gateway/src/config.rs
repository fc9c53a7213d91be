//! Flat `key = value` configuration with `PFG_` environment overrides.
//!
//! ```text
//! # thresholds
//! listen = 127.0.0.1:8080
//! fixtures = fixtures
//! theta_e = 5
//! ```
//!
//! `PFG_THETA_E=4` overrides `theta_e`, and so on for every key.

use std::path::{Path, PathBuf};

use pfg_core::session::SessionConfig;
use pfg_core::sourcegraph::GraphConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub listen: String,
    /// Directory with `types.json`, `services.json` and service tables.
    pub fixtures: PathBuf,
    /// Catalog file read at startup and written by `ingest`.
    pub catalog: Option<PathBuf>,
    pub theta_e: f64,
    pub theta_q: f64,
    pub c0: f64,
    pub gamma: f64,
    pub k: usize,
    pub tau_type: f64,
    pub tau_link: f64,
    /// Timeout for remote service calls, in milliseconds.
    pub service_timeout_ms: u64,
}

impl Default for Config {
    fn default() -> Self {
        let g = GraphConfig::default();
        let s = SessionConfig::default();
        Config {
            listen: "127.0.0.1:8080".into(),
            fixtures: PathBuf::from("fixtures"),
            catalog: None,
            theta_e: g.edge_ceiling,
            theta_q: g.query_ceiling,
            c0: g.default_cost,
            gamma: g.margin,
            k: g.k,
            tau_type: s.type_threshold,
            tau_link: s.link_threshold,
            service_timeout_ms: 5000,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "listen" => self.listen = value.to_string(),
            "fixtures" => self.fixtures = PathBuf::from(value),
            "catalog" => self.catalog = (!value.is_empty()).then(|| PathBuf::from(value)),
            "theta_e" => self.theta_e = parse(key, value)?,
            "theta_q" => self.theta_q = parse(key, value)?,
            "c0" => self.c0 = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "tau_type" => self.tau_type = parse(key, value)?,
            "tau_link" => self.tau_link = parse(key, value)?,
            "service_timeout_ms" => self.service_timeout_ms = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Applies `PFG_*` variables; other variables are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (k, v) in vars {
            if let Some(key) = k.strip_prefix("PFG_") {
                self.set(key, &v)?;
            }
        }
        Ok(())
    }

    /// The config file if given, then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let mut c = match path {
            Some(p) => Config::parse(&std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?)?,
            None => Config::default(),
        };
        c.apply_env(std::env::vars())?;
        Ok(c)
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            edge_ceiling: self.theta_e,
            query_ceiling: self.theta_q,
            default_cost: self.c0,
            margin: self.gamma,
            k: self.k,
        }
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            link_threshold: self.tau_link,
            type_threshold: self.tau_type,
            ..SessionConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let mut c = Config::parse("listen = 0.0.0.0:9000\n# comment\ntheta_e=4 # trailing\nk = 5\n").unwrap();
        assert_eq!(c.listen, "0.0.0.0:9000");
        assert_eq!(c.theta_e, 4.0);
        assert_eq!(c.k, 5);
        assert_eq!(c.gamma, GraphConfig::default().margin);
        c.apply_env([
            ("PFG_THETA_E".to_string(), "3.5".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ])
        .unwrap();
        assert_eq!(c.theta_e, 3.5);
        assert_eq!(c.graph_config().edge_ceiling, 3.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(Config::parse("nonsense"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(Config::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(Config::parse("k = many"), Err(ConfigError::BadValue { .. })));
    }
}
