//! Engine configuration file shared by the service and the command line.
//!
//! TOML, every section optional:
//!
//! ```toml
//! [embedder]          # EmbedderConfig: dimension, salt, weights, refinement
//! dimension = 128
//!
//! [interpolation]     # InterpolationConfig, camelCase keys as in the HTTP API
//! N = 3
//! lambdaRel = 0.15
//!
//! [data]              # DataConfig: outlier_z, trend_epsilon, caps, ...
//! outlier_z = 3.0
//!
//! [server]
//! listen = "127.0.0.1:8080"
//! body_limit = 10485760
//! persistence_root = "storyweave-data"
//! ```
//!
//! `STORYWEAVE_LISTEN` and `STORYWEAVE_ROOT` override the listen address and
//! the persistence root.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataConfig;
use crate::embed::EmbedderConfig;
use crate::interp::InterpolationConfig;

pub const ENV_LISTEN: &str = "STORYWEAVE_LISTEN";
pub const ENV_ROOT: &str = "STORYWEAVE_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    /// Largest accepted request body in bytes.
    pub body_limit: usize,
    pub persistence_root: PathBuf,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            listen: "127.0.0.1:8080".into(),
            body_limit: 10 * 1024 * 1024,
            persistence_root: PathBuf::from("storyweave-data"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfigFile {
    pub embedder: EmbedderConfig,
    pub interpolation: InterpolationConfig,
    pub data: DataConfig,
    pub server: ServerConfig,
}

impl EngineConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Apply overrides looked up through `var` (normally `std::env::var`).
    pub fn apply_overrides(
        &mut self,
        var: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        if let Some(listen) = var(ENV_LISTEN) {
            self.server.listen = listen;
        }
        if let Some(root) = var(ENV_ROOT) {
            self.server.persistence_root = PathBuf::from(root);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.embedder.validate() {
            return invalid(format!("[embedder] {e}"));
        }
        if let Err(e) = self.interpolation.validate() {
            return invalid(format!("[interpolation] {e}"));
        }
        let d = &self.data;
        if !(d.outlier_z.is_finite() && d.outlier_z > 0.0) {
            return invalid("[data] outlier_z must be positive".into());
        }
        if !(d.trend_epsilon.is_finite() && d.trend_epsilon >= 0.0) {
            return invalid("[data] trend_epsilon must be non-negative".into());
        }
        if d.min_trend_groups < 2 || d.min_breakdown_groups < 1 {
            return invalid("[data] min_trend_groups must be >= 2 and min_breakdown_groups >= 1".into());
        }
        if self.server.listen.parse::<SocketAddr>().is_err() {
            return invalid(format!(
                "[server] listen `{}` is not a socket address",
                self.server.listen
            ));
        }
        if self.server.body_limit == 0 {
            return invalid("[server] body_limit must be positive".into());
        }
        if self.server.persistence_root.as_os_str().is_empty() {
            return invalid("[server] persistence_root is empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(EngineConfigFile::from_toml_str("").unwrap(), EngineConfigFile::default());
    }

    #[test]
    fn sections_parse() {
        let cfg = EngineConfigFile::from_toml_str(
            "[embedder]\ndimension = 64\n[interpolation]\nN = 5\nlambdaRel = 0.2\n\
             [data]\noutlier_z = 2.5\n[server]\nlisten = \"0.0.0.0:9000\"\n",
        )
        .unwrap();
        assert_eq!(cfg.embedder.dimension, 64);
        assert_eq!(cfg.interpolation.n, 5);
        assert_eq!(cfg.data.outlier_z, 2.5);
        assert_eq!(cfg.server.listen, "0.0.0.0:9000");
    }

    #[test]
    fn bad_values_are_named() {
        let e = EngineConfigFile::from_toml_str("[interpolation]\nN = 0\n").unwrap_err();
        assert!(e.to_string().contains("[interpolation]"), "{e}");
        let e = EngineConfigFile::from_toml_str("[server]\nlisten = \"nowhere\"\n").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid(_)));
        let e = EngineConfigFile::from_toml_str("[sever]\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse(_)));
    }

    #[test]
    fn overrides() {
        let mut cfg = EngineConfigFile::default();
        cfg.apply_overrides(|k| match k {
            ENV_LISTEN => Some("127.0.0.1:1".into()),
            ENV_ROOT => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.server.listen, "127.0.0.1:1");
        assert_eq!(cfg.server.persistence_root, PathBuf::from("/tmp/x"));
    }
}
