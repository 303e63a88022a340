//! Pipeline configuration and its flat key-value file format (TOML).

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Stage toggles, loop bounds and model parameters for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub decompose: bool,
    pub use_routing: bool,
    pub use_reflexion: bool,
    pub max_reflexion_attempts: u32,
    pub top_k: usize,
    pub model: String,
    pub temperature: f64,
    /// Per-request timeout in seconds.
    pub request_timeout: u64,
    pub max_retries: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            decompose: true,
            use_routing: true,
            use_reflexion: true,
            max_reflexion_attempts: 3,
            top_k: 5,
            model: "gpt-4o".to_string(),
            temperature: 0.0,
            request_timeout: 60,
            max_retries: 3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_reflexion_attempts < 1 {
            return Err(ConfigError::Invalid("max_reflexion_attempts must be at least 1".into()));
        }
        if self.top_k < 1 {
            return Err(ConfigError::Invalid("top_k must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError::Invalid("temperature must be a finite value >= 0".into()));
        }
        if self.model.trim().is_empty() {
            return Err(ConfigError::Invalid("model must not be empty".into()));
        }
        Ok(())
    }

    /// Parses and validates the file form. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: PipelineConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("config fields are all TOML-representable")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Number of retrieval attempts a subquery may spend.
    pub fn attempt_budget(&self) -> u32 {
        if self.use_reflexion {
            self.max_reflexion_attempts
        } else {
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_experiment_settings() {
        let c = PipelineConfig::default();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_retries, 3);
        assert_eq!(c.request_timeout, 60);
        assert_eq!(c.max_reflexion_attempts, 3);
        assert_eq!(c.top_k, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = PipelineConfig::parse("decompose = true\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "{err}");
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = PipelineConfig::parse("use_routing = false\ntop_k = 2\n").unwrap();
        assert!(!c.use_routing);
        assert_eq!(c.top_k, 2);
        assert!(c.decompose);
    }

    #[test]
    fn bounds_enforced() {
        assert!(PipelineConfig::parse("max_reflexion_attempts = 0").is_err());
        assert!(PipelineConfig::parse("top_k = 0").is_err());
        assert!(PipelineConfig::parse("temperature = -0.5").is_err());
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(
            decompose: bool, use_routing: bool, use_reflexion: bool,
            max_reflexion_attempts in 1u32..20, top_k in 1usize..100,
            model in "[a-z][a-z0-9.-]{0,15}", temperature in 0.0f64..2.0,
            request_timeout in 0u64..1000, max_retries in 0u32..10,
        ) {
            let c = PipelineConfig { decompose, use_routing, use_reflexion, max_reflexion_attempts, top_k, model, temperature, request_timeout, max_retries };
            prop_assert_eq!(PipelineConfig::parse(&c.render()).unwrap(), c);
        }
    }
}
